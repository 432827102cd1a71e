use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    /// Explicit Adams-Bashforth.
    Ab,
    /// Implicit Adams-Moulton.
    Am,
}

impl Family {
    pub fn tag(self) -> &'static str {
        match self {
            Family::Ab => "AB",
            Family::Am => "AM",
        }
    }

    pub fn max_steps(self) -> usize {
        match self {
            Family::Ab => 4,
            Family::Am => 3,
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ab" | "adams-bashforth" => Ok(Family::Ab),
            "am" | "adams-moulton" => Ok(Family::Am),
            other => Err(Error::UnsupportedScheme {
                family: other.to_string(),
                steps: 0,
            }),
        }
    }
}

// Numerators oldest-to-newest over a common denominator, as tabulated.
const AB: [(&[i64], i64); 4] = [
    (&[1], 1),
    (&[-1, 3], 2),
    (&[5, -16, 23], 12),
    (&[-9, 37, -59, 55], 24),
];

const AM: [(&[i64], i64); 3] = [
    (&[1, 1], 2),
    (&[-1, 8, 5], 12),
    (&[1, -5, 19, 9], 24),
];

/// One Adams scheme with exact rational weights.
///
/// Weights are kept as integer numerators over the shared denominator of the
/// classical table (`δ/24·(55F_{n+3} − …)`), so `b_j = numerators[j] / denominator`
/// and nothing is reduced or rounded until a step converts them to `f64`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MultistepScheme {
    family: Family,
    steps: usize,
    numerators: Vec<i64>,
    denominator: i64,
}

pub fn scheme_coeffs(family: Family, steps: usize) -> Result<MultistepScheme> {
    MultistepScheme::new(family, steps)
}

impl MultistepScheme {
    pub fn new(family: Family, steps: usize) -> Result<Self> {
        let row = match family {
            Family::Ab => steps.checked_sub(1).and_then(|i| AB.get(i)),
            Family::Am => steps.checked_sub(1).and_then(|i| AM.get(i)),
        };
        let (nums, den) = row.ok_or_else(|| Error::UnsupportedScheme {
            family: family.tag().to_string(),
            steps,
        })?;
        Ok(MultistepScheme {
            family,
            steps,
            numerators: nums.to_vec(),
            denominator: *den,
        })
    }

    pub fn ab(steps: usize) -> Result<Self> {
        Self::new(Family::Ab, steps)
    }

    pub fn am(steps: usize) -> Result<Self> {
        Self::new(Family::Am, steps)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_explicit(&self) -> bool {
        self.family == Family::Ab
    }

    /// Nominal order of accuracy: `s` for AB, `s + 1` for AM.
    pub fn order(&self) -> usize {
        match self.family {
            Family::Ab => self.steps,
            Family::Am => self.steps + 1,
        }
    }

    /// Number of past right-hand-side values read from the history.
    pub fn history_len(&self) -> usize {
        self.steps
    }

    pub fn numerators(&self) -> &[i64] {
        &self.numerators
    }

    pub fn denominator(&self) -> i64 {
        self.denominator
    }

    /// `(numerator, denominator)` pairs oldest-to-newest.
    pub fn rational_coeffs(&self) -> Vec<(i64, i64)> {
        self.numerators.iter().map(|&n| (n, self.denominator)).collect()
    }

    pub fn coeffs_f64(&self) -> Vec<f64> {
        let d = self.denominator as f64;
        self.numerators.iter().map(|&n| n as f64 / d).collect()
    }

    /// Σ b_j == 1, checked in integers.
    pub fn is_consistent(&self) -> bool {
        self.numerators.iter().sum::<i64>() == self.denominator
    }

    pub fn name(&self) -> String {
        format!("{}{}", self.family.tag(), self.steps)
    }

    /// Coefficients rendered as `n/d` tokens joined by `sep`; a unit
    /// denominator prints the bare numerator.
    pub fn format_coeffs(&self, sep: &str) -> String {
        self.numerators
            .iter()
            .map(|&n| {
                if self.denominator == 1 {
                    n.to_string()
                } else {
                    format!("{n}/{}", self.denominator)
                }
            })
            .collect::<Vec<_>>()
            .join(sep)
    }
}

impl fmt::Display for MultistepScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.family.tag(), self.steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tabulated_rows() {
        let ab2 = MultistepScheme::ab(2).unwrap();
        assert_eq!(ab2.rational_coeffs(), vec![(-1, 2), (3, 2)]);
        let am3 = MultistepScheme::am(3).unwrap();
        assert_eq!(am3.rational_coeffs(), vec![(1, 24), (-5, 24), (19, 24), (9, 24)]);
        let ab1 = MultistepScheme::ab(1).unwrap();
        assert_eq!(ab1.format_coeffs(" "), "1");
        assert_eq!(
            MultistepScheme::ab(4).unwrap().format_coeffs(" "),
            "-9/24 37/24 -59/24 55/24"
        );
        assert_eq!(MultistepScheme::am(1).unwrap().format_coeffs(" "), "1/2 1/2");
    }

    #[test]
    fn orders_and_lengths() {
        for s in 1..=4 {
            let ab = MultistepScheme::ab(s).unwrap();
            assert_eq!(ab.order(), s);
            assert_eq!(ab.numerators().len(), s);
        }
        for s in 1..=3 {
            let am = MultistepScheme::am(s).unwrap();
            assert_eq!(am.order(), s + 1);
            assert_eq!(am.numerators().len(), s + 1);
            assert_ne!(*am.numerators().last().unwrap(), 0);
        }
    }

    #[test]
    fn every_scheme_is_consistent() {
        for s in 1..=4 {
            assert!(MultistepScheme::ab(s).unwrap().is_consistent());
        }
        for s in 1..=3 {
            assert!(MultistepScheme::am(s).unwrap().is_consistent());
        }
    }

    #[test]
    fn unsupported_step_counts() {
        for (fam, s) in [(Family::Ab, 0), (Family::Ab, 5), (Family::Ab, 9), (Family::Am, 4), (Family::Am, 0)] {
            assert!(matches!(
                MultistepScheme::new(fam, s),
                Err(Error::UnsupportedScheme { .. })
            ));
        }
    }
}
