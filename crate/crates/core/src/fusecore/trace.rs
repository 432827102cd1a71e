use std::fmt;

use crate::multistep::MultistepScheme;

/// One scheduler step: the explicit predictor and, except for the final
/// step, the corrector, each with the 1-based node window it consumed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceStep {
    pub index: usize,
    pub predictor: MultistepScheme,
    pub predictor_window: (usize, usize),
    pub corrector: Option<(MultistepScheme, (usize, usize))>,
}

/// Record of the scheme choices made by one decode over `levels` stages.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScheduleTrace {
    pub levels: usize,
    pub max_order: usize,
    pub steps: Vec<TraceStep>,
    pub rhs_evaluations: usize,
}

impl ScheduleTrace {
    /// Step size `1/L` as `(numerator, denominator)`.
    pub fn delta(&self) -> (usize, usize) {
        (1, self.levels)
    }

    pub fn final_step(&self) -> &TraceStep {
        self.steps.last().expect("a trace always ends with the final step")
    }
}

impl fmt::Display for TraceStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = self.predictor_window;
        write!(f, "i={} pred={} ", self.index, self.predictor.name())?;
        match &self.corrector {
            Some((c, _)) => write!(f, "corr={} ", c.name())?,
            None => f.write_str("corr=none ")?,
        }
        write!(f, "hist={a}..{b}")
    }
}

impl fmt::Display for ScheduleTrace {
    /// One line per step:
    /// `i=<k> pred=<scheme> corr=<scheme|none> hist=<a..b> delta=1/L pred_b=<coeffs>`
    /// followed by `corr_hist=<a..b> corr_b=<coeffs>` when a corrector ran.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (num, den) = self.delta();
        for step in &self.steps {
            write!(
                f,
                "{step} delta={num}/{den} pred_b={}",
                step.predictor.format_coeffs(",")
            )?;
            if let Some((c, (a, b))) = &step.corrector {
                write!(f, " corr_hist={a}..{b} corr_b={}", c.format_coeffs(","))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
