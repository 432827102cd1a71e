use super::{Family, MultistepScheme, RhsHistory};
use crate::diffarray::TensorOps;
use crate::error::{Error, Result};

/// Linear combination of states, the only algebra a multistep step needs.
pub trait Combine<S> {
    /// `Σ_j coeffs[j]·terms[j]`.
    fn combine(&mut self, coeffs: &[f64], terms: &[&S]) -> Result<S>;
}

/// Plain `Vec<f64>` states for scalar and small-system ODEs.
#[derive(Clone, Copy, Debug, Default)]
pub struct VecSpace;

impl Combine<Vec<f64>> for VecSpace {
    fn combine(&mut self, coeffs: &[f64], terms: &[&Vec<f64>]) -> Result<Vec<f64>> {
        let first = terms
            .first()
            .ok_or_else(|| Error::dim("combination of zero states"))?;
        if coeffs.len() != terms.len() {
            return Err(Error::dim("coefficient/state count mismatch"));
        }
        let mut out = vec![0.0; first.len()];
        for (&c, t) in coeffs.iter().zip(terms) {
            if t.len() != out.len() {
                return Err(Error::dim(format!(
                    "state length {} vs {}",
                    t.len(),
                    out.len()
                )));
            }
            for (o, v) in out.iter_mut().zip(t.iter()) {
                *o += c * v;
            }
        }
        Ok(out)
    }
}

impl<B: TensorOps> Combine<B::Value> for B {
    fn combine(&mut self, coeffs: &[f64], terms: &[&B::Value]) -> Result<B::Value> {
        self.weighted_sum(coeffs, terms)
    }
}

fn expect_family(scheme: &MultistepScheme, family: Family) -> Result<()> {
    if scheme.family() != family {
        return Err(Error::Contract(format!(
            "{} used where an {} scheme is required",
            scheme.name(),
            family.tag()
        )));
    }
    Ok(())
}

/// Explicit step `y + δ·Σ_j b_j F_j` over the `s` newest history entries.
pub fn ab_step<S, C: Combine<S>>(
    space: &mut C,
    scheme: &MultistepScheme,
    y: &S,
    hist: &RhsHistory<S>,
    delta: f64,
) -> Result<S> {
    expect_family(scheme, Family::Ab)?;
    let window = hist.latest(scheme.history_len())?;
    let mut coeffs = Vec::with_capacity(window.len() + 1);
    coeffs.push(1.0);
    coeffs.extend(scheme.coeffs_f64().into_iter().map(|b| delta * b));
    let mut terms = Vec::with_capacity(window.len() + 1);
    terms.push(y);
    terms.extend(window);
    space.combine(&coeffs, &terms)
}

/// Implicit-formula step with the newest right-hand side supplied as `f_new`.
pub fn am_step<S, C: Combine<S>>(
    space: &mut C,
    scheme: &MultistepScheme,
    y: &S,
    hist: &RhsHistory<S>,
    f_new: &S,
    delta: f64,
) -> Result<S> {
    expect_family(scheme, Family::Am)?;
    let window = hist.latest(scheme.history_len())?;
    let mut coeffs = Vec::with_capacity(window.len() + 2);
    coeffs.push(1.0);
    coeffs.extend(scheme.coeffs_f64().into_iter().map(|b| delta * b));
    let mut terms = Vec::with_capacity(window.len() + 2);
    terms.push(y);
    terms.extend(window);
    terms.push(f_new);
    space.combine(&coeffs, &terms)
}

/// Predict with `pred`, evaluate the right-hand side once at the prediction,
/// then correct with `corr` starting again from `y`.
///
/// Returns the corrected state and the right-hand side evaluated at the
/// *predicted* state; the latter is what belongs in the history.
#[allow(clippy::too_many_arguments)]
pub fn pc_step<S, C, R>(
    space: &mut C,
    pred: &MultistepScheme,
    corr: &MultistepScheme,
    mut rhs: R,
    t_next: f64,
    y: &S,
    hist: &RhsHistory<S>,
    delta: f64,
) -> Result<(S, S)>
where
    C: Combine<S>,
    R: FnMut(&mut C, f64, &S) -> Result<S>,
{
    let predicted = ab_step(space, pred, y, hist, delta)?;
    let f_next = rhs(space, t_next, &predicted)?;
    let y_next = am_step(space, corr, y, hist, &f_next, delta)?;
    Ok((y_next, f_next))
}

/// Step counts `(predictor, corrector)` used when advancing from node `i`
/// (1-based) with the adaptive start-up: `(i, i)` while `i < 4`, then
/// `(4, 3)`. `max_order` caps both (the corrector never exceeds 3 steps).
pub fn adaptive_pair(i: usize, max_order: usize) -> (usize, usize) {
    let cap = max_order.clamp(1, 4);
    let p = i.clamp(1, cap);
    (p, p.min(3))
}
