use std::fmt;
use std::sync::Arc;

use super::{ab_step, adaptive_pair, pc_step, MultistepScheme, RhsHistory, VecSpace};
use crate::error::{Error, Result};

pub type RhsFn = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;
pub type ExactFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// `y' = rhs(t, y)`, `y(t0) = y0`, integrated up to `t1`.
#[derive(Clone)]
pub struct IvpProblem {
    pub rhs: RhsFn,
    pub y0: Vec<f64>,
    pub t0: f64,
    pub t1: f64,
    pub exact: Option<ExactFn>,
}

impl fmt::Debug for IvpProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IvpProblem")
            .field("y0", &self.y0)
            .field("t0", &self.t0)
            .field("t1", &self.t1)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl IvpProblem {
    pub fn new(
        rhs: impl Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static,
        y0: Vec<f64>,
        t0: f64,
        t1: f64,
    ) -> Result<Self> {
        if !(t1 > t0) {
            return Err(Error::Config(format!("interval [{t0}, {t1}] is empty")));
        }
        Ok(IvpProblem {
            rhs: Arc::new(rhs),
            y0,
            t0,
            t1,
            exact: None,
        })
    }

    pub fn with_exact(mut self, exact: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.exact = Some(Arc::new(exact));
        self
    }

    pub fn eval(&self, t: f64, y: &[f64]) -> Vec<f64> {
        (self.rhs)(t, y)
    }
}

/// How `solve_ivp` advances the solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SolveMode {
    /// `s`-step Adams-Bashforth after an `s`-node start-up.
    PureAb(usize),
    /// Predictor-corrector: `pred`-step AB then `corr`-step AM, one RHS
    /// evaluation per step.
    Pc { pred: usize, corr: usize },
    /// Start from a single node and raise the order as history accumulates:
    /// PC(AB_i, AM_i) for `i < 4`, PC(AB4, AM3) afterwards.
    AdaptiveBootstrap,
}

impl SolveMode {
    /// Nodes (including the initial one) that must be known before the
    /// scheme proper can take its first step.
    pub fn startup_nodes(self) -> usize {
        match self {
            SolveMode::PureAb(s) => s,
            SolveMode::Pc { pred, corr } => pred.max(corr),
            SolveMode::AdaptiveBootstrap => 1,
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            SolveMode::PureAb(s) => MultistepScheme::ab(s).map(|_| ()),
            SolveMode::Pc { pred, corr } => {
                MultistepScheme::ab(pred)?;
                MultistepScheme::am(corr).map(|_| ())
            }
            SolveMode::AdaptiveBootstrap => Ok(()),
        }
    }
}

impl fmt::Display for SolveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveMode::PureAb(s) => write!(f, "AB{s}"),
            SolveMode::Pc { pred, corr } => write!(f, "PC(AB{pred},AM{corr})"),
            SolveMode::AdaptiveBootstrap => f.write_str("adaptive"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub points: Vec<(f64, Vec<f64>)>,
}

impl Trajectory {
    pub fn last(&self) -> &(f64, Vec<f64>) {
        self.points.last().expect("trajectory always holds the initial point")
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn advance(
    problem: &IvpProblem,
    pred: usize,
    corr: Option<usize>,
    t_next: f64,
    y: &Vec<f64>,
    hist: &RhsHistory<Vec<f64>>,
    delta: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let ab = MultistepScheme::ab(pred)?;
    match corr {
        None => {
            let y_next = ab_step(&mut VecSpace, &ab, y, hist, delta)?;
            let f_next = problem.eval(t_next, &y_next);
            Ok((y_next, f_next))
        }
        Some(c) => {
            let am = MultistepScheme::am(c)?;
            pc_step(
                &mut VecSpace,
                &ab,
                &am,
                |_, t, y: &Vec<f64>| Ok(problem.eval(t, y)),
                t_next,
                y,
                hist,
                delta,
            )
        }
    }
}

/// Fixed-step integration with `n_steps` uniform steps of `(t1 - t0)/n_steps`.
///
/// Start-up nodes come from the analytic solution when the problem has one,
/// otherwise from the adaptive bootstrap.
pub fn solve_ivp(problem: &IvpProblem, mode: SolveMode, n_steps: usize) -> Result<Trajectory> {
    mode.validate()?;
    let startup = mode.startup_nodes();
    if n_steps == 0 || n_steps < startup {
        return Err(Error::Config(format!(
            "{mode} needs at least {startup} steps, got {n_steps}"
        )));
    }
    let delta = (problem.t1 - problem.t0) / n_steps as f64;
    let time = |j: usize| {
        if j == n_steps {
            problem.t1
        } else {
            problem.t0 + j as f64 * delta
        }
    };

    let mut hist = RhsHistory::new();
    let mut points = Vec::with_capacity(n_steps + 1);
    let mut y = problem.y0.clone();
    hist.push(0, problem.eval(problem.t0, &y))?;
    points.push((problem.t0, y.clone()));

    for j in 1..startup {
        let t = time(j);
        let (y_next, f_next) = match &problem.exact {
            Some(exact) => {
                let yj = exact(t);
                let fj = problem.eval(t, &yj);
                (yj, fj)
            }
            None => {
                let (p, c) = adaptive_pair(j, 4);
                advance(problem, p, Some(c), t, &y, &hist, delta)?
            }
        };
        hist.push(j, f_next)?;
        y = y_next;
        points.push((t, y.clone()));
    }

    for m in startup - 1..n_steps {
        let t = time(m + 1);
        let (p, c) = match mode {
            SolveMode::PureAb(s) => (s, None),
            SolveMode::Pc { pred, corr } => (pred, Some(corr)),
            SolveMode::AdaptiveBootstrap => {
                let (p, c) = adaptive_pair(m + 1, 4);
                (p, Some(c))
            }
        };
        let (y_next, f_next) = advance(problem, p, c, t, &y, &hist, delta)?;
        hist.push(m + 1, f_next)?;
        y = y_next;
        points.push((t, y.clone()));
    }
    Ok(Trajectory { points })
}

/// Max-norm error at `t1` after `n_steps`.
pub fn final_error(problem: &IvpProblem, mode: SolveMode, n_steps: usize) -> Result<f64> {
    let exact = problem
        .exact
        .as_ref()
        .ok_or_else(|| Error::Config("error study needs an analytic solution".into()))?;
    let traj = solve_ivp(problem, mode, n_steps)?;
    let reference = exact(problem.t1);
    Ok(traj
        .last()
        .1
        .iter()
        .zip(&reference)
        .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
}

/// Errors at or below this multiple of machine epsilon (relative to the
/// solution size) count as exact integration.
const EXACT_FLOOR_ULPS: f64 = 64.0;

pub(crate) fn is_exact(err: f64, scale: f64) -> bool {
    err <= EXACT_FLOOR_ULPS * f64::EPSILON * scale.max(1.0)
}

/// Richardson slope `log2(err(n) / err(2n))` of the final-time max-norm error.
///
/// Returns `f64::INFINITY` when the refined run is exact to rounding.
pub fn empirical_order(problem: &IvpProblem, mode: SolveMode, n_coarse: usize) -> Result<f64> {
    if n_coarse < 8 {
        return Err(Error::Config(format!(
            "order estimate needs at least 8 coarse steps, got {n_coarse}"
        )));
    }
    let coarse = final_error(problem, mode, n_coarse)?;
    let fine = final_error(problem, mode, 2 * n_coarse)?;
    let scale = problem
        .exact
        .as_ref()
        .map(|e| e(problem.t1).iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .unwrap_or(1.0);
    if is_exact(fine, scale) {
        return Ok(f64::INFINITY);
    }
    Ok((coarse / fine).log2())
}
