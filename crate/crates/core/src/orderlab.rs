//! Analytic benchmark problems and order-of-accuracy studies.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::diffarray::{Activation, Eager, Shape, Tensor};
use crate::error::{Error, Result};
use crate::fusecore::{fuse_forward, FuseConfig, FuseParams, StageInput};
use crate::multistep::{final_error, ExactFn, IvpProblem, SolveMode};

pub const ORDER_CSV_HEADER: &str = "scheme,steps,nominal_order,delta,max_error,empirical_order";

/// Default resolutions for order studies.
pub const DEFAULT_RESOLUTIONS: [usize; 4] = [16, 32, 64, 128];

/// Allowed distance between a measured slope and the nominal order.
pub const ORDER_TOLERANCE: f64 = 0.25;

/// An IVP with a closed-form solution and that solution's derivative.
#[derive(Clone)]
pub struct BenchProblem {
    pub name: String,
    pub problem: IvpProblem,
    pub params: Vec<f64>,
    exact_dot: ExactFn,
}

impl std::fmt::Debug for BenchProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BenchProblem")
            .field("name", &self.name)
            .field("params", &self.params)
            .finish()
    }
}

impl BenchProblem {
    fn new(
        name: impl Into<String>,
        params: Vec<f64>,
        problem: IvpProblem,
        exact_dot: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        BenchProblem {
            name: name.into(),
            problem,
            params,
            exact_dot: Arc::new(exact_dot),
        }
    }

    pub fn exact(&self, t: f64) -> Vec<f64> {
        (self.problem.exact.as_ref().expect("bench problems carry exact solutions"))(t)
    }

    pub fn exact_derivative(&self, t: f64) -> Vec<f64> {
        (self.exact_dot)(t)
    }

    /// Largest `|y_exact'(t) - rhs(t, y_exact(t))|` over `samples` points of
    /// the interval.
    pub fn self_check(&self, samples: usize) -> f64 {
        let p = &self.problem;
        (0..samples)
            .map(|k| p.t0 + (p.t1 - p.t0) * k as f64 / (samples.max(2) - 1) as f64)
            .map(|t| {
                let lhs = self.exact_derivative(t);
                let rhs = p.eval(t, &self.exact(t));
                lhs.iter()
                    .zip(&rhs)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            })
            .fold(0.0, f64::max)
    }
}

fn scalar_exp(lambda: f64) -> BenchProblem {
    let name = if lambda == -1.0 {
        "decay".to_string()
    } else {
        format!("lambda={lambda}")
    };
    let problem = IvpProblem::new(move |_, y| vec![lambda * y[0]], vec![1.0], 0.0, 1.0)
        .expect("valid interval")
        .with_exact(move |t| vec![(lambda * t).exp()]);
    BenchProblem::new(name, vec![lambda], problem, move |t| {
        vec![lambda * (lambda * t).exp()]
    })
}

fn monomial(k: i32) -> BenchProblem {
    let problem = IvpProblem::new(move |t, _| vec![t.powi(k)], vec![1.0], 0.0, 1.0)
        .expect("valid interval")
        .with_exact(move |t| vec![1.0 + t.powi(k + 1) / (k + 1) as f64]);
    BenchProblem::new(format!("poly{k}"), vec![k as f64], problem, move |t| {
        vec![t.powi(k)]
    })
}

/// `y' = A y` with `A = [[-2, 1], [1, -2]]`, `y(0) = (1, 0)`.
///
/// Eigenpairs `(-1, (1,1))` and `(-3, (1,-1))` give
/// `y(t) = ½e^{-t}(1,1) + ½e^{-3t}(1,-1)`.
fn linear_system() -> BenchProblem {
    let problem = IvpProblem::new(
        |_, y| vec![-2.0 * y[0] + y[1], y[0] - 2.0 * y[1]],
        vec![1.0, 0.0],
        0.0,
        1.0,
    )
    .expect("valid interval")
    .with_exact(|t| {
        let (a, b) = (0.5 * (-t).exp(), 0.5 * (-3.0 * t).exp());
        vec![a + b, a - b]
    });
    BenchProblem::new("linear2", vec![-2.0, 1.0, 1.0, -2.0], problem, |t| {
        let (a, b) = (-0.5 * (-t).exp(), -1.5 * (-3.0 * t).exp());
        vec![a + b, a - b]
    })
}

/// Decay, growth, oscillatory forcing, monomials of degree 0..=4, the zero
/// field and a coupled 2×2 linear system, all on `[0, 1]`.
pub fn standard_suite() -> Vec<BenchProblem> {
    let zero = BenchProblem::new(
        "zero",
        vec![],
        IvpProblem::new(|_, _| vec![0.0], vec![1.0], 0.0, 1.0)
            .expect("valid interval")
            .with_exact(|_| vec![1.0]),
        |_| vec![0.0],
    );
    let cosine = BenchProblem::new(
        "cos",
        vec![],
        IvpProblem::new(|t, _| vec![t.cos()], vec![0.0], 0.0, 1.0)
            .expect("valid interval")
            .with_exact(|t| vec![t.sin()]),
        |t| vec![t.cos()],
    );
    let mut suite = vec![zero, scalar_exp(-1.0), scalar_exp(-2.0), scalar_exp(0.5), cosine];
    suite.extend((0..=4).map(monomial));
    suite.push(linear_system());
    suite
}

/// A scheme under study: pure AB_s, or AM_s driven by PC(AB_s, AM_s) with
/// exact start-up values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StudyScheme {
    Ab(usize),
    Am(usize),
}

impl StudyScheme {
    pub fn all() -> Vec<StudyScheme> {
        (1..=4)
            .map(StudyScheme::Ab)
            .chain((1..=3).map(StudyScheme::Am))
            .collect()
    }

    pub fn mode(self) -> SolveMode {
        match self {
            StudyScheme::Ab(s) => SolveMode::PureAb(s),
            StudyScheme::Am(s) => SolveMode::Pc { pred: s, corr: s },
        }
    }

    pub fn nominal_order(self) -> usize {
        match self {
            StudyScheme::Ab(s) => s,
            StudyScheme::Am(s) => s + 1,
        }
    }

    pub fn name(self) -> String {
        match self {
            StudyScheme::Ab(s) => format!("AB{s}"),
            StudyScheme::Am(s) => format!("AM{s}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyRow {
    pub scheme: StudyScheme,
    pub problem: String,
    pub steps: usize,
    pub delta: f64,
    pub max_error: f64,
    /// Slope against the previous resolution; `None` on the coarsest row,
    /// `INFINITY` once the error is at rounding level.
    pub empirical_order: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OrderStudy {
    pub rows: Vec<StudyRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrderClaim {
    pub scheme: StudyScheme,
    pub problem: String,
    pub nominal: usize,
    pub measured: f64,
    pub pass: bool,
}

fn fmt_slope(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.4}")
    }
}

impl OrderStudy {
    /// CSV with the fixed header; the `scheme` column reads `<scheme>@<problem>`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(ORDER_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}@{},{},{},{},{:.6e},{}",
                r.scheme.name(),
                r.problem,
                r.steps,
                r.scheme.nominal_order(),
                r.delta,
                r.max_error,
                r.empirical_order.map(fmt_slope).unwrap_or_default()
            );
        }
        out
    }

    pub fn rows_for<'a>(
        &'a self,
        scheme: StudyScheme,
        problem: &'a str,
    ) -> impl Iterator<Item = &'a StudyRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.scheme == scheme && r.problem == problem)
    }

    /// Finest-resolution slope per scheme on `problem`, judged against the
    /// nominal order with [`ORDER_TOLERANCE`].
    pub fn claims(&self, problem: &str) -> Vec<OrderClaim> {
        let mut schemes: Vec<StudyScheme> = Vec::new();
        for r in &self.rows {
            if r.problem == problem && !schemes.contains(&r.scheme) {
                schemes.push(r.scheme);
            }
        }
        schemes
            .into_iter()
            .filter_map(|s| {
                let measured = self.rows_for(s, problem).filter_map(|r| r.empirical_order).last()?;
                let nominal = s.nominal_order();
                Some(OrderClaim {
                    scheme: s,
                    problem: problem.to_string(),
                    nominal,
                    measured,
                    pass: (measured - nominal as f64).abs() <= ORDER_TOLERANCE,
                })
            })
            .collect()
    }

    pub fn summary(&self, problem: &str) -> String {
        let mut out = String::new();
        for c in self.claims(problem) {
            let _ = writeln!(
                out,
                "{} {} on {}: nominal {} measured {}",
                if c.pass { "PASS" } else { "FAIL" },
                c.scheme.name(),
                c.problem,
                c.nominal,
                fmt_slope(c.measured)
            );
        }
        out
    }
}

/// Final-time errors for every `(scheme, problem, resolution)` and the
/// Richardson slope between consecutive resolutions.
pub fn run_order_study(
    schemes: &[StudyScheme],
    suite: &[BenchProblem],
    resolutions: &[usize],
) -> Result<OrderStudy> {
    if resolutions.len() < 2 {
        return Err(Error::Config("an order study needs at least two resolutions".into()));
    }
    let mut rows = Vec::new();
    for &scheme in schemes {
        for bench in suite {
            let scale = bench
                .exact(bench.problem.t1)
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            let mut prev: Option<(usize, f64)> = None;
            for &n in resolutions {
                let err = final_error(&bench.problem, scheme.mode(), n)?;
                let slope = prev.map(|(pn, perr)| {
                    if crate::multistep::is_exact(err, scale) {
                        f64::INFINITY
                    } else {
                        (perr / err).log2() / (n as f64 / pn as f64).log2()
                    }
                });
                rows.push(StudyRow {
                    scheme,
                    problem: bench.name.clone(),
                    steps: n,
                    delta: (bench.problem.t1 - bench.problem.t0) / n as f64,
                    max_error: err,
                    empirical_order: slope,
                });
                prev = Some((n, err));
            }
        }
    }
    Ok(OrderStudy { rows })
}

/// `ẏ = -y + (a·y + b·x)` with constant drive `x` and `y(0) = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearOdeCase {
    pub a: f64,
    pub b: f64,
    pub drive: f64,
}

impl LinearOdeCase {
    pub fn exact(&self, t: f64) -> f64 {
        let k = self.a - 1.0;
        let forcing = self.b * self.drive;
        if k == 0.0 {
            forcing * t
        } else {
            forcing / k * (k * t).exp_m1()
        }
    }

    /// Linear `f` and `g` making the memory-flow right-hand side equal this
    /// ODE on 1×1 tensors: `g(x) = (b/a)·x`, `f(z) = a·z`.
    pub fn params(&self, levels: usize) -> Result<FuseParams> {
        let mut cfg = FuseConfig::new(vec![1; levels], 1);
        cfg.activation = Activation::Identity;
        let mut params = FuseParams::zeros(&cfg)?;
        let m = params.mem_channels();
        let gain = if self.a != 0.0 {
            self.b / self.a
        } else if self.b == 0.0 {
            0.0
        } else {
            return Err(Error::Config(
                "a = 0 with b != 0 cannot be expressed as f(y + g(x))".into(),
            ));
        };
        for p in &mut params.align {
            p.weight = Tensor::new(Shape::new(m, 1, 1), vec![gain; m])?;
        }
        params.mixers[0].weight = Tensor::identity(m).map(|v| v * self.a);
        Ok(params)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OdeCheckRow {
    pub levels: usize,
    pub y_final: f64,
    pub exact: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OdeCheckReport {
    pub case: LinearOdeCase,
    pub rows: Vec<OdeCheckRow>,
}

impl OdeCheckReport {
    pub fn error_at(&self, levels: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.levels == levels).map(|r| r.error)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# a={} b={} drive={}\nlevels,y_final,exact,error\n",
            self.case.a, self.case.b, self.case.drive
        );
        for r in &self.rows {
            let _ = writeln!(out, "{},{:.15e},{:.15e},{:.3e}", r.levels, r.y_final, r.exact, r.error);
        }
        out
    }
}

/// Runs the fusion scheduler on 1×1 tensors where the memory-flow dynamics
/// reduce to `case`, and compares `Y_final` (time 1) with the closed form.
pub fn scheduler_ode_check(levels: &[usize], case: LinearOdeCase) -> Result<OdeCheckReport> {
    let exact = case.exact(1.0);
    let mut rows = Vec::with_capacity(levels.len());
    for &l in levels {
        let params = case.params(l)?;
        let stages: Vec<StageInput> = (1..=l)
            .map(|i| StageInput::new(i, Tensor::full(Shape::new(1, 1, 1), case.drive)))
            .collect();
        let (y, _) = fuse_forward(&mut Eager, &params, &stages, (1, 1))?;
        let error = y.data().iter().fold(0.0f64, |m, v| m.max((v - exact).abs()));
        rows.push(OdeCheckRow {
            levels: l,
            y_final: y.data()[0],
            exact,
            error,
        });
    }
    Ok(OdeCheckReport { case, rows })
}
