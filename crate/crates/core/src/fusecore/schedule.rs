use super::{FuseParams, Projection, ScheduleTrace, TraceStep};
use crate::diffarray::{Shape, Tensor, TensorOps};
use crate::error::{Error, Result};
use crate::multistep::{ab_step, adaptive_pair, pc_step, MultistepScheme, RhsHistory};

/// Highest scheme order the scheduler uses.
pub const MAX_ORDER: usize = 4;

/// Encoder feature map for 1-based stage `index` (1 is the coarsest).
#[derive(Clone, Debug, PartialEq)]
pub struct StageInput {
    pub index: usize,
    pub x: Tensor,
}

impl StageInput {
    pub fn new(index: usize, x: Tensor) -> Self {
        StageInput { index, x }
    }
}

/// `g`: resize to `target` then project to the memory channels.
pub fn g_align<B: TensorOps>(
    ops: &mut B,
    align: &Projection<B::Value>,
    x: &B::Value,
    target: (usize, usize),
) -> Result<B::Value> {
    let resized = ops.resize_bilinear(x, target)?;
    ops.channel_project(&resized, &align.weight, &align.bias)
}

/// `F = -y + act(W_f·(y + g(x)) + b_f)` for stage `stage` (1-based).
pub fn rhs_eval<B: TensorOps>(
    ops: &mut B,
    params: &FuseParams<B::Value>,
    stage: usize,
    x: &B::Value,
    y: &B::Value,
) -> Result<B::Value> {
    let align = params
        .align
        .get(stage.wrapping_sub(1))
        .ok_or_else(|| Error::dim(format!("no alignment parameters for stage {stage}")))?;
    let target = ops.shape_of(y).spatial();
    let gx = g_align(ops, align, x, target)?;
    let z = ops.add(y, &gx)?;
    let mixer = params.mixer(stage);
    let mixed = ops.channel_project(&z, &mixer.weight, &mixer.bias)?;
    let activated = ops.pointwise(&mixed, params.activation);
    ops.weighted_sum(&[-1.0, 1.0], &[y, &activated])
}

/// 1×1 output head: memory channels to class logits.
pub fn head<B: TensorOps>(
    ops: &mut B,
    params: &FuseParams<B::Value>,
    y_final: &B::Value,
) -> Result<B::Value> {
    ops.channel_project(y_final, &params.head.weight, &params.head.bias)
}

fn check_levels(levels: usize, max_order: usize) -> Result<()> {
    if levels < 2 {
        return Err(Error::Config(format!(
            "the scheduler needs at least 2 stages, got {levels}"
        )));
    }
    if !(1..=MAX_ORDER).contains(&max_order) {
        return Err(Error::Config(format!(
            "max order must be in 1..={MAX_ORDER}, got {max_order}"
        )));
    }
    Ok(())
}

fn step_for(i: usize, max_order: usize) -> Result<TraceStep> {
    let (p, c) = adaptive_pair(i, max_order);
    Ok(TraceStep {
        index: i,
        predictor: MultistepScheme::ab(p)?,
        predictor_window: (i + 1 - p, i),
        corrector: Some((MultistepScheme::am(c)?, (i + 1 - c, i + 1))),
    })
}

fn final_step_for(levels: usize, max_order: usize) -> Result<TraceStep> {
    let q = levels.min(max_order);
    Ok(TraceStep {
        index: levels,
        predictor: MultistepScheme::ab(q)?,
        predictor_window: (levels + 1 - q, levels),
        corrector: None,
    })
}

/// The scheme sequence the scheduler will follow, without evaluating anything.
pub fn plan_schedule(levels: usize, max_order: usize) -> Result<ScheduleTrace> {
    check_levels(levels, max_order)?;
    let mut steps = (1..levels)
        .map(|i| step_for(i, max_order))
        .collect::<Result<Vec<_>>>()?;
    steps.push(final_step_for(levels, max_order)?);
    Ok(ScheduleTrace {
        levels,
        max_order,
        steps,
        rhs_evaluations: levels,
    })
}

/// Full decode with the default maximum order of 4.
pub fn fuse_forward<B: TensorOps>(
    ops: &mut B,
    params: &FuseParams<B::Value>,
    stages: &[StageInput],
    output_size: (usize, usize),
) -> Result<(B::Value, ScheduleTrace)> {
    fuse_forward_order_capped(ops, params, stages, output_size, MAX_ORDER)
}

/// Decode with every scheme order capped at `max_order`.
///
/// The memory flow starts at zero, `δ = 1/L`, and the right-hand side is
/// evaluated exactly once per stage: the value at the predicted state is both
/// fed to the corrector and stored in the history.
pub fn fuse_forward_order_capped<B: TensorOps>(
    ops: &mut B,
    params: &FuseParams<B::Value>,
    stages: &[StageInput],
    output_size: (usize, usize),
    max_order: usize,
) -> Result<(B::Value, ScheduleTrace)> {
    let levels = stages.len();
    check_levels(levels, max_order)?;
    for (k, stage) in stages.iter().enumerate() {
        if stage.index != k + 1 {
            return Err(Error::Input(format!(
                "stage {} expected at position {}, found stage {}",
                k + 1,
                k + 1,
                stage.index
            )));
        }
    }
    if params.levels() != levels {
        return Err(Error::dim(format!(
            "parameters cover {} stages, input has {levels}",
            params.levels()
        )));
    }
    if !(params.mixers.len() == 1 || params.mixers.len() == levels) {
        return Err(Error::dim(format!(
            "{} mixers for {levels} stages",
            params.mixers.len()
        )));
    }

    let mem = ops.shape_of(&params.head.weight).height;
    let flow_shape = Shape::new(mem, output_size.0, output_size.1);
    let check_flow = |ops: &B, v: &B::Value, what: &str| -> Result<()> {
        let s = ops.shape_of(v);
        if s != flow_shape {
            return Err(Error::dim(format!("{what} has shape {s}, expected {flow_shape}")));
        }
        Ok(())
    };

    let delta = 1.0 / levels as f64;
    let inputs: Vec<B::Value> = stages.iter().map(|s| ops.constant(&s.x)).collect();
    let mut evaluations = 0usize;

    let mut y = ops.constant(&Tensor::zeros(flow_shape));
    let mut hist = RhsHistory::new();
    let f1 = rhs_eval(ops, params, 1, &inputs[0], &y)?;
    evaluations += 1;
    check_flow(ops, &f1, "F_1")?;
    hist.push(1, f1)?;

    let mut steps = Vec::with_capacity(levels);
    for i in 1..levels {
        let planned = step_for(i, max_order)?;
        let (corr, corr_window) = planned.corrector.clone().expect("loop steps correct");
        let pred_window = hist.window(planned.predictor.steps());
        let x_next = &inputs[i];
        let (y_next, f_next) = pc_step(
            ops,
            &planned.predictor,
            &corr,
            |ops: &mut B, _t, y_pred: &B::Value| {
                evaluations += 1;
                rhs_eval(ops, params, i + 1, x_next, y_pred)
            },
            (i + 1) as f64 * delta,
            &y,
            &hist,
            delta,
        )?;
        check_flow(ops, &y_next, "Y")?;
        check_flow(ops, &f_next, "F")?;
        hist.push(i + 1, f_next)?;
        let corr_used = hist.window(corr.steps() + 1);
        debug_assert_eq!(pred_window, Some(planned.predictor_window));
        debug_assert_eq!(corr_used, Some(corr_window));
        y = y_next;
        steps.push(TraceStep {
            index: i,
            predictor: planned.predictor,
            predictor_window: pred_window.expect("history covers predictor"),
            corrector: Some((corr, corr_used.expect("history covers corrector"))),
        });
    }

    let last = final_step_for(levels, max_order)?;
    let window = hist.window(last.predictor.steps());
    let y_final = ab_step(ops, &last.predictor, &y, &hist, delta)?;
    check_flow(ops, &y_final, "Y_final")?;
    steps.push(TraceStep {
        predictor_window: window.expect("history covers final step"),
        ..last
    });

    Ok((
        y_final,
        ScheduleTrace {
            levels,
            max_order,
            steps,
            rhs_evaluations: evaluations,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffarray::{Activation, Eager};
    use crate::fusecore::FuseConfig;

    fn zero_stages(levels: usize) -> Vec<StageInput> {
        (1..=levels)
            .map(|i| StageInput::new(i, Tensor::full(Shape::new(1, 1, 1), 1.0)))
            .collect()
    }

    #[test]
    fn rejects_single_stage() {
        let cfg = FuseConfig::new(vec![1], 1);
        let p = FuseParams::zeros(&cfg).unwrap();
        assert!(matches!(
            fuse_forward(&mut Eager, &p, &zero_stages(1), (1, 1)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn rejects_missing_stage() {
        let cfg = FuseConfig::new(vec![1; 3], 1);
        let p = FuseParams::zeros(&cfg).unwrap();
        let mut stages = zero_stages(3);
        stages[1].index = 3;
        assert!(matches!(
            fuse_forward(&mut Eager, &p, &stages, (1, 1)),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn rejects_bad_cap() {
        let cfg = FuseConfig::new(vec![1; 3], 1);
        let p = FuseParams::zeros(&cfg).unwrap();
        for cap in [0, 5] {
            assert!(fuse_forward_order_capped(&mut Eager, &p, &zero_stages(3), (1, 1), cap).is_err());
        }
    }

    #[test]
    fn executed_trace_matches_plan() {
        for levels in 2..=8 {
            for cap in 1..=4 {
                let cfg = FuseConfig::new(vec![1; levels], 1);
                let p = FuseParams::zeros(&cfg).unwrap();
                let (_, trace) =
                    fuse_forward_order_capped(&mut Eager, &p, &zero_stages(levels), (1, 1), cap).unwrap();
                assert_eq!(trace, plan_schedule(levels, cap).unwrap());
            }
        }
    }

    #[test]
    fn identity_mixer_bias_gives_minus_y_plus_b() {
        let mut cfg = FuseConfig::new(vec![2], 1);
        cfg.activation = Activation::Identity;
        let mut p = FuseParams::zeros(&cfg).unwrap();
        p.mixers[0].bias = Tensor::vector(vec![0.3, -0.7]);
        let y = Tensor::from_fn(Shape::new(2, 3, 3), |c, h, w| (c + h + w) as f64);
        let x = Tensor::full(Shape::new(2, 2, 2), 5.0);
        let f = rhs_eval(&mut Eager, &p, 1, &x, &y).unwrap();
        let expected = Tensor::from_fn(y.shape(), |c, h, w| {
            -y.get(c, h, w) + if c == 0 { 0.3 } else { -0.7 }
        });
        assert_eq!(f, expected);
    }
}
