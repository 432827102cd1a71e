use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::pyramid::{align_stages, make_pyramid, ENCODER_CHANNELS};
use super::{synth_dataset, Sample, TrainConfig};
use crate::diffarray::{
    bce_with_logits_mean, pointwise, Activation, Eager, Shape, Tape, Tensor, TensorOps, Var,
};
use crate::error::{Error, Result};
use crate::fusecore::{fuse_forward_order_capped, head, FuseConfig, FuseParams, StageInput};

/// Additive smoothing in the soft-Dice loss term.
pub const DICE_SMOOTH: f64 = 1.0;

/// Relative error bound used by [`pipeline_gradcheck`].
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn check_binary(t: &Tensor, what: &str) -> Result<()> {
    if t.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Contract(format!("{what} is not a binary mask")));
    }
    Ok(())
}

/// Hard Dice `2|A∩B| / (|A|+|B|)`, 1 when both masks are empty.
pub fn dice_score(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(Error::dim(format!(
            "dice of {} against {}",
            pred.shape(),
            truth.shape()
        )));
    }
    check_binary(pred, "prediction")?;
    check_binary(truth, "ground truth")?;
    let inter: f64 = pred.data().iter().zip(truth.data()).map(|(a, b)| a * b).sum();
    let total = pred.sum() + truth.sum();
    Ok(if total == 0.0 { 1.0 } else { 2.0 * inter / total })
}

/// `(bce, soft_dice)` for single-class logits against a binary mask.
///
/// The soft-Dice term is `1 - (2·Σpt + s) / (Σp + Σt + s)` with `p = σ(logits)`
/// and `s` = [`DICE_SMOOTH`]; the training loss is their sum.
pub fn loss_terms(logits: &Tensor, mask: &Tensor) -> Result<(f64, f64)> {
    let bce = bce_with_logits_mean(logits, mask)?;
    let p = pointwise(logits, Activation::Sigmoid);
    let inter: f64 = p.data().iter().zip(mask.data()).map(|(a, b)| a * b).sum();
    let soft = 1.0 - (2.0 * inter + DICE_SMOOTH) / (p.sum() + mask.sum() + DICE_SMOOTH);
    Ok((bce, soft))
}

fn tape_loss(tape: &mut Tape, logits: Var, mask: &Tensor) -> Result<Var> {
    let bce = tape.bce_with_logits_mean(logits, mask)?;
    let p = tape.pointwise(&logits, Activation::Sigmoid);
    let t = tape.leaf(mask.clone(), false);
    let pt = tape.mul(p, t)?;
    let inter = tape.sum(pt);
    let num = tape.scale_shift(inter, 2.0, DICE_SMOOTH);
    let sp = tape.sum(p);
    let den = tape.scale_shift(sp, 1.0, mask.sum() + DICE_SMOOTH);
    let ratio = tape.div(num, den)?;
    let diff = tape.weighted_sum(&[1.0, -1.0], &[&bce, &ratio])?;
    Ok(tape.scale_shift(diff, 1.0, 1.0))
}

/// Encoder features resized once to the decoder resolution.
struct Prepared {
    stages: Vec<StageInput>,
    mask: Tensor,
}

fn prepare(samples: &[Sample], levels: usize) -> Result<Vec<Prepared>> {
    samples
        .iter()
        .map(|s| {
            let stages = make_pyramid(&s.image, levels)?;
            Ok(Prepared {
                stages: align_stages(&stages, s.image.shape().spatial())?,
                mask: s.mask.clone(),
            })
        })
        .collect()
}

fn forward<B: TensorOps>(
    ops: &mut B,
    params: &FuseParams<B::Value>,
    stages: &[StageInput],
    size: (usize, usize),
    max_order: usize,
) -> Result<B::Value> {
    let (y, _) = fuse_forward_order_capped(ops, params, stages, size, max_order)?;
    head(ops, params, &y)
}

/// Class logits `(classes, H, W)` for one image.
pub fn predict_logits(params: &FuseParams, image: &Tensor, max_order: usize) -> Result<Tensor> {
    let stages = make_pyramid(image, params.levels())?;
    forward(&mut Eager, params, &stages, image.shape().spatial(), max_order)
}

fn threshold(logits: &Tensor) -> Tensor {
    logits.channel(0).map(|z| if z > 0.0 { 1.0 } else { 0.0 })
}

/// Mean per-sample Dice of the thresholded prediction (logit > 0).
pub fn evaluate(params: &FuseParams, samples: &[Sample], max_order: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Input("cannot evaluate on an empty set".into()));
    }
    let mut total = 0.0;
    for s in samples {
        let logits = predict_logits(params, &s.image, max_order)?;
        total += dice_score(&threshold(&logits), &s.mask)?;
    }
    Ok(total / samples.len() as f64)
}

fn evaluate_prepared(params: &FuseParams, data: &[Prepared], max_order: usize) -> Result<f64> {
    let mut total = 0.0;
    for p in data {
        let logits = forward(&mut Eager, params, &p.stages, p.mask.shape().spatial(), max_order)?;
        total += dice_score(&threshold(&logits), &p.mask)?;
    }
    Ok(total / data.len() as f64)
}

fn sample_loss_eager(params: &FuseParams, p: &Prepared, max_order: usize) -> Result<f64> {
    let logits = forward(&mut Eager, params, &p.stages, p.mask.shape().spatial(), max_order)?;
    let (bce, soft) = loss_terms(&logits, &p.mask)?;
    Ok(bce + soft)
}

/// Loss and parameter gradients for one sample.
fn sample_grad(params: &FuseParams, p: &Prepared, max_order: usize) -> Result<(f64, FuseParams)> {
    let mut tape = Tape::new();
    let vars = params.map(|t| tape.leaf(t.clone(), true));
    let logits = forward(&mut tape, &vars, &p.stages, p.mask.shape().spatial(), max_order)?;
    let loss = tape_loss(&mut tape, logits, &p.mask)?;
    let grads = tape.backward(loss)?;
    Ok((tape.value(loss).to_scalar()?, vars.map(|v| grads.wrt(*v).clone())))
}

/// Mean loss over `data` and the matching mean gradient.
fn batch_grad(params: &FuseParams, data: &[Prepared], max_order: usize) -> Result<(f64, FuseParams)> {
    let mut acc = params.map(|t| Tensor::zeros(t.shape()));
    let mut loss = 0.0;
    for p in data {
        let (l, g) = sample_grad(params, p, max_order)?;
        loss += l;
        for ((_, a), (_, b)) in acc.named_mut().into_iter().zip(g.named()) {
            *a = crate::diffarray::add(a, b)?;
        }
    }
    let scale = 1.0 / data.len() as f64;
    Ok((loss * scale, acc.map(|t| t.map(|v| v * scale))))
}

fn descend(params: &mut FuseParams, grads: &FuseParams, lr: f64) -> Result<()> {
    for ((_, p), (_, g)) in params.named_mut().into_iter().zip(grads.named()) {
        *p = crate::diffarray::weighted_sum(&[1.0, -lr], &[p, g])?;
    }
    Ok(())
}

/// One full-batch gradient-descent step; returns the loss before the update.
pub fn train_step(
    params: &mut FuseParams,
    samples: &[Sample],
    learning_rate: f64,
    max_order: usize,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Input("cannot train on an empty set".into()));
    }
    let data = prepare(samples, params.levels())?;
    let (loss, grads) = batch_grad(params, &data, max_order)?;
    descend(params, &grads, learning_rate)?;
    Ok(loss)
}

/// Independent sub-seeds for the training set, validation set and weights.
fn split_seed(seed: u64) -> [u64; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    [rng.next_u64(), rng.next_u64(), rng.next_u64()]
}

fn fuse_config(config: &TrainConfig) -> FuseConfig {
    let mut fc = FuseConfig::new(vec![ENCODER_CHANNELS; config.levels], 1);
    fc.mem_multiplier = config.mem_multiplier;
    fc.activation = config.activation;
    fc
}

/// Parameters a run with `config` starts from.
pub fn initial_params(config: &TrainConfig) -> Result<FuseParams> {
    config.validate()?;
    let [_, _, init] = split_seed(config.seed);
    FuseParams::init(&fuse_config(config), &mut ChaCha8Rng::seed_from_u64(init))
}

/// Training and validation sets a run with `config` uses.
pub fn datasets(config: &TrainConfig) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let [tr, va, _] = split_seed(config.seed);
    Ok((
        synth_dataset(config.n_train, config.height, config.width, tr)?,
        synth_dataset(config.n_val, config.height, config.width, va)?,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean training loss at the parameters the epoch started from.
    pub train_loss: f64,
    /// Validation Dice after the epoch's update.
    pub val_dice: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub epochs: Vec<EpochMetrics>,
    pub final_val_dice: f64,
    pub params: FuseParams,
}

impl TrainReport {
    /// `epoch,train_loss,val_dice` rows preceded by a `# seed=` line.
    pub fn metrics_csv(&self) -> String {
        let mut out = format!("# seed={}\nepoch,train_loss,val_dice\n", self.config.seed);
        for m in &self.epochs {
            out.push_str(&format!("{},{:.10},{:.6}\n", m.epoch, m.train_loss, m.val_dice));
        }
        out
    }
}

/// Full-batch gradient descent on BCE + soft Dice over synthetic data.
pub fn train(config: &TrainConfig) -> Result<TrainReport> {
    let mut params = initial_params(config)?;
    let (train_set, val_set) = datasets(config)?;
    let train_data = prepare(&train_set, config.levels)?;
    let val_data = prepare(&val_set, config.levels)?;

    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let (loss, grads) = batch_grad(&params, &train_data, config.max_order)?;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        descend(&mut params, &grads, config.learning_rate)?;
        if params.named().iter().any(|(_, t)| !t.is_finite()) {
            return Err(Error::TrainingDiverged { epoch });
        }
        let val_dice = evaluate_prepared(&params, &val_data, config.max_order)?;
        epochs.push(EpochMetrics {
            epoch,
            train_loss: loss,
            val_dice,
        });
    }
    let final_val_dice = epochs.last().map_or(0.0, |m| m.val_dice);
    Ok(TrainReport {
        config: config.clone(),
        epochs,
        final_val_dice,
        params,
    })
}

/// Tape gradient against central differences, per parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub eps: f64,
    pub tolerance: f64,
    /// `(role, ‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖))`.
    pub groups: Vec<(String, f64)>,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() <= self.tolerance
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (role, e) in &self.groups {
            writeln!(f, "{role:<12} rel_err={e:.3e}")?;
        }
        writeln!(
            f,
            "{} max_rel_err={:.3e} tol={:.0e} eps={:.0e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.max_rel_error(),
            self.tolerance,
            self.eps
        )
    }
}

/// Whole-pipeline check on a tiny instance: 4 levels, one class, 8×8 input,
/// tanh mixer, random weights and biases.
pub fn pipeline_gradcheck(seed: u64) -> Result<GradcheckReport> {
    const SIZE: usize = 8;
    const LEVELS: usize = 4;
    let eps = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let image = Tensor::from_fn(Shape::new(1, SIZE, SIZE), |_, _, _| rng.random_range(0.0..1.0));
    let mask = image.map(|v| if v > 0.5 { 1.0 } else { 0.0 });
    let mut fc = FuseConfig::new(vec![ENCODER_CHANNELS; LEVELS], 1);
    fc.activation = Activation::Tanh;
    let mut params = FuseParams::init(&fc, &mut rng)?;
    for (role, t) in params.named_mut() {
        if role.ends_with("bias") {
            *t = Tensor::from_fn(t.shape(), |_, _, _| rng.random_range(-0.5..0.5));
        }
    }
    let data = prepare(&[Sample::new(image, mask)?], LEVELS)?;
    let sample = &data[0];
    let (_, analytic) = sample_grad(&params, sample, crate::fusecore::MAX_ORDER)?;

    let mut groups = Vec::new();
    let roles: Vec<String> = params.named().into_iter().map(|(r, _)| r).collect();
    for (k, role) in roles.iter().enumerate() {
        let base = params.named()[k].1.clone();
        let mut numeric = vec![0.0; base.len()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let eval_at = |delta: f64| -> Result<f64> {
                let mut p = params.clone();
                let mut data = base.clone().into_data();
                data[j] += delta;
                *p.named_mut().swap_remove(k).1 = Tensor::new(base.shape(), data)?;
                sample_loss_eager(&p, sample, crate::fusecore::MAX_ORDER)
            };
            *slot = (eval_at(eps)? - eval_at(-eps)?) / (2.0 * eps);
        }
        let a = analytic.named()[k].1.data().to_vec();
        let diff: f64 = a
            .iter()
            .zip(&numeric)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nn = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = na.max(nn);
        groups.push((role.clone(), if scale == 0.0 { 0.0 } else { diff / scale }));
    }
    params.validate()?;
    Ok(GradcheckReport {
        eps,
        tolerance: GRADCHECK_TOLERANCE,
        groups,
    })
}
