use rand::Rng;

use crate::diffarray::{Activation, Shape, Tensor};
use crate::error::{Error, Result};

/// Weight `(out, in, 1)` and bias `(out, 1, 1)` of a per-pixel projection.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection<V = Tensor> {
    pub weight: V,
    pub bias: V,
}

impl<V> Projection<V> {
    pub fn map<W>(&self, mut f: impl FnMut(&V) -> W) -> Projection<W> {
        Projection {
            weight: f(&self.weight),
            bias: f(&self.bias),
        }
    }
}

impl Projection<Tensor> {
    pub fn zeros(out: usize, inp: usize) -> Self {
        Projection {
            weight: Tensor::zeros(Shape::new(out, inp, 1)),
            bias: Tensor::zeros(Shape::new(out, 1, 1)),
        }
    }

    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        let (ws, bs) = (weight.shape(), bias.shape());
        if ws.width != 1 || bs != Shape::new(ws.channels, 1, 1) {
            return Err(Error::dim(format!("projection weight {ws} / bias {bs}")));
        }
        Ok(Projection { weight, bias })
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape().channels
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape().height
    }

    fn uniform(out: usize, inp: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (inp as f64).sqrt();
        let weight = Tensor::from_fn(Shape::new(out, inp, 1), |_, _, _| {
            rng.random_range(-bound..=bound)
        });
        Projection {
            weight,
            bias: Tensor::zeros(Shape::new(out, 1, 1)),
        }
    }
}

/// Shape of a fusion decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct FuseConfig {
    /// Channel count `C_i` of each stage input, coarsest first.
    pub stage_channels: Vec<usize>,
    /// Number of target classes `N`.
    pub classes: usize,
    /// Memory channels as a multiple of `N` (1..=4, default 2).
    pub mem_multiplier: usize,
    pub activation: Activation,
    /// One mixer for all stages, or one per stage.
    pub share_mixer: bool,
}

impl FuseConfig {
    pub fn new(stage_channels: Vec<usize>, classes: usize) -> Self {
        FuseConfig {
            stage_channels,
            classes,
            mem_multiplier: 2,
            activation: Activation::Tanh,
            share_mixer: true,
        }
    }

    pub fn levels(&self) -> usize {
        self.stage_channels.len()
    }

    pub fn mem_channels(&self) -> usize {
        self.classes * self.mem_multiplier
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_channels.is_empty() || self.stage_channels.contains(&0) {
            return Err(Error::Config("every stage needs at least one channel".into()));
        }
        if self.classes == 0 {
            return Err(Error::Config("at least one class is required".into()));
        }
        if !(1..=4).contains(&self.mem_multiplier) {
            return Err(Error::Config(format!(
                "memory multiplier must be 1..=4, got {}",
                self.mem_multiplier
            )));
        }
        Ok(())
    }
}

/// Learnable state of the decoder: one `g` projection per stage, the `f`
/// mixer(s), and the 1×1 output head.
#[derive(Clone, Debug, PartialEq)]
pub struct FuseParams<V = Tensor> {
    pub align: Vec<Projection<V>>,
    pub mixers: Vec<Projection<V>>,
    pub head: Projection<V>,
    pub activation: Activation,
}

impl<V> FuseParams<V> {
    pub fn levels(&self) -> usize {
        self.align.len()
    }

    pub fn shares_mixer(&self) -> bool {
        self.mixers.len() == 1
    }

    /// Mixer used at 1-based `stage`.
    pub fn mixer(&self, stage: usize) -> &Projection<V> {
        if self.shares_mixer() {
            &self.mixers[0]
        } else {
            &self.mixers[stage - 1]
        }
    }

    pub fn map<W>(&self, mut f: impl FnMut(&V) -> W) -> FuseParams<W> {
        FuseParams {
            align: self.align.iter().map(|p| p.map(&mut f)).collect(),
            mixers: self.mixers.iter().map(|p| p.map(&mut f)).collect(),
            head: self.head.map(&mut f),
            activation: self.activation,
        }
    }

    /// Every parameter with a stable role name, in a fixed order.
    pub fn named(&self) -> Vec<(String, &V)> {
        let mut out = Vec::new();
        for (i, p) in self.align.iter().enumerate() {
            out.push((format!("g.{}.weight", i + 1), &p.weight));
            out.push((format!("g.{}.bias", i + 1), &p.bias));
        }
        if self.shares_mixer() {
            out.push(("f.weight".to_string(), &self.mixers[0].weight));
            out.push(("f.bias".to_string(), &self.mixers[0].bias));
        } else {
            for (i, p) in self.mixers.iter().enumerate() {
                out.push((format!("f.{}.weight", i + 1), &p.weight));
                out.push((format!("f.{}.bias", i + 1), &p.bias));
            }
        }
        out.push(("head.weight".to_string(), &self.head.weight));
        out.push(("head.bias".to_string(), &self.head.bias));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut V)> {
        let shared = self.shares_mixer();
        let mut out = Vec::new();
        for (i, p) in self.align.iter_mut().enumerate() {
            out.push((format!("g.{}.weight", i + 1), &mut p.weight));
            out.push((format!("g.{}.bias", i + 1), &mut p.bias));
        }
        for (i, p) in self.mixers.iter_mut().enumerate() {
            let prefix = if shared {
                "f".to_string()
            } else {
                format!("f.{}", i + 1)
            };
            out.push((format!("{prefix}.weight"), &mut p.weight));
            out.push((format!("{prefix}.bias"), &mut p.bias));
        }
        out.push(("head.weight".to_string(), &mut self.head.weight));
        out.push(("head.bias".to_string(), &mut self.head.bias));
        out
    }
}

impl FuseParams<Tensor> {
    pub fn zeros(config: &FuseConfig) -> Result<Self> {
        config.validate()?;
        let m = config.mem_channels();
        let mixers = if config.share_mixer { 1 } else { config.levels() };
        Ok(FuseParams {
            align: config
                .stage_channels
                .iter()
                .map(|&c| Projection::zeros(m, c))
                .collect(),
            mixers: (0..mixers).map(|_| Projection::zeros(m, m)).collect(),
            head: Projection::zeros(config.classes, m),
            activation: config.activation,
        })
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init(config: &FuseConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let m = config.mem_channels();
        let align = config
            .stage_channels
            .iter()
            .map(|&c| Projection::uniform(m, c, rng))
            .collect();
        let mixers = (0..if config.share_mixer { 1 } else { config.levels() })
            .map(|_| Projection::uniform(m, m, rng))
            .collect();
        let head = Projection::uniform(config.classes, m, rng);
        Ok(FuseParams {
            align,
            mixers,
            head,
            activation: config.activation,
        })
    }

    pub fn mem_channels(&self) -> usize {
        self.head.inputs()
    }

    pub fn classes(&self) -> usize {
        self.head.outputs()
    }

    pub fn num_params(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    /// Checks that every projection agrees on the memory width.
    pub fn validate(&self) -> Result<()> {
        let m = self.mem_channels();
        if self.align.is_empty() {
            return Err(Error::dim("parameters hold no stages"));
        }
        if !(self.mixers.len() == 1 || self.mixers.len() == self.align.len()) {
            return Err(Error::dim(format!(
                "{} mixers for {} stages",
                self.mixers.len(),
                self.align.len()
            )));
        }
        for (name, p) in self
            .align
            .iter()
            .map(|p| ("g", p))
            .chain(self.mixers.iter().map(|p| ("f", p)))
        {
            if p.outputs() != m {
                return Err(Error::dim(format!(
                    "{name} projection emits {} channels, memory has {m}",
                    p.outputs()
                )));
            }
        }
        if self.mixers.iter().any(|p| p.inputs() != m) {
            return Err(Error::dim("mixer must map memory channels to themselves"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes_follow_config() {
        let cfg = FuseConfig::new(vec![4, 3, 2], 1);
        let p = FuseParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(p.mem_channels(), 2);
        assert_eq!(p.align[1].weight.shape(), Shape::new(2, 3, 1));
        assert_eq!(p.mixers.len(), 1);
        assert_eq!(p.head.weight.shape(), Shape::new(1, 2, 1));
        p.validate().unwrap();
        let names: Vec<_> = p.named().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names[0], "g.1.weight");
        assert_eq!(names[6], "f.weight");
        assert_eq!(names.last().unwrap(), "head.bias");
    }

    #[test]
    fn per_stage_mixers() {
        let mut cfg = FuseConfig::new(vec![1, 1], 2);
        cfg.share_mixer = false;
        cfg.mem_multiplier = 3;
        let p = FuseParams::zeros(&cfg).unwrap();
        assert_eq!(p.mixers.len(), 2);
        assert_eq!(p.mem_channels(), 6);
        assert_eq!(p.mixer(2).weight.shape(), Shape::new(6, 6, 1));
        assert!(p.named().iter().any(|(n, _)| n == "f.2.bias"));
    }

    #[test]
    fn rejects_bad_multiplier() {
        let mut cfg = FuseConfig::new(vec![1], 1);
        cfg.mem_multiplier = 5;
        assert!(FuseParams::zeros(&cfg).is_err());
    }
}
