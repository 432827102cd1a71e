use std::fmt;
use std::str::FromStr;

use crate::diffarray::Activation;
use crate::error::{Error, Result};
use crate::fusecore::MAX_ORDER;

/// Training run settings. Parsed from `key = value` lines with `#` comments.
///
/// `mem_multiplier` sets the memory width as a multiple of the class count
/// and is written `mem_channels = 2N` in config files.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub levels: usize,
    pub height: usize,
    pub width: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub mem_multiplier: usize,
    pub max_order: usize,
    pub activation: Activation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            levels: 4,
            height: 32,
            width: 32,
            n_train: 64,
            n_val: 16,
            seed: 0,
            learning_rate: 0.5,
            epochs: 200,
            mem_multiplier: 2,
            max_order: MAX_ORDER,
            activation: Activation::Tanh,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_multiplier(value: &str) -> Result<usize> {
    let digits = value
        .strip_suffix('N')
        .ok_or_else(|| Error::Config(format!("`mem_channels` must look like `2N`, got `{value}`")))?;
    if digits.is_empty() {
        return Ok(1);
    }
    parse_num("mem_channels", digits)
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("levels", self.levels),
            ("height", self.height),
            ("width", self.width),
            ("n_train", self.n_train),
            ("n_val", self.n_val),
            ("epochs", self.epochs),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("`{name}` must be positive")));
        }
        if self.levels < 2 {
            return Err(Error::Config("the decoder needs at least 2 levels".into()));
        }
        if !(1..=MAX_ORDER).contains(&self.max_order) {
            return Err(Error::Config(format!(
                "`max_order` must be in 1..={MAX_ORDER}, got {}",
                self.max_order
            )));
        }
        if !(1..=4).contains(&self.mem_multiplier) {
            return Err(Error::Config(format!(
                "`mem_channels` must be one of N, 2N, 3N, 4N, got {}N",
                self.mem_multiplier
            )));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config("`learning_rate` must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Starts from [`TrainConfig::default`] and overrides the listed keys.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "levels" | "L" => cfg.levels = parse_num(key, value)?,
                "height" | "H" => cfg.height = parse_num(key, value)?,
                "width" | "W" => cfg.width = parse_num(key, value)?,
                "n_train" => cfg.n_train = parse_num(key, value)?,
                "n_val" => cfg.n_val = parse_num(key, value)?,
                "seed" => cfg.seed = parse_num(key, value)?,
                "learning_rate" => cfg.learning_rate = parse_num(key, value)?,
                "epochs" => cfg.epochs = parse_num(key, value)?,
                "mem_channels" => cfg.mem_multiplier = parse_multiplier(value)?,
                "max_order" => cfg.max_order = parse_num(key, value)?,
                "activation" => cfg.activation = value.parse()?,
                other => return Err(Error::Config(format!("unknown key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "levels = {}", self.levels)?;
        writeln!(f, "height = {}", self.height)?;
        writeln!(f, "width = {}", self.width)?;
        writeln!(f, "n_train = {}", self.n_train)?;
        writeln!(f, "n_val = {}", self.n_val)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "learning_rate = {}", self.learning_rate)?;
        writeln!(f, "epochs = {}", self.epochs)?;
        writeln!(f, "mem_channels = {}N", self.mem_multiplier)?;
        writeln!(f, "max_order = {}", self.max_order)?;
        writeln!(f, "activation = {}", self.activation)
    }
}
