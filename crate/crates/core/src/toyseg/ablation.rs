use std::fmt::Write;

use super::{train, TrainConfig};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AblationRow {
    pub max_order: usize,
    pub seed: u64,
    pub val_dice: f64,
    pub final_loss: f64,
}

/// Validation Dice of the same training run under different order caps.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn mean_dice(&self, max_order: usize) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.max_order == max_order)
            .map(|r| r.val_dice)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Whether the highest cap scores at least as well as the lowest on
    /// average. Reported, not enforced: the gap on toy data is small.
    pub fn higher_order_not_worse(&self) -> Option<bool> {
        let lo = self.rows.iter().map(|r| r.max_order).min()?;
        let hi = self.rows.iter().map(|r| r.max_order).max()?;
        Some(self.mean_dice(hi)? >= self.mean_dice(lo)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("max_order,seed,val_dice,final_loss\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{:.4},{:.6}", r.max_order, r.seed, r.val_dice, r.final_loss);
        }
        let mut caps: Vec<usize> = self.rows.iter().map(|r| r.max_order).collect();
        caps.dedup();
        for c in caps {
            if let Some(m) = self.mean_dice(c) {
                let _ = writeln!(out, "# mean val_dice max_order={c}: {m:.4}");
            }
        }
        if let Some(ok) = self.higher_order_not_worse() {
            let _ = writeln!(
                out,
                "# highest cap {} lowest cap on average",
                if ok { "matches or beats" } else { "trails" }
            );
        }
        out
    }
}

/// Trains `base` once per `(cap, seed)` pair, caps outermost.
pub fn order_cap_ablation(base: &TrainConfig, caps: &[usize], seeds: &[u64]) -> Result<AblationReport> {
    let mut rows = Vec::with_capacity(caps.len() * seeds.len());
    for &max_order in caps {
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.max_order = max_order;
            cfg.seed = seed;
            let report = train(&cfg)?;
            rows.push(AblationRow {
                max_order,
                seed,
                val_dice: report.final_val_dice,
                final_loss: report.epochs.last().map_or(f64::NAN, |m| m.train_loss),
            });
        }
    }
    Ok(AblationReport { rows })
}
