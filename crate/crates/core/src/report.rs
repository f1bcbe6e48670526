//! Trial reports: per-item inclusion frequencies against an analytic floor.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRow {
    pub index: usize,
    pub x: f64,
    /// Fraction of trials that included the item.
    pub freq: f64,
    pub std_err: f64,
    /// Designed or guaranteed inclusion probability.
    pub floor: f64,
    /// `freq / floor`, absent when the floor is 0.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundingReport {
    pub algorithm: String,
    /// Trial `t` used stream `t` of this seed.
    pub seed: u64,
    pub trials: u64,
    /// Column sparsity (or largest edge / path size) used by the floors.
    pub k: usize,
    pub lp_objective: f64,
    pub mean_objective: f64,
    pub objective_std_err: f64,
    /// Trials whose output violated a capacity; must be 0.
    pub violations: u64,
    /// Indices of the violating trials, for replay.
    pub violation_trials: Vec<u64>,
    pub items: Vec<ItemRow>,
    /// Per-chance inclusion frequencies (multi-chance rounding only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chance_freqs: Option<Vec<Vec<f64>>>,
    /// Calibration warnings (estimates below target, clamped keeps).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flagged: Vec<String>,
}

impl RoundingReport {
    /// `LP / mean objective`, the empirical approximation ratio.
    pub fn lp_ratio(&self) -> Option<f64> {
        (self.mean_objective > 0.0).then(|| self.lp_objective / self.mean_objective)
    }

    /// Smallest `freq / floor` over items with a positive floor.
    pub fn min_ratio(&self) -> Option<f64> {
        self.items.iter().filter_map(|r| r.ratio).reduce(f64::min)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per item: index, x_j, freq, std_err, floor, ratio.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "x", "freq", "std_err", "floor", "ratio"])?;
        for r in &self.items {
            w.write_record([
                r.index.to_string(),
                r.x.to_string(),
                r.freq.to_string(),
                r.std_err.to_string(),
                r.floor.to_string(),
                r.ratio.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
