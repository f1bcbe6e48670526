//! Sample-size rule, event-frequency estimation and attenuation factors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative error used where callers do not pick one.
pub const DEFAULT_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationSpec {
    /// Lower bound on the probability being estimated.
    pub c: f64,
    /// Relative error.
    pub epsilon: f64,
    /// Failure probability.
    pub delta: f64,
}

impl EstimationSpec {
    pub fn new(c: f64, epsilon: f64, delta: f64) -> Result<Self> {
        let spec = EstimationSpec { c, epsilon, delta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c <= 1.0) {
            return Err(Error::Param(format!("c must lie in (0,1], got {}", self.c)));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::Param(format!("epsilon must lie in (0,1], got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Param(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        Ok(())
    }
}

/// `ceil(3 / (c eps^2) * ln(1/delta))`.
pub fn required_samples(spec: &EstimationSpec) -> u64 {
    let v = 3.0 / (spec.c * spec.epsilon * spec.epsilon) * (1.0 / spec.delta).ln();
    // absorb rounding noise so that exact integers are not bumped up
    (v - 1e-9).ceil().max(1.0) as u64
}

/// Empirical frequency of `oracle` over `n` runs.
pub fn estimate_event<R, F>(mut oracle: F, n: u64, rng: &mut R) -> f64
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> bool,
{
    assert!(n >= 1, "estimate_event needs at least one run");
    let hits = (0..n).filter(|_| oracle(rng)).count();
    hits as f64 / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeepProb {
    pub prob: f64,
    /// Set when the estimate did not exceed the target, so no attenuation applied.
    pub clamped: bool,
}

/// `min(1, c / estimate)`.
pub fn attenuation_keep_prob(estimate: f64, c: f64) -> Result<KeepProb> {
    if !(estimate >= 0.0) || !(c > 0.0) {
        return Err(Error::Domain(format!(
            "need estimate >= 0 and c > 0, got estimate {estimate}, c {c}"
        )));
    }
    if estimate == 0.0 {
        return Err(Error::Domain(format!("estimate is 0 but target is {c}")));
    }
    if estimate <= c {
        Ok(KeepProb { prob: 1.0, clamped: true })
    } else {
        Ok(KeepProb { prob: c / estimate, clamped: false })
    }
}
