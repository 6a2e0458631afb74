use serde::{Deserialize, Serialize};

use crate::types::Trajectory;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CroParams {
    /// Exponent of the ratio penalty inside the utility.
    pub gamma_u: f64,
    /// Softmax temperature for regret weights, in value units.
    pub tau: f64,
    /// Counterfactual candidates per step.
    pub k: usize,
    pub eps: f64,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
}

/// Configuration-side view of [`CroParams`]: the temperature may be left
/// unset and is then derived from the training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CroSettings {
    pub gamma_u: f64,
    #[serde(default)]
    pub tau: Option<f64>,
    pub k: usize,
    pub eps: f64,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
}

impl Default for CroSettings {
    fn default() -> Self {
        let p = CroParams::with_tau(1.0);
        Self {
            gamma_u: p.gamma_u,
            tau: None,
            k: p.k,
            eps: p.eps,
            alpha: p.alpha,
            beta: p.beta,
            eta: p.eta,
        }
    }
}

impl CroSettings {
    pub fn resolve(&self, trajectories: &[Trajectory]) -> CroParams {
        CroParams {
            gamma_u: self.gamma_u,
            tau: self.tau.unwrap_or_else(|| default_tau(trajectories)),
            k: self.k,
            eps: self.eps,
            alpha: self.alpha,
            beta: self.beta,
            eta: self.eta,
        }
    }
}

impl CroParams {
    pub fn with_tau(tau: f64) -> Self {
        Self {
            gamma_u: 2.0,
            tau,
            k: 8,
            eps: 1e-8,
            alpha: 1.0,
            beta: 1.0,
            eta: 0.01,
        }
    }

    /// Temperature set to a tenth of the mean episode value.
    pub fn for_dataset(trajectories: &[Trajectory]) -> Self {
        Self::with_tau(default_tau(trajectories))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.gamma_u >= 1.0 && self.gamma_u.is_finite()) {
            return bad(format!("gamma_u must be >= 1, got {}", self.gamma_u));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("eta", self.eta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        Ok(())
    }
}

pub fn default_tau(trajectories: &[Trajectory]) -> f64 {
    let n = trajectories.len().max(1) as f64;
    let mean = trajectories.iter().map(|t| t.total_reward).sum::<f64>() / n;
    if mean > 0.0 {
        0.1 * mean
    } else {
        1e-3
    }
}

/// Value and cost accumulated before the current step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpisodePrefix {
    pub h_r: f64,
    pub h_c: f64,
}
