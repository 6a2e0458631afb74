use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::sim::{BidPolicy, Observation};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorKind {
    ConstantLambda,
    NoisyPidPacer,
    RandomWalkLambda,
}

/// A logging policy family. Multipliers are expressed in units of the
/// campaign's CPA target, so `lambda_lo = 1` bids exactly the target on a
/// unit-value impression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorPolicy {
    pub kind: BehaviorKind,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    /// Log-space gain on the pacing error (pid pacer only).
    pub gain: f64,
    /// Log-space step deviation (random walk only). The walk is clamped to
    /// `[lambda_lo, lambda_hi]`.
    pub step_sd: f64,
    /// Log-normal jitter applied to every emitted multiplier.
    pub noise_scale: f64,
    /// Per-step probability of abandoning the episode (from step 2 on).
    pub early_stop_prob: f64,
}

impl BehaviorPolicy {
    pub fn constant(lambda: f64) -> Self {
        Self {
            kind: BehaviorKind::ConstantLambda,
            lambda_lo: lambda,
            lambda_hi: lambda,
            gain: 0.0,
            step_sd: 0.0,
            noise_scale: 0.0,
            early_stop_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda_lo >= 0.0
            && self.lambda_hi >= self.lambda_lo
            && self.lambda_hi.is_finite()
            && self.gain >= 0.0
            && self.step_sd >= 0.0
            && self.noise_scale >= 0.0
            && (0.0..1.0).contains(&self.early_stop_prob);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid behavior policy {self:?}")))
        }
    }
}

/// One rollout's instance of a [`BehaviorPolicy`].
#[derive(Debug, Clone)]
pub struct BehaviorRunner {
    spec: BehaviorPolicy,
    rng: ChaCha8Rng,
    base: Option<f64>,
    current: f64,
}

impl BehaviorRunner {
    pub fn new(spec: BehaviorPolicy, seed: u64) -> Self {
        Self {
            spec,
            rng: ChaCha8Rng::seed_from_u64(seed),
            base: None,
            current: 0.0,
        }
    }

    fn jitter(&mut self) -> f64 {
        if self.spec.noise_scale == 0.0 {
            1.0
        } else {
            let z: f64 = self.rng.sample(StandardNormal);
            (self.spec.noise_scale * z).exp()
        }
    }
}

impl BidPolicy for BehaviorRunner {
    fn bid(&mut self, obs: &Observation<'_>) -> Result<Option<f64>> {
        if obs.t > 1 && self.spec.early_stop_prob > 0.0 && self.rng.random::<f64>() < self.spec.early_stop_prob {
            return Ok(None);
        }
        let base = match self.base {
            Some(b) => b,
            None => {
                let u: f64 = self.rng.random();
                let b = obs.campaign.cpa_target
                    * (self.spec.lambda_lo + u * (self.spec.lambda_hi - self.spec.lambda_lo));
                self.base = Some(b);
                self.current = b;
                b
            }
        };
        let lambda = match self.spec.kind {
            BehaviorKind::ConstantLambda => base,
            BehaviorKind::NoisyPidPacer => {
                let horizon = obs.campaign.horizon as f64;
                let target = (obs.t as f64 - 1.0) / horizon;
                let spent = obs.spent / obs.campaign.budget;
                base * (self.spec.gain * (target - spent)).exp()
            }
            BehaviorKind::RandomWalkLambda => {
                if obs.t > 1 {
                    // the walk stays inside the configured multiplier range
                    let z: f64 = self.rng.sample(StandardNormal);
                    let rho = obs.campaign.cpa_target;
                    self.current = (self.current * (self.spec.step_sd * z).exp())
                        .clamp(rho * self.spec.lambda_lo, rho * self.spec.lambda_hi);
                }
                self.current
            }
        };
        Ok(Some(lambda * self.jitter()))
    }
}
