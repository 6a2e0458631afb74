use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::types::Impression;
use crate::{Error, Result};

/// Stochastic stand-in for the competing bidders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketModel {
    /// Mean impression count per step.
    pub impressions_mean: f64,
    /// Gamma shape of the per-step Poisson rate; smaller is burstier.
    pub impressions_dispersion: f64,
    /// Beta parameters of the impression value.
    pub value_alpha: f64,
    pub value_beta: f64,
    /// Log-normal parameters of the base clearing price.
    pub lwc_log_mean: f64,
    pub lwc_log_sd: f64,
    /// How strongly clearing prices track impression value, in `[0, 1]`.
    pub lwc_value_coupling: f64,
    /// Per-step clearing price multiplier; its length is the horizon.
    pub lwc_profile: Vec<f64>,
    pub seed: u64,
}

/// Smooth single-peak intraday curve: `1 + amplitude * sin(pi * (t - 0.5) / T)`.
pub fn default_profile(horizon: usize, amplitude: f64) -> Vec<f64> {
    (1..=horizon)
        .map(|t| 1.0 + amplitude * (std::f64::consts::PI * (t as f64 - 0.5) / horizon as f64).sin())
        .collect()
}

impl MarketModel {
    pub fn desk(horizon: usize) -> Self {
        Self {
            impressions_mean: 40.0,
            impressions_dispersion: 8.0,
            value_alpha: 1.5,
            value_beta: 28.5,
            lwc_log_mean: (0.3f64).ln(),
            lwc_log_sd: 0.6,
            lwc_value_coupling: 0.6,
            lwc_profile: default_profile(horizon, 0.6),
            seed: 0,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn horizon(&self) -> usize {
        self.lwc_profile.len()
    }

    pub fn mean_value(&self) -> f64 {
        self.value_alpha / (self.value_alpha + self.value_beta)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("market.impressions_mean", self.impressions_mean),
            ("market.impressions_dispersion", self.impressions_dispersion),
            ("market.value_alpha", self.value_alpha),
            ("market.value_beta", self.value_beta),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{key} must be positive, got {v}")));
            }
        }
        if !(self.lwc_log_sd >= 0.0 && self.lwc_log_mean.is_finite()) {
            return Err(Error::Config("market lwc parameters must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.lwc_value_coupling) {
            return Err(Error::Config("market.lwc_value_coupling must lie in [0, 1]".into()));
        }
        if self.lwc_profile.is_empty() || self.lwc_profile.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::Config(
                "market lwc profile must be nonempty with positive entries".into(),
            ));
        }
        Ok(())
    }

    /// Draws the impressions arriving at 1-based step `t`.
    pub(crate) fn draw_batch(&self, t: usize, rng: &mut ChaCha8Rng) -> Vec<Impression> {
        let shape = self.impressions_dispersion;
        let rate = Gamma::new(shape, self.impressions_mean / shape)
            .expect("validated gamma")
            .sample(rng);
        let n = if rate > 0.0 {
            Poisson::new(rate).map(|p| p.sample(rng) as usize).unwrap_or(0)
        } else {
            0
        }
        .max(1);
        let value = Beta::new(self.value_alpha, self.value_beta).expect("validated beta");
        let price = LogNormal::new(self.lwc_log_mean, self.lwc_log_sd).expect("validated lognormal");
        let level = self.lwc_profile[(t - 1).min(self.lwc_profile.len() - 1)];
        let vbar = self.mean_value();
        let k = self.lwc_value_coupling;
        (0..n)
            .map(|_| {
                let v: f64 = value.sample(rng).clamp(0.0, 1.0);
                let base: f64 = price.sample(rng);
                let draw: f64 = rng.random();
                Impression {
                    value: v,
                    least_winning_cost: level * base * ((1.0 - k) + k * v / vbar),
                    conversion_draw: draw,
                }
            })
            .collect()
    }
}
