use serde::{Deserialize, Serialize};

use super::params::ParameterSet;
use crate::scalar::{lit, Scalar};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay; 0 gives plain Adam.
    pub weight_decay: f64,
    /// Global gradient norm clip; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            clip_norm: 1.0,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.clip_norm >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    step: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParameterSet<T>) -> Self {
        let zeros = || params.iter().map(|(_, t)| vec![T::zero(); t.len()]).collect();
        Self {
            config,
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update; `grads[i]` pairs with parameter `i`. Returns the
    /// gradient norm before clipping.
    pub fn update(&mut self, params: &mut ParameterSet<T>, grads: &[Vec<T>]) -> Result<f64> {
        if grads.len() != params.len() {
            return Err(Error::Shape(format!("{} gradients for {} parameters", grads.len(), params.len())));
        }
        let mut sq = 0.0f64;
        for (i, g) in grads.iter().enumerate() {
            if g.len() != params.tensor(i).len() {
                return Err(Error::Shape(format!("gradient for {} has wrong length", params.name(i))));
            }
            for &x in g {
                let x = x.to_f64().unwrap_or(f64::NAN);
                if !x.is_finite() {
                    return Err(Error::NonFinite(format!("gradient of {}", params.name(i))));
                }
                sq += x * x;
            }
        }
        let norm = sq.sqrt();
        let c = &self.config;
        let clip = if c.clip_norm > 0.0 && norm > c.clip_norm { c.clip_norm / norm } else { 1.0 };
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2, eps): (T, T, T) = (lit(c.beta1), lit(c.beta2), lit(c.eps));
        let lr: T = lit(c.learning_rate);
        let decay: T = lit(1.0 - c.learning_rate * c.weight_decay);
        let (clip, bc1, bc2): (T, T, T) = (lit(clip), lit(bc1), lit(bc2));
        for (i, g) in grads.iter().enumerate() {
            let p = &mut params.tensor_mut(i).data;
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                let gj = g[j] * clip;
                m[j] = b1 * m[j] + (T::one() - b1) * gj;
                v[j] = b2 * v[j] + (T::one() - b2) * gj * gj;
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                p[j] = p[j] * decay - lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(norm)
    }
}
