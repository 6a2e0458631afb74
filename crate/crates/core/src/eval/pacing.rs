use std::collections::VecDeque;

use crate::nn::{PolicyModel, SeqBatch};
use crate::scalar::Scalar;
use crate::sim::{BidPolicy, Observation};
use crate::types::{CampaignConfig, STATE_DIM};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
struct ContextStep {
    rtg: f64,
    ctg: f64,
    state: [f64; STATE_DIM],
    action: f64,
    t: usize,
}

/// Closed-loop conditioning: remaining value and budget tokens plus the
/// recent (R, C, s, a) history.
#[derive(Debug, Clone, PartialEq)]
pub struct PacingState {
    pub rtg_token: f64,
    pub ctg_token: f64,
    context: VecDeque<ContextStep>,
}

/// `C_1 = B`, `R_1 = B / target`.
pub fn init_pacing(cfg: &CampaignConfig) -> PacingState {
    PacingState {
        rtg_token: cfg.budget / cfg.cpa_target,
        ctg_token: cfg.budget,
        context: VecDeque::new(),
    }
}

impl PacingState {
    pub fn context_len(&self) -> usize {
        self.context.len()
    }

    /// Appends the current step, runs the model and returns the action mean.
    pub fn act<T: Scalar>(&mut self, model: &PolicyModel<T>, state: &[f64; STATE_DIM], t: usize) -> Result<f64> {
        let window = model.config.context_steps;
        self.context.push_back(ContextStep {
            rtg: self.rtg_token,
            ctg: self.ctg_token,
            state: *state,
            action: 0.0,
            t: t.min(model.config.max_timestep),
        });
        while self.context.len() > window {
            self.context.pop_front();
        }
        let n = self.context.len();
        let mut batch = SeqBatch::new(1, n);
        for (p, s) in self.context.iter().enumerate() {
            batch.set_step(0, p, s.rtg, s.ctg, &s.state, s.action, s.t);
        }
        let pred = model.predict(&batch)?;
        let lambda = pred.mu[n - 1];
        if let Some(last) = self.context.back_mut() {
            last.action = lambda;
        }
        Ok(lambda)
    }

    /// Subtracts realized feedback; tokens may go negative.
    pub fn observe(&mut self, reward: f64, cost: f64) {
        self.rtg_token -= reward;
        self.ctg_token -= cost;
    }
}

/// Adapter running a model as a simulator bidder.
#[derive(Debug)]
pub struct ModelBidder<'m, T> {
    model: &'m PolicyModel<T>,
    pub pacing: PacingState,
}

impl<'m, T: Scalar> ModelBidder<'m, T> {
    pub fn new(model: &'m PolicyModel<T>, cfg: &CampaignConfig) -> Self {
        Self {
            model,
            pacing: init_pacing(cfg),
        }
    }
}

impl<T: Scalar> BidPolicy for ModelBidder<'_, T> {
    fn bid(&mut self, obs: &Observation<'_>) -> Result<Option<f64>> {
        self.pacing.act(self.model, obs.state, obs.t).map(Some)
    }

    fn observe(&mut self, reward: f64, cost: f64) {
        self.pacing.observe(reward, cost);
    }
}
