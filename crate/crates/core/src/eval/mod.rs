//! Closed-loop evaluation of trained models.

mod metrics;
mod pacing;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use metrics::{penalized_score, EpisodeReport, EvalSummary};
pub use pacing::{init_pacing, ModelBidder, PacingState};

use crate::dataset::CampaignRanges;
use crate::nn::PolicyModel;
use crate::scalar::Scalar;
use crate::sim::{run_episode, MarketModel};
use crate::types::CampaignConfig;
use crate::{Error, Result};

pub const DEFAULT_SCORE_EXPONENT: f64 = 2.0;

/// Which episodes to play. Episode `i` uses seed `seed_base + i` for both
/// its campaign draw and its market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSpec {
    pub market: MarketModel,
    pub campaigns: CampaignRanges,
    pub n_episodes: usize,
    pub seed_base: u64,
    pub score_exponent: f64,
    /// Multiplies every drawn budget.
    pub budget_scale: f64,
    /// Replaces every drawn CPA target.
    pub cpa_override: Option<f64>,
}

impl EvalSpec {
    pub fn new(market: MarketModel, campaigns: CampaignRanges, n_episodes: usize, seed_base: u64) -> Self {
        Self {
            market,
            campaigns,
            n_episodes,
            seed_base,
            score_exponent: DEFAULT_SCORE_EXPONENT,
            budget_scale: 1.0,
            cpa_override: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_episodes == 0 {
            return Err(Error::Config("evaluation needs at least one episode".into()));
        }
        if !(self.budget_scale > 0.0 && self.budget_scale.is_finite()) {
            return Err(Error::Config(format!("budget_scale must be positive, got {}", self.budget_scale)));
        }
        if let Some(t) = self.cpa_override {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("CPA target must be positive, got {t}")));
            }
        }
        self.campaigns.validate()?;
        self.market.validate()
    }

    pub fn campaign(&self, i: usize) -> CampaignConfig {
        let mut c = self.campaigns.for_seed(self.seed_base.wrapping_add(i as u64));
        c.budget *= self.budget_scale;
        if let Some(t) = self.cpa_override {
            c.cpa_target = t;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: Vec<EpisodeReport>,
    pub summary: EvalSummary,
}

fn run_one<T: Scalar>(model: &PolicyModel<T>, spec: &EvalSpec, i: usize) -> Result<EpisodeReport> {
    let cfg = spec.campaign(i);
    let market = spec.market.with_seed(spec.seed_base.wrapping_add(i as u64));
    let mut bidder = ModelBidder::new(model, &cfg);
    let t = run_episode(&mut bidder, &cfg, &market)?;
    Ok(EpisodeReport::new(t.total_reward, t.total_cost, cfg.cpa_target, spec.score_exponent))
}

/// Plays `spec.n_episodes` episodes on up to `threads` worker threads.
/// Results do not depend on the thread count.
pub fn evaluate<T: Scalar>(model: &PolicyModel<T>, spec: &EvalSpec, threads: usize) -> Result<EvalReport> {
    spec.validate()?;
    let n = spec.n_episodes;
    let threads = threads.clamp(1, n);
    let mut slots: Vec<Option<Result<EpisodeReport>>> = (0..n).map(|_| None).collect();
    if threads == 1 {
        for (i, s) in slots.iter_mut().enumerate() {
            *s = Some(run_one(model, spec, i));
        }
    } else {
        let chunk = n.div_ceil(threads);
        std::thread::scope(|scope| {
            for (c, part) in slots.chunks_mut(chunk).enumerate() {
                scope.spawn(move || {
                    for (j, s) in part.iter_mut().enumerate() {
                        *s = Some(run_one(model, spec, c * chunk + j));
                    }
                });
            }
        });
    }
    let episodes = slots.into_iter().map(|s| s.expect("every episode ran")).collect::<Result<Vec<_>>>()?;
    let summary = EvalSummary::from_reports(&episodes);
    Ok(EvalReport { episodes, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub target: f64,
    pub value: f64,
    pub ar: f64,
    pub er: f64,
    pub score: f64,
}

/// Evaluates one model under each CPA target, holding everything else fixed.
pub fn cpa_sensitivity_sweep<T: Scalar>(
    model: &PolicyModel<T>,
    spec: &EvalSpec,
    targets: &[f64],
    threads: usize,
) -> Result<Vec<SweepRow>> {
    targets
        .iter()
        .map(|&target| {
            let s = EvalSpec {
                cpa_override: Some(target),
                ..spec.clone()
            };
            let r = evaluate(model, &s, threads)?.summary;
            Ok(SweepRow {
                target,
                value: r.mean_value,
                ar: r.mean_ar,
                er: r.er,
                score: r.mean_score,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Config(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::io("writing sweep csv", e))
}

pub fn write_episodes_csv(path: &Path, reports: &[EpisodeReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    for r in reports {
        w.serialize(r).map_err(|e| Error::Config(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
