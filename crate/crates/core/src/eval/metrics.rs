use serde::{Deserialize, Serialize};

use crate::types::Trajectory;

/// `value * min(1, (1/ar)^exponent)`; a non-finite ratio scores 0.
pub fn penalized_score(value: f64, ar: f64, exponent: f64) -> f64 {
    if !ar.is_finite() {
        0.0
    } else if ar <= 1.0 {
        value
    } else {
        value * (1.0 / ar).powf(exponent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub value: f64,
    pub cost: f64,
    pub target: f64,
    /// Cost per unit of value; infinite when no value was acquired.
    pub realized_cpa: f64,
    pub ar: f64,
    pub exceeded: bool,
    pub score: f64,
}

impl EpisodeReport {
    pub fn new(value: f64, cost: f64, target: f64, exponent: f64) -> Self {
        let realized_cpa = if value > 0.0 { cost / value } else { f64::INFINITY };
        let ar = realized_cpa / target;
        Self {
            value,
            cost,
            target,
            realized_cpa,
            ar,
            exceeded: ar > 1.0,
            score: penalized_score(value, ar, exponent),
        }
    }

    pub fn from_trajectory(t: &Trajectory, exponent: f64) -> Self {
        Self::new(t.total_reward, t.total_cost, t.campaign.cpa_target, exponent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_value: f64,
    pub mean_cost: f64,
    /// Mean of per-episode ratios over episodes that acquired value.
    pub mean_ar: f64,
    /// `sum(cost) / sum(value * target)` over all episodes.
    pub pooled_ar: f64,
    pub er: f64,
    pub mean_score: f64,
    pub zero_value_episodes: usize,
}

impl EvalSummary {
    pub fn from_reports(reports: &[EpisodeReport]) -> Self {
        let n = reports.len().max(1) as f64;
        let finite: Vec<f64> = reports.iter().map(|r| r.ar).filter(|a| a.is_finite()).collect();
        let mean_ar = if finite.is_empty() {
            f64::INFINITY
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };
        let cost: f64 = reports.iter().map(|r| r.cost).sum();
        let weighted: f64 = reports.iter().map(|r| r.value * r.target).sum();
        Self {
            episodes: reports.len(),
            mean_value: reports.iter().map(|r| r.value).sum::<f64>() / n,
            mean_cost: cost / n,
            mean_ar,
            pooled_ar: if weighted > 0.0 { cost / weighted } else { f64::INFINITY },
            er: reports.iter().filter(|r| r.exceeded).count() as f64 / n,
            mean_score: reports.iter().map(|r| r.score).sum::<f64>() / n,
            zero_value_episodes: reports.len() - finite.len(),
        }
    }

    /// Metrics of the logged trajectories themselves.
    pub fn of_dataset(trajectories: &[Trajectory], exponent: f64) -> Self {
        let reports: Vec<_> = trajectories.iter().map(|t| EpisodeReport::from_trajectory(t, exponent)).collect();
        Self::from_reports(&reports)
    }
}
