use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::behavior::{BehaviorKind, BehaviorPolicy, BehaviorRunner};
use super::mix_seed;
use crate::sim::{run_episode, MarketModel};
use crate::types::{CampaignConfig, RewardMode, Trajectory};
use crate::{Error, Result};

pub const GENERATOR_VERSION: &str = concat!("probid-gen/", env!("CARGO_PKG_VERSION"));

const STREAM_CAMPAIGN: u64 = 1;
const STREAM_BEHAVIOR: u64 = 2;
const STREAM_NOISE: u64 = 3;

/// Campaign settings drawn uniformly per trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampaignRanges {
    pub budget_lo: f64,
    pub budget_hi: f64,
    pub cpa_lo: f64,
    pub cpa_hi: f64,
    pub horizon: usize,
    pub reward_mode: RewardMode,
}

impl CampaignRanges {
    /// Budget and CPA ranges where both constraints bind for typical loggers.
    pub fn desk(horizon: usize) -> Self {
        Self {
            budget_lo: 40.0,
            budget_hi: 120.0,
            cpa_lo: 3.0,
            cpa_hi: 8.0,
            horizon,
            reward_mode: RewardMode::Dense,
        }
    }

    pub fn fixed(cfg: CampaignConfig) -> Self {
        Self {
            budget_lo: cfg.budget,
            budget_hi: cfg.budget,
            cpa_lo: cfg.cpa_target,
            cpa_hi: cfg.cpa_target,
            horizon: cfg.horizon,
            reward_mode: cfg.reward_mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.budget_lo > 0.0
            && self.budget_hi >= self.budget_lo
            && self.cpa_lo > 0.0
            && self.cpa_hi >= self.cpa_lo
            && self.budget_hi.is_finite()
            && self.cpa_hi.is_finite()
            && self.horizon >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid campaign ranges {self:?}")))
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> CampaignConfig {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        CampaignConfig {
            budget: self.budget_lo + u * (self.budget_hi - self.budget_lo),
            cpa_target: self.cpa_lo + v * (self.cpa_hi - self.cpa_lo),
            horizon: self.horizon,
            reward_mode: self.reward_mode,
        }
    }

    /// The campaign used for episode `seed`; shared by generation and evaluation.
    pub fn for_seed(&self, seed: u64) -> CampaignConfig {
        self.sample(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, STREAM_CAMPAIGN)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n: usize,
    pub seed_base: u64,
    pub campaigns: CampaignRanges,
    pub mixture: Vec<(BehaviorPolicy, f64)>,
}

/// Mixed logging population: fixed multipliers, budget pacers and drifting
/// bidders, spanning timid to aggressive.
pub fn desk_mixture() -> Vec<(BehaviorPolicy, f64)> {
    vec![
        (
            BehaviorPolicy {
                kind: BehaviorKind::ConstantLambda,
                lambda_lo: 0.6,
                lambda_hi: 2.5,
                gain: 0.0,
                step_sd: 0.0,
                noise_scale: 0.1,
                early_stop_prob: 0.0,
            },
            0.35,
        ),
        (
            BehaviorPolicy {
                kind: BehaviorKind::NoisyPidPacer,
                lambda_lo: 0.8,
                lambda_hi: 2.5,
                gain: 3.0,
                step_sd: 0.0,
                noise_scale: 0.15,
                early_stop_prob: 0.0,
            },
            0.4,
        ),
        (
            BehaviorPolicy {
                kind: BehaviorKind::RandomWalkLambda,
                lambda_lo: 0.5,
                lambda_hi: 3.0,
                gain: 0.0,
                step_sd: 0.15,
                noise_scale: 0.1,
                early_stop_prob: 0.01,
            },
            0.25,
        ),
    ]
}

impl DatasetSpec {
    pub fn desk(n: usize, seed_base: u64, horizon: usize) -> Self {
        Self {
            n,
            seed_base,
            campaigns: CampaignRanges::desk(horizon),
            mixture: desk_mixture(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("dataset.n must be at least 1".into()));
        }
        self.campaigns.validate()?;
        if self.mixture.is_empty() {
            return Err(Error::Config("dataset mixture is empty".into()));
        }
        for (p, w) in &self.mixture {
            p.validate()?;
            if !(*w > 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("mixture weight must be positive, got {w}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub seed: u64,
    pub policy: BehaviorKind,
    pub steps: usize,
    pub budget: f64,
    pub cpa_target: f64,
    pub total_reward: f64,
    pub total_cost: f64,
    /// `None` when the trajectory acquired no reward.
    pub realized_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub count: usize,
    pub horizon: usize,
    pub reward_mode: RewardMode,
    pub seed_first: u64,
    pub seed_last: u64,
    pub generator_version: String,
    pub trajectories: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn ratio_spread(&self) -> Option<(f64, f64)> {
        let mut it = self.trajectories.iter().filter_map(|e| e.realized_ratio);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), r| (lo.min(r), hi.max(r))))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub manifest: DatasetManifest,
}

fn entry(seed: u64, policy: BehaviorKind, t: &Trajectory) -> ManifestEntry {
    let ratio = t.realized_ratio();
    ManifestEntry {
        seed,
        policy,
        steps: t.len(),
        budget: t.campaign.budget,
        cpa_target: t.campaign.cpa_target,
        total_reward: t.total_reward,
        total_cost: t.total_cost,
        realized_ratio: ratio.is_finite().then_some(ratio),
    }
}

fn pick(mixture: &[(BehaviorPolicy, f64)], rng: &mut impl Rng) -> BehaviorPolicy {
    let total: f64 = mixture.iter().map(|(_, w)| w).sum();
    let mut u = rng.random::<f64>() * total;
    for (p, w) in mixture {
        if u < *w {
            return *p;
        }
        u -= w;
    }
    mixture[mixture.len() - 1].0
}

/// Rolls out `spec.n` logging episodes; trajectory `i` uses seed `seed_base + i`
/// for its campaign draw, its policy draw and its market.
pub fn generate_dataset(spec: &DatasetSpec, market: &MarketModel) -> Result<Dataset> {
    spec.validate()?;
    market.validate()?;
    if market.horizon() != spec.campaigns.horizon {
        return Err(Error::Config(format!(
            "market profile covers {} steps but the campaign horizon is {}",
            market.horizon(),
            spec.campaigns.horizon
        )));
    }
    let mut trajectories = Vec::with_capacity(spec.n);
    let mut entries = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let seed = spec.seed_base.wrapping_add(i as u64);
        let campaign = spec.campaigns.for_seed(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, STREAM_BEHAVIOR));
        let policy = pick(&spec.mixture, &mut rng);
        let mut runner = BehaviorRunner::new(policy, rng.random());
        let t = run_episode(&mut runner, &campaign, &market.with_seed(seed))?;
        entries.push(entry(seed, policy.kind, &t));
        trajectories.push(t);
    }
    let manifest = DatasetManifest {
        count: spec.n,
        horizon: spec.campaigns.horizon,
        reward_mode: spec.campaigns.reward_mode,
        seed_first: spec.seed_base,
        seed_last: spec.seed_base.wrapping_add(spec.n as u64 - 1),
        generator_version: GENERATOR_VERSION.to_string(),
        trajectories: entries,
    };
    Ok(Dataset {
        trajectories,
        manifest,
    })
}

/// The deliberately wasteful logger used for contamination experiments.
pub fn noise_policy() -> BehaviorPolicy {
    BehaviorPolicy {
        kind: BehaviorKind::RandomWalkLambda,
        lambda_lo: 0.5,
        lambda_hi: 4.0,
        gain: 0.0,
        step_sd: 0.6,
        noise_scale: 0.8,
        early_stop_prob: 0.0,
    }
}

/// Replaces `floor(fraction * n)` randomly chosen trajectories with rollouts
/// of [`noise_policy`] on the same campaign and market seed.
pub fn inject_noise_trajectories(
    dataset: &Dataset,
    fraction: f64,
    market: &MarketModel,
    seed: u64,
) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!("noise fraction must lie in [0, 1], got {fraction}")));
    }
    let n = dataset.trajectories.len();
    let count = (fraction * n as f64).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, STREAM_NOISE));
    order.shuffle(&mut rng);
    let mut out = dataset.clone();
    let policy = noise_policy();
    for &i in &order[..count] {
        let e = &dataset.manifest.trajectories[i];
        let campaign = dataset.trajectories[i].campaign;
        let mut runner = BehaviorRunner::new(policy, mix_seed(e.seed, STREAM_NOISE));
        let t = run_episode(&mut runner, &campaign, &market.with_seed(e.seed))?;
        out.manifest.trajectories[i] = entry(e.seed, policy.kind, &t);
        out.trajectories[i] = t;
    }
    Ok(out)
}
