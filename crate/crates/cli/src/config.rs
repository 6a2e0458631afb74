//! Experiment configuration file: sectioned TOML, every key required unless
//! noted, unknown keys rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use probid::cdpr::FilterParams;
use probid::cro::{CroSettings, TrainConfig};
use probid::dataset::{BehaviorKind, BehaviorPolicy, CampaignRanges, DatasetSpec};
use probid::experiments::{EvalSettings, Precision, Recipe};
use probid::nn::{AdamConfig, ModelConfig};
use probid::sim::{default_profile, MarketModel};
use probid::RewardMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub threads: usize,
    pub precision: Precision,
    pub market: MarketSection,
    pub campaign: CampaignSection,
    pub dataset: DatasetSection,
    pub filter: FilterParams,
    pub cro: CroSettings,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub sweep_k: SweepKSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    pub impressions_mean: f64,
    pub impressions_dispersion: f64,
    pub value_alpha: f64,
    pub value_beta: f64,
    pub lwc_log_mean: f64,
    pub lwc_log_sd: f64,
    pub lwc_value_coupling: f64,
    /// Height of the intraday price bump.
    pub lwc_profile_amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSection {
    pub horizon: usize,
    pub budget_lo: f64,
    pub budget_hi: f64,
    pub cpa_lo: f64,
    pub cpa_hi: f64,
    pub reward_mode: RewardMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyEntry {
    pub kind: BehaviorKind,
    pub weight: f64,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub gain: f64,
    pub step_sd: f64,
    pub noise_scale: f64,
    pub early_stop_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub n: usize,
    /// Share of the log replaced by wasteful rollouts.
    pub noise_fraction: f64,
    pub policies: Vec<PolicyEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_mult: usize,
    pub context_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub max_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub final_lr_fraction: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub eval_every: usize,
    pub detach_predictor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub episodes: usize,
    pub budget_scale: f64,
    pub score_exponent: f64,
    /// Targets used by `sweep-cpa` when none are given on the command line.
    pub cpa_targets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepKSection {
    pub ks: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let msg = inner.message().to_string();
            if path == "." || path.is_empty() {
                anyhow::anyhow!("config: {msg}")
            } else {
                anyhow::anyhow!("config key `{path}`: {msg}")
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg = Self::parse(&text).with_context(|| format!("in {}", path.display()))?;
        cfg.recipe()?.validate().with_context(|| format!("in {}", path.display()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn recipe(&self) -> Result<Recipe> {
        let horizon = self.campaign.horizon;
        if self.dataset.policies.is_empty() {
            bail!("config key `dataset.policies`: at least one logging policy is required");
        }
        if !(0.0..=1.0).contains(&self.dataset.noise_fraction) {
            bail!(
                "config key `dataset.noise_fraction`: must lie in [0, 1], got {}",
                self.dataset.noise_fraction
            );
        }
        if self.filter.t_max < horizon {
            bail!("config key `filter.t_max`: {} is shorter than the horizon {horizon}", self.filter.t_max);
        }
        let m = &self.market;
        let market = MarketModel {
            impressions_mean: m.impressions_mean,
            impressions_dispersion: m.impressions_dispersion,
            value_alpha: m.value_alpha,
            value_beta: m.value_beta,
            lwc_log_mean: m.lwc_log_mean,
            lwc_log_sd: m.lwc_log_sd,
            lwc_value_coupling: m.lwc_value_coupling,
            lwc_profile: default_profile(horizon, m.lwc_profile_amplitude),
            seed: 0,
        };
        let c = &self.campaign;
        let dataset = DatasetSpec {
            n: self.dataset.n,
            seed_base: 0,
            campaigns: CampaignRanges {
                budget_lo: c.budget_lo,
                budget_hi: c.budget_hi,
                cpa_lo: c.cpa_lo,
                cpa_hi: c.cpa_hi,
                horizon,
                reward_mode: c.reward_mode,
            },
            mixture: self
                .dataset
                .policies
                .iter()
                .map(|p| {
                    (
                        BehaviorPolicy {
                            kind: p.kind,
                            lambda_lo: p.lambda_lo,
                            lambda_hi: p.lambda_hi,
                            gain: p.gain,
                            step_sd: p.step_sd,
                            noise_scale: p.noise_scale,
                            early_stop_prob: p.early_stop_prob,
                        },
                        p.weight,
                    )
                })
                .collect(),
        };
        let ms = &self.model;
        let model = ModelConfig {
            d_model: ms.d_model,
            n_layers: ms.n_layers,
            n_heads: ms.n_heads,
            ffn_mult: ms.ffn_mult,
            context_steps: ms.context_steps,
            ..ModelConfig::desk(horizon, 1.0)
        };
        let t = &self.train;
        let train = TrainConfig {
            max_steps: t.max_steps,
            batch_size: t.batch_size,
            seed: self.seed,
            optimizer: AdamConfig {
                learning_rate: t.learning_rate,
                beta1: t.adam_beta1,
                beta2: t.adam_beta2,
                eps: t.adam_eps,
                weight_decay: t.weight_decay,
                clip_norm: t.clip_norm,
            },
            eval_every: t.eval_every,
            detach_predictor: t.detach_predictor,
            threads: self.threads.max(1),
            final_lr_fraction: t.final_lr_fraction,
        };
        Ok(Recipe {
            market,
            dataset,
            filter: self.filter,
            model,
            cro: self.cro,
            train,
            eval: EvalSettings {
                episodes: self.eval.episodes,
                budget_scale: self.eval.budget_scale,
                score_exponent: self.eval.score_exponent,
            },
            precision: self.precision,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DESK: &str = include_str!("../../../configs/desk.toml");

    #[test]
    fn shipped_configs_parse_and_validate() {
        for text in [DESK, include_str!("../../../configs/full.toml")] {
            let cfg = ExperimentConfig::parse(text).unwrap();
            cfg.recipe().unwrap().validate().unwrap();
        }
    }

    #[test]
    fn desk_config_matches_the_desk_recipe() {
        let r = ExperimentConfig::parse(DESK).unwrap().recipe().unwrap();
        let mut want = Recipe::desk();
        want.train.seed = 1;
        assert_eq!(r, want);
    }

    #[test]
    fn missing_key_is_named_with_its_path() {
        let text = DESK.replace("n = 500\n", "");
        let err = ExperimentConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("`dataset`") && err.contains("`n`"), "{err}");
    }

    #[test]
    fn unknown_and_mistyped_keys_are_rejected() {
        let err = ExperimentConfig::parse(&DESK.replace("kappa = 5.0", "kappa = 5.0\nkapa = 1.0"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("filter") && err.contains("kapa"), "{err}");
        let err = ExperimentConfig::parse(&DESK.replace("batch_size = 32", "batch_size = \"big\""))
            .unwrap_err()
            .to_string();
        assert!(err.contains("train.batch_size"), "{err}");
    }

    #[test]
    fn snapshot_round_trips() {
        let cfg = ExperimentConfig::parse(DESK).unwrap();
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn range_errors_name_the_key() {
        let err = ExperimentConfig::parse(&DESK.replace("noise_fraction = 0.0", "noise_fraction = 1.5"))
            .unwrap()
            .recipe()
            .unwrap_err()
            .to_string();
        assert!(err.contains("dataset.noise_fraction"), "{err}");
    }
}
