//! Seeded end-to-end recipes: dataset, training and evaluation wired
//! together, plus the ablation, contamination and candidate-count runs built
//! on them.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cdpr::FilterParams;
use crate::cro::{dataset_action_bound, train, CroParams, CroSettings, MetricsRow, TrainConfig, Variant};
use crate::dataset::{generate_dataset, inject_noise_trajectories, Dataset, DatasetSpec};
use crate::eval::{cpa_sensitivity_sweep, evaluate, EvalReport, EvalSpec, EvalSummary, SweepRow, DEFAULT_SCORE_EXPONENT};
use crate::nn::checkpoint::checkpoint_value_bytes;
use crate::nn::{load_checkpoint, save_checkpoint, ModelConfig, PolicyModel};
use crate::sim::MarketModel;
use crate::types::Trajectory;
use crate::{Error, Result};

/// Seeds of different runs are spaced this far apart so their datasets and
/// evaluation episodes never share a seed.
pub const SEED_STRIDE: u64 = 100_000;
const EVAL_SEED_OFFSET: u64 = 1_000_000_000;

pub fn dataset_seed_base(seed: u64) -> u64 {
    seed.wrapping_mul(SEED_STRIDE)
}

pub fn eval_seed_base(seed: u64) -> u64 {
    EVAL_SEED_OFFSET.wrapping_add(seed.wrapping_mul(SEED_STRIDE))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// A model of either precision.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    F32(PolicyModel<f32>),
    F64(PolicyModel<f64>),
}

impl TrainedModel {
    /// Loads a checkpoint in whichever precision it was written.
    pub fn load(path: &Path) -> Result<Self> {
        match checkpoint_value_bytes(path)? {
            4 => Ok(Self::F32(load_checkpoint(path)?)),
            _ => Ok(Self::F64(load_checkpoint(path)?)),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            Self::F32(m) => save_checkpoint(m, path),
            Self::F64(m) => save_checkpoint(m, path),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        match self {
            Self::F32(m) => &m.config,
            Self::F64(m) => &m.config,
        }
    }

    pub fn evaluate(&self, spec: &EvalSpec, threads: usize) -> Result<EvalReport> {
        match self {
            Self::F32(m) => evaluate(m, spec, threads),
            Self::F64(m) => evaluate(m, spec, threads),
        }
    }

    pub fn cpa_sweep(&self, spec: &EvalSpec, targets: &[f64], threads: usize) -> Result<Vec<SweepRow>> {
        match self {
            Self::F32(m) => cpa_sensitivity_sweep(m, spec, targets, threads),
            Self::F64(m) => cpa_sensitivity_sweep(m, spec, targets, threads),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSettings {
    pub episodes: usize,
    /// Multiplies every campaign budget at evaluation time.
    pub budget_scale: f64,
    pub score_exponent: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            episodes: 100,
            budget_scale: 1.0,
            score_exponent: DEFAULT_SCORE_EXPONENT,
        }
    }
}

/// Everything a seeded run needs besides the seed itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub market: MarketModel,
    /// `seed_base` is replaced per run.
    pub dataset: DatasetSpec,
    pub filter: FilterParams,
    /// The action range is refitted to each training set.
    pub model: ModelConfig,
    pub cro: CroSettings,
    /// `seed` is replaced per run.
    pub train: TrainConfig,
    pub eval: EvalSettings,
    pub precision: Precision,
}

#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub model: TrainedModel,
    pub log: Vec<MetricsRow>,
    pub final_eval: Option<EvalSummary>,
}

impl Recipe {
    /// 500 mixed-policy trajectories, the desk model, 2000 updates and 100
    /// evaluation episodes.
    pub fn desk() -> Self {
        let horizon = 48;
        Self {
            market: MarketModel::desk(horizon),
            dataset: DatasetSpec::desk(500, 0, horizon),
            filter: FilterParams::default(),
            model: ModelConfig::desk(horizon, 1.0),
            cro: CroSettings::default(),
            train: TrainConfig::desk(0),
            eval: EvalSettings::default(),
            precision: Precision::F32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        self.dataset.validate()?;
        self.filter.validate()?;
        self.model.validate()?;
        self.cro.resolve(&[]).validate()?;
        self.train.validate()?;
        self.eval_spec(0).validate()
    }

    /// The behavior log for `seed`, with `noise_fraction` of it replaced by
    /// wasteful rollouts.
    pub fn dataset(&self, seed: u64, noise_fraction: f64) -> Result<Dataset> {
        let spec = DatasetSpec {
            seed_base: dataset_seed_base(seed),
            ..self.dataset.clone()
        };
        let ds = generate_dataset(&spec, &self.market)?;
        if noise_fraction > 0.0 {
            inject_noise_trajectories(&ds, noise_fraction, &self.market, seed)
        } else {
            Ok(ds)
        }
    }

    /// Held-out episodes for `seed`, drawn from the training campaign ranges.
    pub fn eval_spec(&self, seed: u64) -> EvalSpec {
        EvalSpec {
            score_exponent: self.eval.score_exponent,
            budget_scale: self.eval.budget_scale,
            ..EvalSpec::new(self.market.clone(), self.dataset.campaigns, self.eval.episodes, eval_seed_base(seed))
        }
    }

    pub fn model_config(&self, data: &[Trajectory]) -> ModelConfig {
        self.model.with_action_bound(dataset_action_bound(data))
    }

    pub fn cro_params(&self, data: &[Trajectory]) -> CroParams {
        self.cro.resolve(data)
    }

    /// Trains `variant` on `data`; evaluates on the `seed` episodes when
    /// `with_eval` is set.
    pub fn train(&self, data: &[Trajectory], variant: Variant, seed: u64, with_eval: bool) -> Result<TrainedRun> {
        let model = self.model_config(data);
        let cro = self.cro_params(data);
        let tc = TrainConfig {
            seed,
            ..self.train.clone()
        };
        let spec = self.eval_spec(seed);
        let eval = with_eval.then_some(&spec);
        Ok(match self.precision {
            Precision::F32 => {
                let o = train::<f32>(data, &model, &self.filter, &cro, &tc, variant, eval)?;
                TrainedRun {
                    model: TrainedModel::F32(o.model),
                    log: o.log,
                    final_eval: o.final_eval,
                }
            }
            Precision::F64 => {
                let o = train::<f64>(data, &model, &self.filter, &cro, &tc, variant, eval)?;
                TrainedRun {
                    model: TrainedModel::F64(o.model),
                    log: o.log,
                    final_eval: o.final_eval,
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub variant: Variant,
    pub seed: u64,
    pub noise_fraction: f64,
    pub eval: EvalSummary,
    pub behavior: EvalSummary,
    pub seconds: f64,
}

/// Generates the seed's dataset, trains `variant` on it and evaluates.
pub fn run(recipe: &Recipe, variant: Variant, seed: u64, noise_fraction: f64) -> Result<RunResult> {
    let start = Instant::now();
    let ds = recipe.dataset(seed, noise_fraction)?;
    let data = &ds.trajectories;
    let out = recipe.train(data, variant, seed, true)?;
    let eval = out
        .final_eval
        .ok_or_else(|| Error::Config("evaluation did not run".into()))?;
    Ok(RunResult {
        variant,
        seed,
        noise_fraction,
        eval,
        behavior: EvalSummary::of_dataset(data, recipe.eval.score_exponent),
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepKRow {
    pub k: usize,
    pub seed: u64,
    pub score: f64,
    pub value: f64,
    pub ar: f64,
    pub er: f64,
    pub frac_positive_regret: f64,
}

/// Trains the full method once per (K, seed).
pub fn sweep_k(recipe: &Recipe, ks: &[usize], seeds: &[u64]) -> Result<Vec<SweepKRow>> {
    if let Some(&k) = ks.iter().find(|&&k| k == 0) {
        return Err(Error::Config(format!("K must be at least 1, got {k}")));
    }
    let mut rows = Vec::new();
    for &seed in seeds {
        let ds = recipe.dataset(seed, 0.0)?;
        for &k in ks {
            let mut r = recipe.clone();
            r.cro.k = k;
            let out = r.train(&ds.trajectories, Variant::Full, seed, true)?;
            let eval = out
                .final_eval
                .ok_or_else(|| Error::Config("evaluation did not run".into()))?;
            let n = out.log.len().max(1) as f64;
            rows.push(SweepKRow {
                k,
                seed,
                score: eval.mean_score,
                value: eval.mean_value,
                ar: eval.mean_ar,
                er: eval.er,
                frac_positive_regret: out.log.iter().map(|m| m.frac_positive_regret).sum::<f64>() / n,
            });
        }
    }
    Ok(rows)
}

pub fn write_csv<W: Write, S: Serialize>(out: W, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Config(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::io("writing csv", e))
}

/// Mean of `f` over the results.
pub fn mean_of(results: &[RunResult], f: impl Fn(&RunResult) -> f64) -> f64 {
    results.iter().map(f).sum::<f64>() / results.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Recipe {
        let mut r = Recipe::desk();
        r.dataset.n = 12;
        r.train.max_steps = 3;
        r.train.batch_size = 4;
        r.eval.episodes = 3;
        r
    }

    #[test]
    fn desk_recipe_is_valid() {
        Recipe::desk().validate().unwrap();
    }

    #[test]
    fn seeds_keep_datasets_and_episodes_apart() {
        let r = small();
        let a = r.dataset(1, 0.0).unwrap();
        let b = r.dataset(2, 0.0).unwrap();
        assert_eq!(a.manifest.seed_first, dataset_seed_base(1));
        assert!(a.manifest.seed_last < b.manifest.seed_first);
        assert!(eval_seed_base(5) > dataset_seed_base(5) + SEED_STRIDE);
    }

    #[test]
    fn run_is_deterministic() {
        let r = small();
        let a = run(&r, Variant::Full, 3, 0.0).unwrap();
        let b = run(&r, Variant::Full, 3, 0.0).unwrap();
        assert_eq!(a.eval, b.eval);
        assert_eq!(a.behavior, b.behavior);
    }

    #[test]
    fn noise_replaces_part_of_the_log() {
        let r = small();
        let clean = r.dataset(4, 0.0).unwrap();
        let noisy = r.dataset(4, 0.5).unwrap();
        let changed = clean
            .trajectories
            .iter()
            .zip(&noisy.trajectories)
            .filter(|(a, b)| a != b)
            .count();
        assert!(changed > 0 && changed <= 6);
    }

    #[test]
    fn sweep_k_rejects_zero_and_emits_rows() {
        let r = small();
        assert!(sweep_k(&r, &[1, 0], &[1]).is_err());
        let rows = sweep_k(&r, &[1, 2], &[1]).unwrap();
        assert_eq!(rows.iter().map(|x| x.k).collect::<Vec<_>>(), vec![1, 2]);
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("k,seed,score,value,ar,er,frac_positive_regret\n"));
    }

    #[test]
    fn precision_round_trips_through_checkpoints() {
        let r = Recipe {
            precision: Precision::F64,
            ..small()
        };
        let ds = r.dataset(1, 0.0).unwrap();
        let out = r.train(&ds.trajectories, Variant::NoCro, 1, false).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        out.model.save(&path).unwrap();
        assert_eq!(TrainedModel::load(&path).unwrap(), out.model);
    }
}
