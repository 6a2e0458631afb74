use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::{assemble_batch, TrainBatch};
use super::counterfactual::{counterfactual_targets, CounterfactualStats};
use super::loss::{combine, entropy_loss, mse_loss, nll_loss, predictor_loss, regret_loss, LossBreakdown, RegretTargets};
use super::params::CroParams;
use crate::cdpr::{sampling_distribution, weighted_batch_sample, FilterParams};
use crate::dataset::mix_seed;
use crate::eval::{evaluate, EvalSpec, EvalSummary};
use crate::nn::{save_checkpoint, Adam, AdamConfig, ForwardOptions, Graph, ModelConfig, Normalizer, PolicyModel, Var};
use crate::scalar::{to_f64, Scalar};
use crate::types::Trajectory;
use crate::{Error, Result};

const STREAM_INIT: u64 = 11;
const STREAM_TRAIN: u64 = 12;

/// Training recipe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Pareto-weighted sampling, dual stream, counterfactual regret.
    Full,
    /// Uniform sampling and no cost stream; other losses kept.
    NoCdpr,
    /// Regret term switched off.
    NoCro,
    /// Uniform sampling, no cost stream, squared-error fit of the action mean.
    PlainDt,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoCdpr, Variant::NoCro, Variant::PlainDt];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "none",
            Variant::NoCdpr => "no-cdpr",
            Variant::NoCro => "no-cro",
            Variant::PlainDt => "plain-dt",
        }
    }

    fn weighted_sampling(self) -> bool {
        matches!(self, Variant::Full | Variant::NoCro)
    }

    fn cost_stream(self) -> bool {
        matches!(self, Variant::Full | Variant::NoCro)
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s || (s == "full" && *v == Variant::Full))
            .ok_or_else(|| Error::Config(format!("unknown ablation {s:?}; expected none, no-cdpr, no-cro or plain-dt")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: AdamConfig,
    /// Evaluate every this many updates; 0 evaluates only after the last one.
    pub eval_every: usize,
    /// Stop outcome-head gradients at the shared backbone.
    pub detach_predictor: bool,
    pub threads: usize,
    /// Cosine decay of the learning rate down to this fraction of its
    /// initial value at the last step; 1 keeps it constant.
    pub final_lr_fraction: f64,
}

impl TrainConfig {
    pub fn desk(seed: u64) -> Self {
        Self {
            max_steps: 2000,
            batch_size: 32,
            seed,
            optimizer: AdamConfig::default(),
            eval_every: 0,
            detach_predictor: false,
            threads: 1,
            final_lr_fraction: 1.0,
        }
    }

    pub fn full_scale(seed: u64) -> Self {
        Self {
            max_steps: 200_000,
            batch_size: 128,
            optimizer: AdamConfig {
                learning_rate: 1e-5,
                ..AdamConfig::default()
            },
            ..Self::desk(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "final_lr_fraction must lie in (0, 1], got {}",
                self.final_lr_fraction
            )));
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    pub nll: f64,
    pub regret: f64,
    pub pred: f64,
    pub entropy: f64,
    pub total: f64,
    pub frac_positive_regret: f64,
    pub eval_score: Option<f64>,
    pub eval_ar: Option<f64>,
    pub eval_er: Option<f64>,
    pub eval_value: Option<f64>,
}

pub fn write_metrics_csv<W: Write>(out: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Config(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::io("writing metrics csv", e))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: PolicyModel<T>,
    pub log: Vec<MetricsRow>,
    pub final_eval: Option<EvalSummary>,
}

impl<T: Scalar> TrainOutcome<T> {
    /// Writes `model.ckpt` and `metrics.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        save_checkpoint(&self.model, &dir.join("model.ckpt"))?;
        let path = dir.join("metrics.csv");
        let f = std::fs::File::create(&path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        write_metrics_csv(std::io::BufWriter::new(f), &self.log)
    }
}

/// Largest logged action; the action head's range.
pub fn dataset_action_bound(data: &[Trajectory]) -> f64 {
    let m = data.iter().flat_map(|t| t.steps.iter().map(|s| s.action)).fold(0.0, f64::max);
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// One differentiable pass: returns the total loss node, its parts and the
/// counterfactual statistics.
pub struct LossGraph {
    pub total: Var,
    pub nll: Var,
    pub regret: Var,
    pub pred: Var,
    pub entropy: Var,
    pub stats: CounterfactualStats,
    pub targets: RegretTargets,
    pub param_vars: Vec<Var>,
}

/// Records the loss for `batch`. Regret targets are drawn with `rng` unless
/// `fixed_targets` is given.
pub fn build_loss<T: Scalar, R: rand::Rng + ?Sized>(
    model: &PolicyModel<T>,
    g: &mut Graph<T>,
    batch: &TrainBatch,
    cro: &CroParams,
    variant: Variant,
    detach_predictor: bool,
    rng: &mut R,
    fixed_targets: Option<&RegretTargets>,
) -> Result<LossGraph> {
    let out = model.forward(
        g,
        &batch.seq,
        ForwardOptions {
            trainable: true,
            detach_predictor,
        },
    )?;
    let bound = model.config.action_bound;
    let actions: Vec<f64> = batch.seq.actions.iter().map(|a| a / bound).collect();
    let rs = to_f64(model.norm.rtg_scale);
    let cs = to_f64(model.norm.ctg_scale);
    let fr: Vec<f64> = batch.future_r.iter().map(|v| v / rs).collect();
    let fc: Vec<f64> = batch.future_c.iter().map(|v| v / cs).collect();
    let zero = |g: &mut Graph<T>| g.constant(crate::nn::Tensor::scalar(T::zero()));
    if variant == Variant::PlainDt {
        let nll = mse_loss(g, out.mu, &actions, &batch.mask);
        let (regret, pred, entropy) = (zero(g), zero(g), zero(g));
        return Ok(LossGraph {
            total: nll,
            nll,
            regret,
            pred,
            entropy,
            stats: CounterfactualStats::default(),
            targets: RegretTargets::default(),
            param_vars: out.param_vars,
        });
    }
    let nll = nll_loss(g, out.mu, out.sigma, &actions, &batch.mask);
    let pred = predictor_loss(g, out.r_hat, out.c_hat, &fr, &fc, &batch.mask);
    let entropy = entropy_loss(g, out.sigma, &batch.mask);
    let mut params = *cro;
    let (targets, stats) = if variant == Variant::NoCro {
        params.alpha = 0.0;
        (RegretTargets::default(), CounterfactualStats::default())
    } else if let Some(t) = fixed_targets {
        (t.clone(), CounterfactualStats::default())
    } else {
        counterfactual_targets(model, g, &out, batch, cro, rng)?
    };
    let regret = regret_loss(g, out.mu, &targets);
    let total = combine(g, nll, regret, pred, entropy, &params);
    Ok(LossGraph {
        total,
        nll,
        regret,
        pred,
        entropy,
        stats,
        targets,
        param_vars: out.param_vars,
    })
}

/// Learning rate applied at update `step` (1-based).
pub fn learning_rate_at(tc: &TrainConfig, step: usize) -> f64 {
    let base = tc.optimizer.learning_rate;
    let progress = if tc.max_steps > 1 {
        (step - 1) as f64 / (tc.max_steps - 1) as f64
    } else {
        0.0
    };
    let cos = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
    base * (tc.final_lr_fraction + (1.0 - tc.final_lr_fraction) * cos)
}

/// Fresh model for `variant` with statistics fitted on `data`.
pub fn init_model<T: Scalar>(data: &[Trajectory], config: &ModelConfig, variant: Variant, seed: u64) -> Result<PolicyModel<T>> {
    let mut cfg = config.clone();
    cfg.cost_stream = cfg.cost_stream && variant.cost_stream();
    PolicyModel::new(cfg, Normalizer::fit(data), mix_seed(seed, STREAM_INIT))
}

/// Offline training loop. The sampling distribution is computed once; every
/// update draws a batch, records the loss and applies one optimizer step.
pub fn train<T: Scalar>(
    data: &[Trajectory],
    model_config: &ModelConfig,
    filter: &FilterParams,
    cro: &CroParams,
    tc: &TrainConfig,
    variant: Variant,
    eval: Option<&EvalSpec>,
) -> Result<TrainOutcome<T>> {
    if data.is_empty() {
        return Err(Error::Config("training needs a non-empty dataset".into()));
    }
    cro.validate()?;
    tc.validate()?;
    filter.validate()?;
    let mut model = init_model::<T>(data, model_config, variant, tc.seed)?;
    let probs: Vec<f64> = if variant.weighted_sampling() {
        sampling_distribution(data, filter)?.iter().map(|q| q.prob).collect()
    } else {
        vec![1.0 / data.len() as f64; data.len()]
    };
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(tc.seed, STREAM_TRAIN));
    let mut opt = Adam::new(tc.optimizer.clone(), &model.params);
    let mut log = Vec::with_capacity(tc.max_steps);
    let mut final_eval = None;
    for step in 1..=tc.max_steps {
        let picks = weighted_batch_sample(&probs, tc.batch_size, &mut rng)?;
        let batch = assemble_batch(data, &picks, model.config.context_steps, &mut rng);
        let mut g = Graph::new();
        let lg = build_loss(&model, &mut g, &batch, cro, variant, tc.detach_predictor, &mut rng, None)?;
        let parts = LossBreakdown {
            nll: to_f64(g.value(lg.nll).item()),
            regret: to_f64(g.value(lg.regret).item()),
            pred: to_f64(g.value(lg.pred).item()),
            entropy: to_f64(g.value(lg.entropy).item()),
            total: to_f64(g.value(lg.total).item()),
        };
        for (name, v) in [
            ("nll", parts.nll),
            ("regret", parts.regret),
            ("pred", parts.pred),
            ("entropy", parts.entropy),
            ("total", parts.total),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("loss term {name} at step {step}")));
            }
        }
        let mut grads = g.backward(lg.total)?;
        let flat: Vec<Vec<T>> = lg
            .param_vars
            .iter()
            .enumerate()
            .map(|(i, &v)| grads.take(v).unwrap_or_else(|| vec![T::zero(); model.params.tensor(i).len()]))
            .collect();
        drop(g);
        opt.config.learning_rate = learning_rate_at(tc, step);
        opt.update(&mut model.params, &flat)?;
        let mut row = MetricsRow {
            step,
            nll: parts.nll,
            regret: parts.regret,
            pred: parts.pred,
            entropy: parts.entropy,
            total: parts.total,
            frac_positive_regret: lg.stats.frac_positive,
            eval_score: None,
            eval_ar: None,
            eval_er: None,
            eval_value: None,
        };
        let due = step == tc.max_steps || (tc.eval_every > 0 && step % tc.eval_every == 0);
        if let (Some(spec), true) = (eval, due) {
            let s = evaluate(&model, spec, tc.threads)?.summary;
            row.eval_score = Some(s.mean_score);
            row.eval_ar = Some(s.mean_ar);
            row.eval_er = Some(s.er);
            row.eval_value = Some(s.mean_value);
            final_eval = Some(s);
        }
        log.push(row);
    }
    if tc.max_steps == 0 {
        if let Some(spec) = eval {
            final_eval = Some(evaluate(&model, spec, tc.threads)?.summary);
        }
    }
    Ok(TrainOutcome { model, log, final_eval })
}
