//! Causal transformer over interleaved (return, cost, state, action) tokens
//! with a Gaussian action head and a future-outcome head.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::graph::{gelu, layer_norm_rows, Graph, Tensor, Var};
use super::params::ParameterSet;
use crate::scalar::{lit, to_f64, Scalar};
use crate::types::{Trajectory, STATE_DIM};
use crate::{Error, Result};

pub const TOKENS_PER_STEP: usize = 4;
const INIT_SD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    /// Feed-forward hidden width as a multiple of d_model.
    pub ffn_mult: usize,
    /// Maximum number of steps in one context window.
    pub context_steps: usize,
    /// Largest timestep index the embedding table covers.
    pub max_timestep: usize,
    /// Upper end of the action mean range.
    pub action_bound: f64,
    pub sigma_floor: f64,
    pub sigma_cap: f64,
    /// When false the cost-to-go stream is fed as zeros.
    pub cost_stream: bool,
}

impl ModelConfig {
    fn with_shape(d_model: usize, n_layers: usize, n_heads: usize, context_steps: usize, horizon: usize, action_bound: f64) -> Self {
        Self {
            d_model,
            n_layers,
            n_heads,
            ffn_mult: 4,
            context_steps,
            max_timestep: horizon,
            action_bound,
            sigma_floor: 1e-3 * action_bound,
            sigma_cap: 0.5 * action_bound,
            cost_stream: true,
        }
    }

    /// Same shape with the action range (and the sigma range tied to it)
    /// set to `action_bound`.
    pub fn with_action_bound(&self, action_bound: f64) -> Self {
        Self {
            action_bound,
            sigma_floor: 1e-3 * action_bound,
            sigma_cap: 0.5 * action_bound,
            ..self.clone()
        }
    }

    /// Desk-scale preset used by the acceptance experiments.
    pub fn desk(horizon: usize, action_bound: f64) -> Self {
        Self {
            ffn_mult: 2,
            ..Self::with_shape(32, 2, 4, 8, horizon, action_bound)
        }
    }

    /// 8 layers, 16 heads, full-horizon context.
    pub fn full_scale(horizon: usize, action_bound: f64) -> Self {
        Self::with_shape(128, 8, 16, horizon, horizon, action_bound)
    }

    /// Smallest useful model, for gradient checks.
    pub fn tiny(horizon: usize, action_bound: f64) -> Self {
        Self::with_shape(8, 1, 2, horizon, horizon, action_bound)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.ffn_mult == 0 {
            return bad("ffn_mult must be at least 1".into());
        }
        if self.context_steps == 0 {
            return bad("context_steps must be at least 1".into());
        }
        if self.max_timestep == 0 {
            return bad("max_timestep must be at least 1".into());
        }
        if !(self.action_bound.is_finite() && self.action_bound > 0.0) {
            return bad(format!("action_bound must be positive, got {}", self.action_bound));
        }
        if !(self.sigma_floor > 0.0 && self.sigma_floor < self.sigma_cap && self.sigma_cap.is_finite()) {
            return bad(format!(
                "need 0 < sigma_floor < sigma_cap, got {} and {}",
                self.sigma_floor, self.sigma_cap
            ));
        }
        Ok(())
    }
}

/// Scales applied to raw tokens before embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer<T> {
    pub rtg_scale: T,
    pub ctg_scale: T,
    pub state_mean: Vec<T>,
    pub state_std: Vec<T>,
}

impl<T: Scalar> Normalizer<T> {
    pub fn identity() -> Self {
        Self {
            rtg_scale: T::one(),
            ctg_scale: T::one(),
            state_mean: vec![T::zero(); STATE_DIM],
            state_std: vec![T::one(); STATE_DIM],
        }
    }

    /// Return and cost scales are the mean episode totals; states are
    /// z-scored per feature.
    pub fn fit(trajectories: &[Trajectory]) -> Self {
        let positive = |x: f64| if x.is_finite() && x > 1e-12 { x } else { 1.0 };
        let n = trajectories.len().max(1) as f64;
        let r = trajectories.iter().map(|t| t.total_reward).sum::<f64>() / n;
        let c = trajectories.iter().map(|t| t.total_cost).sum::<f64>() / n;
        let mut sum = [0.0; STATE_DIM];
        let mut sq = [0.0; STATE_DIM];
        let mut count = 0.0;
        for s in trajectories.iter().flat_map(|t| &t.steps) {
            for (j, &v) in s.state.iter().enumerate().take(STATE_DIM) {
                sum[j] += v;
                sq[j] += v * v;
            }
            count += 1.0;
        }
        let count = f64::max(count, 1.0);
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        let std: Vec<f64> = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| positive((q / count - m * m).max(0.0).sqrt()))
            .collect();
        Self {
            rtg_scale: lit(positive(r)),
            ctg_scale: lit(positive(c)),
            state_mean: mean.iter().map(|&m| lit(m)).collect(),
            state_std: std.iter().map(|&s| lit(s)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rtg_scale > T::zero()
            && self.ctg_scale > T::zero()
            && self.state_mean.len() == STATE_DIM
            && self.state_std.len() == STATE_DIM
            && self.state_std.iter().all(|&s| s > T::zero() && s.is_finite())
            && self.state_mean.iter().all(|m| m.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config("invalid normalization statistics".into()))
        }
    }
}

/// A batch of equal-width windows; shorter windows are padded at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqBatch {
    pub n_seq: usize,
    pub window: usize,
    pub rtg: Vec<f64>,
    pub ctg: Vec<f64>,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    /// 1-based episode step of each slot; 0 marks padding.
    pub timesteps: Vec<usize>,
    pub lengths: Vec<usize>,
}

impl SeqBatch {
    pub fn new(n_seq: usize, window: usize) -> Self {
        let n = n_seq * window;
        Self {
            n_seq,
            window,
            rtg: vec![0.0; n],
            ctg: vec![0.0; n],
            states: vec![0.0; n * STATE_DIM],
            actions: vec![0.0; n],
            timesteps: vec![0; n],
            lengths: vec![0; n_seq],
        }
    }

    pub fn rows(&self) -> usize {
        self.n_seq * self.window
    }

    /// Writes step `pos` of sequence `seq`. Steps must be filled in order.
    #[allow(clippy::too_many_arguments)]
    pub fn set_step(&mut self, seq: usize, pos: usize, rtg: f64, ctg: f64, state: &[f64], action: f64, t: usize) {
        let i = seq * self.window + pos;
        self.rtg[i] = rtg;
        self.ctg[i] = ctg;
        self.states[i * STATE_DIM..(i + 1) * STATE_DIM].copy_from_slice(&state[..STATE_DIM]);
        self.actions[i] = action;
        self.timesteps[i] = t;
        self.lengths[seq] = self.lengths[seq].max(pos + 1);
    }

    pub fn is_real(&self, seq: usize, pos: usize) -> bool {
        pos < self.lengths[seq]
    }

    /// 1.0 for real slots, 0.0 for padding, row-major.
    pub fn mask(&self) -> Vec<f64> {
        (0..self.rows())
            .map(|i| if self.is_real(i / self.window, i % self.window) { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Graph handles produced by one forward pass. Row `seq * window + pos`.
#[derive(Debug, Clone)]
pub struct ForwardOut {
    /// Action mean divided by the action bound, `[rows, 1]`.
    pub mu: Var,
    /// Action std divided by the action bound, `[rows, 1]`.
    pub sigma: Var,
    /// Scaled future return and cost excluding the current step.
    pub r_hat: Var,
    pub c_hat: Var,
    /// Per-layer fused query/key/value activations.
    pub block_qkv: Vec<Var>,
    /// Graph leaf for each parameter, in parameter order.
    pub param_vars: Vec<Var>,
    pub n_seq: usize,
    pub window: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ForwardOptions {
    /// Parameters become trainable leaves.
    pub trainable: bool,
    /// Stop predictor gradients at the backbone.
    pub detach_predictor: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel<T> {
    pub config: ModelConfig,
    pub params: ParameterSet<T>,
    pub norm: Normalizer<T>,
}

fn block_name(l: usize, part: &str) -> String {
    format!("block{l}.{part}")
}

impl<T: Scalar> PolicyModel<T> {
    pub fn new(mut config: ModelConfig, norm: Normalizer<T>, seed: u64) -> Result<Self> {
        config.validate()?;
        norm.validate()?;
        // keep the scalars the model works with representable in T
        config.action_bound = to_f64::<T>(lit(config.action_bound));
        config.sigma_floor = to_f64::<T>(lit(config.sigma_floor));
        config.sigma_cap = to_f64::<T>(lit(config.sigma_cap));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_SD).expect("valid sd");
        let mut rand = |shape: Vec<usize>| {
            let n: usize = shape.iter().product();
            Tensor::new(shape, (0..n).map(|_| lit(normal.sample(&mut rng))).collect())
        };
        let d = config.d_model;
        let zeros = |n: usize| Tensor::<T>::zeros(vec![n]);
        let ones = |n: usize| Tensor::<T>::filled(vec![n], T::one());
        let mut p = ParameterSet::new();
        for (name, width) in [("rtg", 1), ("ctg", 1), ("state", STATE_DIM), ("action", 1)] {
            p.insert(format!("embed.{name}.w"), rand(vec![width, d]));
            p.insert(format!("embed.{name}.b"), zeros(d));
        }
        p.insert("embed.time", rand(vec![config.max_timestep + 1, d]));
        p.insert("embed.ln.g", ones(d));
        p.insert("embed.ln.b", zeros(d));
        for l in 0..config.n_layers {
            p.insert(block_name(l, "ln1.g"), ones(d));
            p.insert(block_name(l, "ln1.b"), zeros(d));
            p.insert(block_name(l, "attn.qkv.w"), rand(vec![d, 3 * d]));
            p.insert(block_name(l, "attn.qkv.b"), zeros(3 * d));
            p.insert(block_name(l, "attn.out.w"), rand(vec![d, d]));
            p.insert(block_name(l, "attn.out.b"), zeros(d));
            p.insert(block_name(l, "ln2.g"), ones(d));
            p.insert(block_name(l, "ln2.b"), zeros(d));
            p.insert(block_name(l, "ffn.up.w"), rand(vec![d, config.ffn_mult * d]));
            p.insert(block_name(l, "ffn.up.b"), zeros(config.ffn_mult * d));
            p.insert(block_name(l, "ffn.down.w"), rand(vec![config.ffn_mult * d, d]));
            p.insert(block_name(l, "ffn.down.b"), zeros(d));
        }
        p.insert("final.ln.g", ones(d));
        p.insert("final.ln.b", zeros(d));
        p.insert("head.policy.w", rand(vec![d, 2]));
        p.insert("head.policy.b", zeros(2));
        p.insert("head.predictor.w", rand(vec![d, 2]));
        p.insert("head.predictor.b", zeros(2));
        Ok(Self {
            config,
            params: p,
            norm,
        })
    }

    pub(crate) fn from_parts(config: ModelConfig, params: ParameterSet<T>, norm: Normalizer<T>) -> Result<Self> {
        config.validate()?;
        norm.validate()?;
        let reference = Self::new(config.clone(), norm.clone(), 0)?;
        if reference.params.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                reference.params.len(),
                params.len()
            )));
        }
        for ((rn, rt), (n, t)) in reference.params.iter().zip(params.iter()) {
            if rn != n || rt.shape != t.shape {
                return Err(Error::Checkpoint(format!(
                    "parameter {n} {:?} does not match expected {rn} {:?}",
                    t.shape, rt.shape
                )));
            }
        }
        params.check_finite()?;
        Ok(Self {
            config,
            params,
            norm,
        })
    }

    /// Zeroes both output heads.
    pub fn zero_heads(&mut self) {
        for name in ["head.policy.w", "head.policy.b", "head.predictor.w", "head.predictor.b"] {
            let t = self.params.get_mut(name).expect("head parameter");
            t.data.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    fn p(&self, name: &str) -> &Tensor<T> {
        self.params.get(name).unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    fn sigma_bounds(&self) -> (T, T) {
        let b = self.config.action_bound;
        (lit(self.config.sigma_floor / b), lit(self.config.sigma_cap / b))
    }

    pub fn action_bound(&self) -> T {
        lit(self.config.action_bound)
    }

    fn check_batch(&self, batch: &SeqBatch) -> Result<()> {
        if batch.window == 0 || batch.n_seq == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        if batch.window > self.config.context_steps {
            return Err(Error::Shape(format!(
                "window {} exceeds context_steps {}",
                batch.window, self.config.context_steps
            )));
        }
        let n = batch.rows();
        if batch.rtg.len() != n
            || batch.ctg.len() != n
            || batch.actions.len() != n
            || batch.timesteps.len() != n
            || batch.states.len() != n * STATE_DIM
            || batch.lengths.len() != batch.n_seq
        {
            return Err(Error::Shape("batch buffers disagree with n_seq * window".into()));
        }
        if let Some(&t) = batch.timesteps.iter().find(|&&t| t > self.config.max_timestep) {
            return Err(Error::Shape(format!(
                "timestep {t} exceeds max_timestep {}",
                self.config.max_timestep
            )));
        }
        let finite = batch.rtg.iter().chain(&batch.ctg).chain(&batch.states).chain(&batch.actions).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("forward input".into()));
        }
        Ok(())
    }

    /// Scaled input columns for the four token streams.
    fn token_inputs(&self, batch: &SeqBatch) -> [Tensor<T>; 4] {
        let n = batch.rows();
        let rs = self.norm.rtg_scale;
        let cs = self.norm.ctg_scale;
        let ab = self.action_bound();
        let rtg = batch.rtg.iter().map(|&v| lit::<T>(v) / rs).collect();
        let ctg = if self.config.cost_stream {
            batch.ctg.iter().map(|&v| lit::<T>(v) / cs).collect()
        } else {
            vec![T::zero(); n]
        };
        let mut states = Vec::with_capacity(n * STATE_DIM);
        for row in batch.states.chunks(STATE_DIM) {
            for j in 0..STATE_DIM {
                states.push((lit::<T>(row[j]) - self.norm.state_mean[j]) / self.norm.state_std[j]);
            }
        }
        let actions = batch.actions.iter().map(|&v| lit::<T>(v) / ab).collect();
        [
            Tensor::new(vec![n, 1], rtg),
            Tensor::new(vec![n, 1], ctg),
            Tensor::new(vec![n, STATE_DIM], states),
            Tensor::new(vec![n, 1], actions),
        ]
    }

    pub fn forward(&self, g: &mut Graph<T>, batch: &SeqBatch, opts: ForwardOptions) -> Result<ForwardOut> {
        self.check_batch(batch)?;
        let param_vars: Vec<Var> = self
            .params
            .iter()
            .map(|(_, t)| if opts.trainable { g.param(t.clone()) } else { g.constant(t.clone()) })
            .collect();
        let pv = |name: &str| param_vars[self.params.index_of(name).unwrap_or_else(|| panic!("missing parameter {name}"))];
        let n = batch.rows();
        let len = TOKENS_PER_STEP * batch.window;

        let inputs = self.token_inputs(batch);
        let mut streams = Vec::with_capacity(TOKENS_PER_STEP);
        for (input, name) in inputs.into_iter().zip(["rtg", "ctg", "state", "action"]) {
            let x = g.constant(input);
            let e = g.linear(x, pv(&format!("embed.{name}.w")), pv(&format!("embed.{name}.b")));
            streams.push(e);
        }
        let tokens = g.interleave(&streams);
        let time_rows: Vec<usize> = batch.timesteps.iter().flat_map(|&t| [t; TOKENS_PER_STEP]).collect();
        let time = g.gather_rows(pv("embed.time"), time_rows);
        let x = g.add(tokens, time);
        let mut x = g.layer_norm(x, pv("embed.ln.g"), pv("embed.ln.b"));

        let mut block_qkv = Vec::with_capacity(self.config.n_layers);
        for l in 0..self.config.n_layers {
            let b = |part: &str| pv(&block_name(l, part));
            let h = g.layer_norm(x, b("ln1.g"), b("ln1.b"));
            let qkv = g.linear(h, b("attn.qkv.w"), b("attn.qkv.b"));
            block_qkv.push(qkv);
            let att = g.causal_attention(qkv, batch.n_seq, len, self.config.n_heads);
            let att = g.linear(att, b("attn.out.w"), b("attn.out.b"));
            x = g.add(x, att);
            let h = g.layer_norm(x, b("ln2.g"), b("ln2.b"));
            let up = g.linear(h, b("ffn.up.w"), b("ffn.up.b"));
            let up = g.gelu(up);
            let down = g.linear(up, b("ffn.down.w"), b("ffn.down.b"));
            x = g.add(x, down);
        }
        let hidden = g.layer_norm(x, pv("final.ln.g"), pv("final.ln.b"));

        let state_rows: Vec<usize> = (0..n).map(|i| TOKENS_PER_STEP * i + 2).collect();
        let action_rows: Vec<usize> = (0..n).map(|i| TOKENS_PER_STEP * i + 3).collect();
        let hs = g.gather_rows(hidden, state_rows);
        let pol = g.linear(hs, pv("head.policy.w"), pv("head.policy.b"));
        let mu_pre = g.column(pol, 0);
        let mu = g.sigmoid(mu_pre);
        let (lo, hi) = self.sigma_bounds();
        let sg_pre = g.column(pol, 1);
        let sg = g.sigmoid(sg_pre);
        let sg = g.scale(sg, hi - lo);
        let sigma = g.shift(sg, lo);

        let pred_src = if opts.detach_predictor { g.detach(hidden) } else { hidden };
        let ha = g.gather_rows(pred_src, action_rows);
        let pred = g.linear(ha, pv("head.predictor.w"), pv("head.predictor.b"));
        let r_hat = g.column(pred, 0);
        let c_hat = g.column(pred, 1);

        Ok(ForwardOut {
            mu,
            sigma,
            r_hat,
            c_hat,
            block_qkv,
            param_vars,
            n_seq: batch.n_seq,
            window: batch.window,
        })
    }

    /// Outputs in raw units without recording gradients.
    pub fn predict(&self, batch: &SeqBatch) -> Result<Prediction> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, batch, ForwardOptions::default())?;
        Ok(self.prediction(&g, &out))
    }

    pub fn prediction(&self, g: &Graph<T>, out: &ForwardOut) -> Prediction {
        let ab = self.config.action_bound;
        let raw = |v: Var, s: f64| g.value(v).data.iter().map(|&x| to_f64(x) * s).collect::<Vec<_>>();
        Prediction {
            mu: raw(out.mu, ab),
            sigma: raw(out.sigma, ab),
            r_hat: raw(out.r_hat, to_f64(self.norm.rtg_scale)),
            c_hat: raw(out.c_hat, to_f64(self.norm.ctg_scale)),
        }
    }

    /// Re-evaluates the outcome head at step `pos` of sequence `seq` with
    /// that step's action replaced, reusing the recorded activations of all
    /// earlier tokens. Returns scaled (r_hat, c_hat) per query.
    pub fn substituted_outcomes(
        &self,
        g: &Graph<T>,
        out: &ForwardOut,
        batch: &SeqBatch,
        queries: &[ActionQuery],
    ) -> Result<Vec<(T, T)>> {
        let q = queries.len();
        if q == 0 {
            return Ok(Vec::new());
        }
        let d = self.config.d_model;
        let heads = self.config.n_heads;
        let dh = d / heads;
        let len = TOKENS_PER_STEP * batch.window;
        let ab = self.action_bound();
        for qr in queries {
            if qr.seq >= batch.n_seq || qr.pos >= batch.window {
                return Err(Error::Shape(format!("query ({}, {}) outside batch", qr.seq, qr.pos)));
            }
        }
        let linear = |x: &[T], rows: usize, w: &str, b: &str| -> Vec<T> {
            let wt = self.p(w);
            let (k, n) = wt.dims2();
            let bias = &self.p(b).data;
            let mut y: Vec<T> = Vec::with_capacity(rows * n);
            for _ in 0..rows {
                y.extend_from_slice(bias);
            }
            T::gemm(rows, k, n, T::one(), x, k as isize, 1, &wt.data, n as isize, 1, T::one(), &mut y, n as isize, 1);
            y
        };
        let ln = |x: &[T], g_: &str, b_: &str| layer_norm_rows(x, d, &self.p(g_).data, &self.p(b_).data).0;

        let a_in: Vec<T> = queries.iter().map(|qr| lit::<T>(qr.action) / ab).collect();
        let mut x = linear(&a_in, q, "embed.action.w", "embed.action.b");
        let table = &self.p("embed.time").data;
        for (i, qr) in queries.iter().enumerate() {
            let t = batch.timesteps[qr.seq * batch.window + qr.pos];
            for j in 0..d {
                x[i * d + j] += table[t * d + j];
            }
        }
        let mut x = ln(&x, "embed.ln.g", "embed.ln.b");

        let scale: T = T::one() / T::from_usize(dh).unwrap().sqrt();
        let mut scores = vec![T::zero(); len];
        for l in 0..self.config.n_layers {
            let h = ln(&x, &block_name(l, "ln1.g"), &block_name(l, "ln1.b"));
            let qkv = linear(&h, q, &block_name(l, "attn.qkv.w"), &block_name(l, "attn.qkv.b"));
            let cache = &g.value(out.block_qkv[l]).data;
            let mut att = vec![T::zero(); q * d];
            for (i, qr) in queries.iter().enumerate() {
                let p = TOKENS_PER_STEP * qr.pos + 3;
                let base = qr.seq * len;
                let own = &qkv[i * 3 * d..(i + 1) * 3 * d];
                for hd in 0..heads {
                    let qv = &own[hd * dh..(hd + 1) * dh];
                    let dotk = |k: &[T]| qv.iter().zip(k).map(|(&a, &b)| a * b).sum::<T>() * scale;
                    for (j, s) in scores[..p].iter_mut().enumerate() {
                        let row = (base + j) * 3 * d;
                        *s = dotk(&cache[row + d + hd * dh..row + d + (hd + 1) * dh]);
                    }
                    scores[p] = dotk(&own[d + hd * dh..d + (hd + 1) * dh]);
                    let mx = scores[..=p].iter().copied().fold(T::neg_infinity(), T::max);
                    let mut sum = T::zero();
                    for s in scores[..=p].iter_mut() {
                        *s = (*s - mx).exp();
                        sum += *s;
                    }
                    let o = &mut att[i * d + hd * dh..i * d + (hd + 1) * dh];
                    for (j, &w) in scores[..p].iter().enumerate() {
                        let row = (base + j) * 3 * d + 2 * d + hd * dh;
                        for (oo, &v) in o.iter_mut().zip(&cache[row..row + dh]) {
                            *oo += w * v;
                        }
                    }
                    let wp = scores[p];
                    for (oo, &v) in o.iter_mut().zip(&own[2 * d + hd * dh..2 * d + (hd + 1) * dh]) {
                        *oo += wp * v;
                    }
                    for oo in o.iter_mut() {
                        *oo /= sum;
                    }
                }
            }
            let proj = linear(&att, q, &block_name(l, "attn.out.w"), &block_name(l, "attn.out.b"));
            x.iter_mut().zip(&proj).for_each(|(a, &b)| *a += b);
            let h = ln(&x, &block_name(l, "ln2.g"), &block_name(l, "ln2.b"));
            let mut up = linear(&h, q, &block_name(l, "ffn.up.w"), &block_name(l, "ffn.up.b"));
            up.iter_mut().for_each(|v| *v = gelu(*v));
            let down = linear(&up, q, &block_name(l, "ffn.down.w"), &block_name(l, "ffn.down.b"));
            x.iter_mut().zip(&down).for_each(|(a, &b)| *a += b);
        }
        let h = ln(&x, "final.ln.g", "final.ln.b");
        let pred = linear(&h, q, "head.predictor.w", "head.predictor.b");
        Ok(pred.chunks(2).map(|c| (c[0], c[1])).collect())
    }
}

/// One substituted-action evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionQuery {
    pub seq: usize,
    pub pos: usize,
    /// Raw action value.
    pub action: f64,
}

/// Model outputs in raw units, one entry per batch row.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub r_hat: Vec<f64>,
    pub c_hat: Vec<f64>,
}
