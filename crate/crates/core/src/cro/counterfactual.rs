use rand::Rng;
use rand_distr::StandardNormal;

use super::batch::TrainBatch;
use super::loss::{regret_weights, utility, RegretTargets};
use super::params::{CroParams, EpisodePrefix};
use crate::nn::{ActionQuery, ForwardOut, Graph, PolicyModel};
use crate::scalar::{to_f64, Scalar};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CounterfactualStats {
    /// Share of real steps where some candidate beat the baseline.
    pub frac_positive: f64,
    /// Mean positive gain over all candidates of all real steps.
    pub mean_gain: f64,
}

/// Samples `k` actions per step around the policy mean, scores them with the
/// outcome head against the mean action itself, and returns weighted
/// regression targets (in action-mean units) for candidates that improve.
pub fn counterfactual_targets<T: Scalar, R: Rng + ?Sized>(
    model: &PolicyModel<T>,
    g: &Graph<T>,
    out: &ForwardOut,
    batch: &TrainBatch,
    cro: &CroParams,
    rng: &mut R,
) -> Result<(RegretTargets, CounterfactualStats)> {
    let bound = model.config.action_bound;
    let mu = &g.value(out.mu).data;
    let sigma = &g.value(out.sigma).data;
    let k = cro.k;
    let w = batch.seq.window;
    let real: Vec<usize> = (0..batch.rows()).filter(|&r| batch.mask[r] > 0.0).collect();
    let mut queries = Vec::with_capacity(real.len() * (k + 1));
    for &row in &real {
        let (m, s) = (to_f64(mu[row]) * bound, to_f64(sigma[row]) * bound);
        let (seq, pos) = (row / w, row % w);
        queries.push(ActionQuery { seq, pos, action: m });
        for _ in 0..k {
            let z: f64 = rng.sample(StandardNormal);
            queries.push(ActionQuery {
                seq,
                pos,
                action: (m + s * z).clamp(0.0, bound),
            });
        }
    }
    let outcomes = model.substituted_outcomes(g, out, &batch.seq, &queries)?;
    let rs = to_f64(model.norm.rtg_scale);
    let cs = to_f64(model.norm.ctg_scale);
    let mut targets = RegretTargets {
        steps: real.len(),
        ..RegretTargets::default()
    };
    let mut stats = CounterfactualStats::default();
    let mut utilities = vec![0.0; k];
    for (j, &row) in real.iter().enumerate() {
        let prefix = EpisodePrefix {
            h_r: batch.prefix_r[row],
            h_c: batch.prefix_c[row],
        };
        let target = batch.targets[row / w];
        let u = |q: usize| {
            let (r, c) = outcomes[q];
            utility(to_f64(r) * rs, to_f64(c) * cs, prefix, cro, target)
        };
        let base_q = j * (k + 1);
        let base = u(base_q);
        for (i, slot) in utilities.iter_mut().enumerate() {
            *slot = u(base_q + 1 + i);
        }
        let weights = regret_weights(&utilities, base, cro);
        let mut any = false;
        for (i, &wt) in weights.iter().enumerate() {
            let gain = (utilities[i] - base).max(0.0);
            stats.mean_gain += gain;
            if wt > 0.0 {
                any = true;
                targets.rows.push(row);
                targets.actions.push(queries[base_q + 1 + i].action / bound);
                targets.weights.push(wt);
            }
        }
        if any {
            stats.frac_positive += 1.0;
        }
    }
    if !real.is_empty() {
        stats.frac_positive /= real.len() as f64;
        stats.mean_gain /= (real.len() * k) as f64;
    }
    Ok((targets, stats))
}
