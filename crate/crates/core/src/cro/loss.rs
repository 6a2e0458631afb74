//! Loss terms, both as plain functions and as graph nodes.

use std::f64::consts::{E, PI};

use super::params::{CroParams, EpisodePrefix};
use crate::nn::{Graph, Tensor, Var};
use crate::scalar::{lit, Scalar};

/// Penalized episode utility in raw units. Negative value predictions are
/// treated as zero.
pub fn utility(r_hat: f64, c_hat: f64, prefix: EpisodePrefix, params: &CroParams, target: f64) -> f64 {
    let r_total = prefix.h_r + r_hat.max(0.0);
    let c_total = prefix.h_c + c_hat;
    let ratio = c_total / (r_total + params.eps);
    let penalty = if ratio <= 0.0 {
        1.0
    } else {
        (target / ratio).powf(params.gamma_u).min(1.0)
    };
    penalty * r_total
}

/// Softmax over the positive gains `U_k - U_base`; candidates without a gain
/// get zero weight and an all-zero result means no candidate improved.
pub fn regret_weights(utilities: &[f64], base: f64, params: &CroParams) -> Vec<f64> {
    let gains: Vec<f64> = utilities.iter().map(|u| (u - base).max(0.0)).collect();
    let top = gains.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return vec![0.0; gains.len()];
    }
    // shifted by the largest gain; eps then acts on the shifted scale
    let raw: Vec<f64> = gains
        .iter()
        .map(|&d| if d > 0.0 { ((d - top) / params.tau).exp() } else { 0.0 })
        .collect();
    let z: f64 = raw.iter().sum::<f64>() + params.eps;
    raw.iter().map(|r| r / z).collect()
}

/// Negative log density of `a` under N(mu, sigma^2).
pub fn gaussian_nll(mu: f64, sigma: f64, a: f64) -> f64 {
    sigma.ln() + 0.5 * (2.0 * PI).ln() + (a - mu).powi(2) / (2.0 * sigma * sigma)
}

pub fn gaussian_entropy(sigma: f64) -> f64 {
    0.5 * (2.0 * PI * E * sigma * sigma).ln()
}

fn mean_weights<T: Scalar>(mask: &[f64]) -> Vec<T> {
    let n: f64 = mask.iter().sum();
    let n = if n > 0.0 { n } else { 1.0 };
    mask.iter().map(|&m| lit(m / n)).collect()
}

fn column<T: Scalar>(g: &mut Graph<T>, values: &[f64]) -> Var {
    g.constant(Tensor::column(values.iter().map(|&v| lit(v)).collect()))
}

/// Masked mean of the Gaussian negative log-likelihood.
pub fn nll_loss<T: Scalar>(g: &mut Graph<T>, mu: Var, sigma: Var, actions: &[f64], mask: &[f64]) -> Var {
    let a = column(g, actions);
    let diff = g.sub(a, mu);
    let sq = g.square(diff);
    let var = g.square(sigma);
    let var2 = g.scale(var, lit(2.0));
    let quad = g.div(sq, var2);
    let ls = g.log(sigma);
    let t = g.add(ls, quad);
    let t = g.shift(t, lit(0.5 * (2.0 * PI).ln()));
    g.dot(t, mean_weights(mask))
}

/// Masked mean Gaussian entropy.
pub fn entropy_loss<T: Scalar>(g: &mut Graph<T>, sigma: Var, mask: &[f64]) -> Var {
    let ls = g.log(sigma);
    let h = g.shift(ls, lit(0.5 * (2.0 * PI * E).ln()));
    g.dot(h, mean_weights(mask))
}

/// Masked mean of squared errors on both outcome heads.
pub fn predictor_loss<T: Scalar>(
    g: &mut Graph<T>,
    r_hat: Var,
    c_hat: Var,
    r_target: &[f64],
    c_target: &[f64],
    mask: &[f64],
) -> Var {
    let w = mean_weights::<T>(mask);
    let rt = column(g, r_target);
    let ct = column(g, c_target);
    let dr = g.sub(r_hat, rt);
    let dc = g.sub(c_hat, ct);
    let sr = g.square(dr);
    let sc = g.square(dc);
    let s = g.add(sr, sc);
    g.dot(s, w)
}

/// Masked mean squared error of the action mean.
pub fn mse_loss<T: Scalar>(g: &mut Graph<T>, mu: Var, actions: &[f64], mask: &[f64]) -> Var {
    let a = column(g, actions);
    let d = g.sub(mu, a);
    let s = g.square(d);
    g.dot(s, mean_weights(mask))
}

/// Regression targets for the action mean, held fixed during backprop.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegretTargets {
    /// Batch row each target belongs to.
    pub rows: Vec<usize>,
    /// Candidate actions, in the same units as the action mean.
    pub actions: Vec<f64>,
    pub weights: Vec<f64>,
    /// Number of real steps the loss is averaged over.
    pub steps: usize,
}

/// `(1/T) sum_t sum_k w_tk (mu_t - a_tk)^2`.
pub fn regret_loss<T: Scalar>(g: &mut Graph<T>, mu: Var, targets: &RegretTargets) -> Var {
    if targets.rows.is_empty() {
        // keeps mu in the graph so its regret gradient is an explicit zero
        return g.dot(mu, vec![T::zero(); g.value(mu).len()]);
    }
    let m = g.gather_rows(mu, targets.rows.clone());
    let a = column(g, &targets.actions);
    let d = g.sub(m, a);
    let s = g.square(d);
    let t = targets.steps.max(1) as f64;
    g.dot(s, targets.weights.iter().map(|&w| lit(w / t)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub nll: f64,
    pub regret: f64,
    pub pred: f64,
    pub entropy: f64,
    pub total: f64,
}

/// `nll + alpha * regret + beta * pred - eta * entropy`.
pub fn combine<T: Scalar>(g: &mut Graph<T>, nll: Var, regret: Var, pred: Var, entropy: Var, p: &CroParams) -> Var {
    let r = g.scale(regret, lit(p.alpha));
    let q = g.scale(pred, lit(p.beta));
    let h = g.scale(entropy, lit(p.eta));
    let t = g.add(nll, r);
    let t = g.add(t, q);
    g.sub(t, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> CroParams {
        CroParams::with_tau(1.0)
    }

    #[test]
    fn utility_cases() {
        let pre = EpisodePrefix { h_r: 4.0, h_c: 20.0 };
        // ratio equals the target: no penalty
        let u = utility(6.0, 30.0, pre, &p(), 5.0);
        assert!((u - 10.0).abs() < 1e-6);
        // twice the target with gamma 2: a quarter
        let u = utility(6.0, 80.0, pre, &p(), 5.0);
        assert!((u - 2.5).abs() < 1e-6);
        assert_eq!(utility(0.0, 5.0, EpisodePrefix::default(), &p(), 5.0), 0.0);
        // nothing spent counts as compliant
        assert_eq!(utility(3.0, 0.0, EpisodePrefix::default(), &p(), 5.0), 3.0);
        // negative value predictions are floored
        assert_eq!(utility(-2.0, -1.0, pre, &p(), 5.0), 4.0);
    }

    #[test]
    fn weight_cases() {
        let w = regret_weights(&[0.0, 1.0], 0.0, &p());
        assert!(w[0] == 0.0 && (w[1] - 1.0).abs() < 1e-7);
        let w = regret_weights(&[1.0, 1.0, 1.0], 0.0, &p());
        for x in w {
            assert!((x - 1.0 / 3.0).abs() < 1e-7);
        }
        let w = regret_weights(&[1.0, 2.0], 0.0, &p());
        assert!((w[0] - 0.2689).abs() < 1e-3 && (w[1] - 0.7311).abs() < 1e-3);
        assert_eq!(regret_weights(&[-1.0, 0.0], 0.0, &p()), vec![0.0, 0.0]);
        // huge gains do not overflow
        let w = regret_weights(&[1e6, 2e6], 0.0, &p());
        assert!((w[1] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn sharp_temperature_picks_argmax() {
        let mut q = p();
        q.tau = 1e-6;
        let w = regret_weights(&[0.3, 0.9, 0.5, -1.0], 0.1, &q);
        assert!((w[1] - 1.0).abs() < 1e-7);
        assert!(w[0] < 1e-12 && w[2] < 1e-12 && w[3] == 0.0);
    }

    #[test]
    fn closed_form_densities() {
        let c = 0.5 * (2.0 * PI).ln();
        assert!((gaussian_nll(1.0, 1.0, 1.0) - 0.918_938_533_204_672_7).abs() < 1e-12);
        assert!((gaussian_nll(1.0, 1.0, 2.0) - (c + 0.5)).abs() < 1e-12);
        assert!((gaussian_entropy(1.0) - 1.418_938_533_204_672_7).abs() < 1e-12);
        assert!((gaussian_entropy(2.0) - gaussian_entropy(1.0) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn graph_terms_match_plain_formulas() {
        let mu = [0.2, 0.5, 0.9, 0.4];
        let sg = [0.1, 0.3, 0.05, 0.2];
        let a = [0.25, 0.1, 0.7, 0.4];
        let mask = [1.0, 1.0, 0.0, 1.0];
        let mut g = Graph::<f64>::new();
        let m = g.constant(Tensor::column(mu.to_vec()));
        let s = g.constant(Tensor::column(sg.to_vec()));
        let nll = nll_loss(&mut g, m, s, &a, &mask);
        let want: f64 = [0, 1, 3].iter().map(|&i| gaussian_nll(mu[i], sg[i], a[i])).sum::<f64>() / 3.0;
        assert!((g.value(nll).item() - want).abs() < 1e-12);
        let h = entropy_loss(&mut g, s, &mask);
        let want: f64 = [0, 1, 3].iter().map(|&i| gaussian_entropy(sg[i])).sum::<f64>() / 3.0;
        assert!((g.value(h).item() - want).abs() < 1e-12);
    }

    #[test]
    fn predictor_loss_single_error() {
        let mut g = Graph::<f64>::new();
        let r = g.constant(Tensor::column(vec![1.0, 2.0, 3.5, 4.0]));
        let c = g.constant(Tensor::column(vec![5.0, 6.0, 7.0, 8.0]));
        let l = predictor_loss(&mut g, r, c, &[1.0, 2.0, 3.0, 4.0], &[5.0, 6.0, 7.0, 8.0], &[1.0; 4]);
        assert!((g.value(l).item() - 0.25 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn regret_loss_cases() {
        let mut g = Graph::<f64>::new();
        let mu = g.param(Tensor::column(vec![0.0]));
        let t = RegretTargets {
            rows: vec![0],
            actions: vec![2.0],
            weights: vec![1.0],
            steps: 1,
        };
        let l = regret_loss(&mut g, mu, &t);
        assert_eq!(g.value(l).item(), 4.0);
        let empty = regret_loss(&mut g, mu, &RegretTargets::default());
        assert_eq!(g.value(empty).item(), 0.0);
        let grads = g.backward(empty).unwrap();
        assert_eq!(grads.get(mu).unwrap(), &[0.0]);
    }

    proptest! {
        #[test]
        fn weights_sum_at_most_one(u in prop::collection::vec(-5.0f64..5.0, 1..10), base in -2.0f64..2.0, tau in 0.01f64..10.0) {
            let mut q = p();
            q.tau = tau;
            let w = regret_weights(&u, base, &q);
            let s: f64 = w.iter().sum();
            prop_assert!((0.0..=1.0).contains(&s));
            if u.iter().any(|&x| x > base) {
                prop_assert!((s - 1.0).abs() < 1e-6);
            } else {
                prop_assert_eq!(s, 0.0);
            }
        }

        #[test]
        fn utility_non_increasing_past_target(r in 0.1f64..50.0, ratio in 1.0f64..10.0, bump in 0.0f64..5.0) {
            let q = p();
            let target = 2.0;
            let u1 = utility(r, r * target * ratio, EpisodePrefix::default(), &q, target);
            let u2 = utility(r, r * target * (ratio + bump), EpisodePrefix::default(), &q, target);
            prop_assert!(u2 <= u1 + 1e-12);
        }

        #[test]
        fn regret_gradient_is_weighted_pull(mu0 in -1.0f64..1.0, a in prop::collection::vec(-1.0f64..1.0, 1..6)) {
            let k = a.len();
            let w: Vec<f64> = (0..k).map(|i| (i as f64 + 1.0) / (k * (k + 1)) as f64).collect();
            let mut g = Graph::<f64>::new();
            let mu = g.param(Tensor::column(vec![mu0]));
            let t = RegretTargets { rows: vec![0; k], actions: a.clone(), weights: w.clone(), steps: 1 };
            let l = regret_loss(&mut g, mu, &t);
            let grad = g.backward(l).unwrap().get(mu).unwrap()[0];
            let want: f64 = 2.0 * w.iter().zip(&a).map(|(wi, ai)| wi * (mu0 - ai)).sum::<f64>();
            prop_assert!((grad - want).abs() < 1e-12);
        }
    }
}
