use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::pareto::{normalize_objectives, pareto_frontier, ObjectivePoint};
use super::scores::{compliance_score, efficiency_score, richness_score};
use crate::types::Trajectory;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterParams {
    /// Decay rate of the frontier-distance kernel.
    pub kappa: f64,
    /// Exponent of the compliance penalty, at least 1.
    pub omega: f64,
    /// Episode length used for the richness score.
    pub t_max: usize,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            kappa: 5.0,
            omega: 2.0,
            t_max: 48,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) || !(self.omega >= 1.0) || self.t_max == 0 {
            return Err(Error::Config(format!(
                "filter parameters need kappa > 0, omega >= 1, t_max >= 1; got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityScore {
    pub point: ObjectivePoint,
    pub on_frontier: bool,
    pub s_eff: f64,
    pub s_com: f64,
    pub s_len: f64,
    pub q: f64,
    pub prob: f64,
}

/// Scores every trajectory and normalizes the product of the three scores
/// into a sampling distribution.
///
/// Each trajectory's compliance is judged against its own campaign target.
pub fn sampling_distribution(dataset: &[Trajectory], params: &FilterParams) -> Result<Vec<QualityScore>> {
    params.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("cannot weight an empty dataset".into()));
    }
    if let Some(t) = dataset.iter().find(|t| t.is_empty() || t.len() > params.t_max) {
        return Err(Error::Config(format!(
            "trajectory length {} outside [1, {}]",
            t.len(),
            params.t_max
        )));
    }
    let raw: Vec<(f64, f64)> = dataset.iter().map(|t| (t.total_reward, t.total_cost)).collect();
    let points = normalize_objectives(&raw);
    let front_idx = pareto_frontier(&points);
    let front: Vec<ObjectivePoint> = front_idx.iter().map(|&i| points[i]).collect();
    let mut on_front = vec![false; points.len()];
    for &i in &front_idx {
        on_front[i] = true;
    }
    let mut scores: Vec<QualityScore> = dataset
        .iter()
        .zip(&points)
        .zip(on_front)
        .map(|((t, p), on_frontier)| {
            let s_eff = efficiency_score(p, &front, params.kappa);
            let s_com = compliance_score(t.realized_ratio(), t.campaign.cpa_target, params.omega);
            let s_len = richness_score(t.len(), params.t_max);
            QualityScore {
                point: *p,
                on_frontier,
                s_eff,
                s_com,
                s_len,
                q: s_eff * s_com * s_len,
                prob: 0.0,
            }
        })
        .collect();
    let total: f64 = scores.iter().map(|s| s.q).sum();
    if !(total > 0.0) {
        return Err(Error::Config(
            "every trajectory has zero quality; lower kappa or check the dataset".into(),
        ));
    }
    for s in &mut scores {
        s.prob = s.q / total;
    }
    Ok(scores)
}

/// Draws `batch_size` indices i.i.d. with replacement from `probs`.
pub fn weighted_batch_sample<R: Rng + ?Sized>(probs: &[f64], batch_size: usize, rng: &mut R) -> Result<Vec<usize>> {
    let dist = WeightedIndex::new(probs).map_err(|e| Error::Config(format!("sampling weights: {e}")))?;
    Ok((0..batch_size).map(|_| dist.sample(rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{CampaignConfig, RewardMode, Step};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn traj(len: usize, reward: f64, cost: f64, target: f64) -> Trajectory {
        let steps = (0..len)
            .map(|i| Step {
                index: i + 1,
                state: vec![0.0; 16],
                action: 1.0,
                reward: reward / len as f64,
                cost: cost / len as f64,
            })
            .collect();
        Trajectory::new(CampaignConfig::new(1e6, target, 48, RewardMode::Dense), steps)
    }

    #[test]
    fn identical_trajectories_are_uniform() {
        let d = vec![traj(48, 2.0, 4.0, 5.0); 4];
        let s = sampling_distribution(&d, &FilterParams::default()).unwrap();
        for x in &s {
            assert!((x.prob - 0.25).abs() < 1e-15);
            assert!(x.on_frontier);
        }
    }

    #[test]
    fn quality_is_the_product() {
        let d = vec![traj(48, 10.0, 10.0, 2.0), traj(24, 5.0, 20.0, 2.0), traj(48, 0.0, 3.0, 2.0)];
        let s = sampling_distribution(&d, &FilterParams::default()).unwrap();
        for x in &s {
            assert!((x.q - x.s_eff * x.s_com * x.s_len).abs() < 1e-15);
            assert!(x.s_eff > 0.0 && x.s_eff <= 1.0);
        }
        assert_eq!(s[2].s_com, super::super::ZERO_VALUE_COMPLIANCE);
        assert_eq!(s[1].s_len, 0.5);
        assert!((s.iter().map(|x| x.prob).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_zero_quality_is_an_error() {
        let d = vec![traj(48, 0.0, 1.0, 1.0), traj(48, 1.0, 2.0, 1.0)];
        let params = FilterParams {
            kappa: 1e6,
            ..Default::default()
        };
        // the compliant-by-floor point still sits on the frontier, so this is positive
        assert!(sampling_distribution(&d, &params).is_ok());
        assert!(sampling_distribution(&[], &params).is_err());
    }

    #[test]
    fn degenerate_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(weighted_batch_sample(&[1.0, 0.0], 64, &mut rng).unwrap().iter().all(|&i| i == 0));
        assert!(weighted_batch_sample(&[0.0, 0.0], 1, &mut rng).is_err());
    }

    #[test]
    fn empirical_frequency_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws = weighted_batch_sample(&[0.25, 0.75], 100_000, &mut rng).unwrap();
        let f = draws.iter().filter(|&&i| i == 1).count() as f64 / draws.len() as f64;
        assert!((f - 0.75).abs() < 0.01, "{f}");
        let again = weighted_batch_sample(&[0.25, 0.75], 100_000, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(draws, again);
    }
}
