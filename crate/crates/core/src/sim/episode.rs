use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::market::MarketModel;
use super::state::{build_state, EpisodeState};
use crate::types::{validate_trajectory, CampaignConfig, Step, Trajectory, STATE_DIM};
use crate::{Error, Result};

/// What a bidder sees before choosing the step's multiplier.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub t: usize,
    pub state: &'a [f64; STATE_DIM],
    pub campaign: &'a CampaignConfig,
    pub budget_left: f64,
    pub spent: f64,
    pub acquired: f64,
}

/// A step-wise bidder. Returning `Ok(None)` ends the episode early.
pub trait BidPolicy {
    fn bid(&mut self, obs: &Observation<'_>) -> Result<Option<f64>>;

    /// Realized reward and cost of the step just played.
    fn observe(&mut self, _reward: f64, _cost: f64) {}
}

impl<F> BidPolicy for F
where
    F: FnMut(&Observation<'_>) -> Result<Option<f64>>,
{
    fn bid(&mut self, obs: &Observation<'_>) -> Result<Option<f64>> {
        self(obs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub cost: f64,
    pub wins: usize,
}

/// An episode in progress: the public state plus the market's random stream.
///
/// Impression batches are drawn independently of the bids, so a seed fixes
/// the market regardless of policy.
#[derive(Debug, Clone)]
pub struct Episode<'m> {
    market: &'m MarketModel,
    rng: ChaCha8Rng,
    state: EpisodeState,
}

impl<'m> Episode<'m> {
    pub fn new(campaign: CampaignConfig, market: &'m MarketModel) -> Result<Self> {
        campaign.validate()?;
        market.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(market.seed);
        let batch = market.draw_batch(1, &mut rng);
        Ok(Self {
            market,
            rng,
            state: EpisodeState::new(campaign, batch),
        })
    }

    pub fn state(&self) -> &EpisodeState {
        &self.state
    }

    pub fn observation_vector(&self) -> [f64; STATE_DIM] {
        build_state(&self.state)
    }

    pub fn is_active(&self) -> bool {
        self.state.is_active()
    }

    pub fn step(&mut self, lambda: f64) -> Result<StepOutcome> {
        if !self.state.is_active() {
            return Err(Error::Policy("episode already finished".into()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Policy(format!(
                "bid multiplier must be finite and nonnegative, got {lambda}"
            )));
        }
        let (reward, cost, wins) = self.state.settle(lambda);
        self.state.current_batch = if self.state.is_active() {
            self.market.draw_batch(self.state.t, &mut self.rng)
        } else {
            Vec::new()
        };
        Ok(StepOutcome { reward, cost, wins })
    }
}

/// Plays one campaign to its horizon (or until the policy stops).
pub fn run_episode<P: BidPolicy + ?Sized>(
    policy: &mut P,
    campaign: &CampaignConfig,
    market: &MarketModel,
) -> Result<Trajectory> {
    let mut ep = Episode::new(*campaign, market)?;
    let mut steps = Vec::with_capacity(campaign.horizon);
    while ep.is_active() {
        let state = ep.observation_vector();
        let st = ep.state();
        let obs = Observation {
            t: st.t,
            state: &state,
            campaign,
            budget_left: st.budget_left,
            spent: st.cum_cost,
            acquired: st.cum_reward,
        };
        let Some(lambda) = policy.bid(&obs)? else {
            break;
        };
        let t = st.t;
        let out = ep.step(lambda)?;
        policy.observe(out.reward, out.cost);
        steps.push(Step {
            index: t,
            state: state.to_vec(),
            action: lambda,
            reward: out.reward,
            cost: out.cost,
        });
    }
    let traj = Trajectory::new(*campaign, steps);
    // an immediate stop leaves an empty trajectory, which the caller handles
    if !traj.is_empty() {
        if let Err(v) = validate_trajectory(&traj) {
            return Err(Error::Policy(format!(
                "simulator produced an invalid trajectory: {}",
                v[0]
            )));
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::RewardMode;

    fn setup() -> (CampaignConfig, MarketModel) {
        (
            CampaignConfig::new(50.0, 8.0, 48, RewardMode::Dense),
            MarketModel::desk(48).with_seed(11),
        )
    }

    fn constant(lambda: f64) -> impl FnMut(&Observation<'_>) -> Result<Option<f64>> {
        move |_| Ok(Some(lambda))
    }

    #[test]
    fn zero_policy_earns_and_spends_nothing() {
        let (cfg, m) = setup();
        let t = run_episode(&mut constant(0.0), &cfg, &m).unwrap();
        assert_eq!(t.len(), 48);
        assert!(t.steps.iter().all(|s| s.reward == 0.0 && s.cost == 0.0));
    }

    #[test]
    fn huge_bids_never_overspend() {
        let (cfg, m) = setup();
        for seed in 0..100 {
            let t = run_episode(&mut constant(1e9), &cfg, &m.with_seed(seed)).unwrap();
            assert!(t.total_cost <= cfg.budget);
            assert!(validate_trajectory(&t).is_ok());
        }
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let (cfg, m) = setup();
        let a = run_episode(&mut constant(7.0), &cfg, &m).unwrap();
        let b = run_episode(&mut constant(7.0), &cfg, &m).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn policy_errors_propagate() {
        let (cfg, m) = setup();
        let mut failing = |_: &Observation<'_>| -> Result<Option<f64>> { Err(Error::Policy("boom".into())) };
        assert!(matches!(run_episode(&mut failing, &cfg, &m), Err(Error::Policy(_))));
        assert!(run_episode(&mut constant(-1.0), &cfg, &m).is_err());
    }

    #[test]
    fn early_stop_shortens_trajectory() {
        let (cfg, m) = setup();
        let mut p = |o: &Observation<'_>| -> Result<Option<f64>> { Ok((o.t <= 10).then_some(5.0)) };
        let t = run_episode(&mut p, &cfg, &m).unwrap();
        assert_eq!(t.len(), 10);
    }

    #[test]
    fn higher_multiplier_never_wins_fewer() {
        // ample budget: truncation can make realized wins non-monotone
        let (mut cfg, m) = setup();
        cfg.budget = 1e12;
        for seed in 0..20 {
            let m = m.with_seed(seed);
            for step_at in [1usize, 17, 40] {
                let mut wins = Vec::new();
                for lam in [0.5, 2.0, 8.0, 32.0] {
                    let mut ep = Episode::new(cfg, &m).unwrap();
                    for _ in 1..step_at {
                        ep.step(4.0).unwrap();
                    }
                    wins.push(ep.step(lam).unwrap().wins);
                }
                assert!(wins.windows(2).all(|w| w[0] <= w[1]), "{wins:?}");
            }
        }
    }
}
