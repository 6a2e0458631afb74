use crate::types::{CampaignConfig, Impression, RewardMode, STATE_DIM};

pub const FEATURE_NAMES: [&str; STATE_DIM] = [
    "time_left",
    "budget_left",
    "historical_bid_mean",
    "last_three_bid_mean",
    "historical_LeastWinningCost_mean",
    "last_three_LeastWinningCost_mean",
    "historical_pValues_mean",
    "last_three_pValues_mean",
    "current_pValues_mean",
    "historical_conversion_mean",
    "last_three_conversion_mean",
    "historical_xi_mean",
    "last_three_xi_mean",
    "current_pv_num",
    "last_three_pv_num_total",
    "historical_pv_num_total",
];

/// Per-step market summary kept for the history features.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepRecord {
    pub bid_mean: f64,
    pub lwc_mean: f64,
    pub value_mean: f64,
    pub conversions: f64,
    pub win_rate: f64,
    pub pv_num: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeState {
    pub campaign: CampaignConfig,
    /// 1-based index of the step about to be played.
    pub t: usize,
    pub budget_left: f64,
    pub cum_reward: f64,
    pub cum_cost: f64,
    pub wins: usize,
    pub participations: usize,
    pub history: Vec<StepRecord>,
    /// Impressions arriving at step `t`.
    pub current_batch: Vec<Impression>,
}

impl EpisodeState {
    pub fn new(campaign: CampaignConfig, first_batch: Vec<Impression>) -> Self {
        Self {
            campaign,
            t: 1,
            budget_left: campaign.budget,
            cum_reward: 0.0,
            cum_cost: 0.0,
            wins: 0,
            participations: 0,
            history: Vec::new(),
            current_batch: first_batch,
        }
    }

    pub fn is_active(&self) -> bool {
        self.t <= self.campaign.horizon
    }

    /// Plays the current batch at bid multiplier `lambda`.
    ///
    /// Bids are `lambda * value`; a bid at or above the clearing price wins
    /// and pays the clearing price. Impressions are settled in batch order
    /// and a win the remaining budget cannot cover is forfeited.
    pub(crate) fn settle(&mut self, lambda: f64) -> (f64, f64, usize) {
        let mode = self.campaign.reward_mode;
        let (mut reward, mut cost, mut wins) = (0.0, 0.0, 0usize);
        let (mut bid_sum, mut lwc_sum, mut value_sum) = (0.0, 0.0, 0.0);
        for imp in &self.current_batch {
            let bid = lambda * imp.value;
            bid_sum += bid;
            lwc_sum += imp.least_winning_cost;
            value_sum += imp.value;
            if bid > 0.0 && bid >= imp.least_winning_cost {
                let price = imp.least_winning_cost;
                // same accumulation order as the trajectory totals, so the
                // budget holds exactly on the recorded sums
                if self.cum_cost + (cost + price) <= self.campaign.budget {
                    cost += price;
                    wins += 1;
                    reward += match mode {
                        RewardMode::Dense => imp.value,
                        RewardMode::Sparse => {
                            if imp.conversion_draw < imp.value {
                                1.0
                            } else {
                                0.0
                            }
                        }
                    };
                }
            }
        }
        let n = self.current_batch.len();
        let nf = n.max(1) as f64;
        self.history.push(StepRecord {
            bid_mean: bid_sum / nf,
            lwc_mean: lwc_sum / nf,
            value_mean: value_sum / nf,
            conversions: reward,
            win_rate: wins as f64 / nf,
            pv_num: n as f64,
        });
        self.cum_reward += reward;
        self.cum_cost += cost;
        self.budget_left = (self.campaign.budget - self.cum_cost).max(0.0);
        self.wins += wins;
        self.participations += n;
        self.t += 1;
        (reward, cost, wins)
    }
}

fn mean_of(records: &[StepRecord], f: impl Fn(&StepRecord) -> f64) -> f64 {
    if records.is_empty() {
        0.0
    } else {
        records.iter().map(&f).sum::<f64>() / records.len() as f64
    }
}

/// The 16-feature observation, in [`FEATURE_NAMES`] order.
pub fn build_state(ep: &EpisodeState) -> [f64; STATE_DIM] {
    let h = &ep.history;
    let last3 = &h[h.len().saturating_sub(3)..];
    let n_cur = ep.current_batch.len();
    let cur_value_mean = if n_cur == 0 {
        0.0
    } else {
        ep.current_batch.iter().map(|i| i.value).sum::<f64>() / n_cur as f64
    };
    [
        (ep.campaign.horizon + 1).saturating_sub(ep.t) as f64,
        ep.budget_left,
        mean_of(h, |r| r.bid_mean),
        mean_of(last3, |r| r.bid_mean),
        mean_of(h, |r| r.lwc_mean),
        mean_of(last3, |r| r.lwc_mean),
        mean_of(h, |r| r.value_mean),
        mean_of(last3, |r| r.value_mean),
        cur_value_mean,
        mean_of(h, |r| r.conversions),
        mean_of(last3, |r| r.conversions),
        mean_of(h, |r| r.win_rate),
        mean_of(last3, |r| r.win_rate),
        n_cur as f64,
        last3.iter().map(|r| r.pv_num).sum(),
        h.iter().map(|r| r.pv_num).sum(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn campaign() -> CampaignConfig {
        CampaignConfig::new(100.0, 10.0, 48, RewardMode::Dense)
    }

    fn imp(value: f64, lwc: f64) -> Impression {
        Impression {
            value,
            least_winning_cost: lwc,
            conversion_draw: 0.5,
        }
    }

    #[test]
    fn fresh_episode_has_empty_history_features() {
        let ep = EpisodeState::new(campaign(), vec![imp(0.2, 1.0), imp(0.4, 1.0)]);
        let s = build_state(&ep);
        assert_eq!(s[0], 48.0);
        assert_eq!(s[1], 100.0);
        for i in [2, 3, 4, 5, 6, 7, 9, 10, 11, 12, 14, 15] {
            assert_eq!(s[i], 0.0, "{}", FEATURE_NAMES[i]);
        }
        assert!((s[8] - 0.3).abs() < 1e-15);
        assert_eq!(s[13], 2.0);
    }

    #[test]
    fn historical_bid_mean_is_arithmetic_mean() {
        let mut ep = EpisodeState::new(campaign(), vec![]);
        for b in [2.0, 4.0] {
            ep.history.push(StepRecord {
                bid_mean: b,
                ..Default::default()
            });
        }
        assert_eq!(build_state(&ep)[2], 3.0);
    }

    #[test]
    fn last_three_window() {
        let mut ep = EpisodeState::new(campaign(), vec![]);
        ep.t = 5;
        for v in [1.0, 2.0, 3.0, 4.0] {
            ep.history.push(StepRecord {
                lwc_mean: v,
                pv_num: v,
                ..Default::default()
            });
        }
        let s = build_state(&ep);
        assert_eq!(s[5], 3.0);
        assert_eq!(s[4], 2.5);
        assert_eq!(s[14], 9.0);
        assert_eq!(s[15], 10.0);
        assert_eq!(s[0], 44.0);
    }

    #[test]
    fn zero_bid_wins_nothing() {
        let mut ep = EpisodeState::new(campaign(), vec![imp(0.5, 0.0), imp(0.9, 0.3)]);
        let (r, c, w) = ep.settle(0.0);
        assert_eq!((r, c, w), (0.0, 0.0, 0));
        assert_eq!(ep.budget_left, 100.0);
    }

    #[test]
    fn single_auction_dense() {
        let mut ep = EpisodeState::new(campaign(), vec![imp(0.5, 0.3)]);
        let (r, c, w) = ep.settle(1.0);
        assert_eq!((r, c, w), (0.5, 0.3, 1));
        assert_eq!(ep.history[0].win_rate, 1.0);
    }

    #[test]
    fn sparse_reward_uses_conversion_draw() {
        let mut cfg = campaign();
        cfg.reward_mode = RewardMode::Sparse;
        let mut a = imp(0.6, 0.1);
        a.conversion_draw = 0.59;
        let mut b = imp(0.6, 0.1);
        b.conversion_draw = 0.61;
        let mut ep = EpisodeState::new(cfg, vec![a, b]);
        let (r, _, w) = ep.settle(10.0);
        assert_eq!((r, w), (1.0, 2));
    }

    #[test]
    fn unaffordable_win_is_forfeited() {
        let mut cfg = campaign();
        cfg.budget = 0.1;
        let mut ep = EpisodeState::new(cfg, vec![imp(0.5, 0.3), imp(0.5, 0.05)]);
        let (r, c, w) = ep.settle(10.0);
        assert_eq!(w, 1);
        assert_eq!(c, 0.05);
        assert_eq!(r, 0.5);

        let mut ep = EpisodeState::new(cfg, vec![imp(0.5, 0.3)]);
        assert_eq!(ep.settle(10.0), (0.0, 0.0, 0));
    }
}
