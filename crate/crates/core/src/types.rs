//! Campaign and trajectory records shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};

/// Number of features in an observation vector.
pub const STATE_DIM: usize = 16;

/// One auction opportunity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Impression {
    /// Predicted conversion probability, in `[0, 1]`.
    pub value: f64,
    /// Clearing price; also the second-price payment on a win.
    pub least_winning_cost: f64,
    /// Pre-drawn uniform used to realize a sparse conversion.
    pub conversion_draw: f64,
}

impl Impression {
    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.value)
            && self.least_winning_cost >= 0.0
            && self.least_winning_cost.is_finite()
            && (0.0..=1.0).contains(&self.conversion_draw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    /// Reward is the summed conversion probability of won impressions.
    Dense,
    /// Reward counts realized conversions.
    Sparse,
}

impl std::str::FromStr for RewardMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dense" => Ok(RewardMode::Dense),
            "sparse" => Ok(RewardMode::Sparse),
            other => Err(format!("unknown reward mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub budget: f64,
    pub cpa_target: f64,
    pub horizon: usize,
    pub reward_mode: RewardMode,
}

impl CampaignConfig {
    pub fn new(budget: f64, cpa_target: f64, horizon: usize, reward_mode: RewardMode) -> Self {
        Self {
            budget,
            cpa_target,
            horizon,
            reward_mode,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if !(self.budget > 0.0 && self.budget.is_finite()) {
            return Err(crate::Error::Config(format!(
                "campaign.budget must be positive, got {}",
                self.budget
            )));
        }
        if !(self.cpa_target > 0.0 && self.cpa_target.is_finite()) {
            return Err(crate::Error::Config(format!(
                "campaign.cpa_target must be positive, got {}",
                self.cpa_target
            )));
        }
        if self.horizon == 0 {
            return Err(crate::Error::Config("campaign.horizon must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    /// 1-based step index.
    pub index: usize,
    pub state: Vec<f64>,
    pub action: f64,
    pub reward: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub campaign: CampaignConfig,
    pub steps: Vec<Step>,
    pub total_reward: f64,
    pub total_cost: f64,
}

impl Trajectory {
    /// Builds a trajectory and accumulates its totals in step order.
    pub fn new(campaign: CampaignConfig, steps: Vec<Step>) -> Self {
        let mut total_reward = 0.0;
        let mut total_cost = 0.0;
        for s in &steps {
            total_reward += s.reward;
            total_cost += s.cost;
        }
        Self {
            campaign,
            steps,
            total_reward,
            total_cost,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Realized cost per unit of reward; `+inf` when nothing was acquired.
    pub fn realized_ratio(&self) -> f64 {
        if self.total_reward > 0.0 {
            self.total_cost / self.total_reward
        } else {
            f64::INFINITY
        }
    }

    pub fn rewards(&self) -> impl DoubleEndedIterator<Item = f64> + ExactSizeIterator + '_ {
        self.steps.iter().map(|s| s.reward)
    }

    pub fn costs(&self) -> impl DoubleEndedIterator<Item = f64> + ExactSizeIterator + '_ {
        self.steps.iter().map(|s| s.cost)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyTrajectory,
    InvalidCampaign(String),
    TooLong { len: usize, horizon: usize },
    StepIndex { step: usize, found: usize },
    StateDim { step: usize, found: usize },
    NonFinite { step: usize, field: &'static str },
    NegativeAction { step: usize },
    NegativeReward { step: usize },
    NegativeCost { step: usize },
    CostExceedsRemaining { step: usize, cost: f64, remaining: f64 },
    TotalMismatch { field: &'static str, stored: f64, summed: f64 },
    BudgetExceeded { total_cost: f64, budget: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::EmptyTrajectory => write!(f, "empty trajectory"),
            Violation::InvalidCampaign(m) => write!(f, "invalid campaign: {m}"),
            Violation::TooLong { len, horizon } => {
                write!(f, "trajectory has {len} steps, horizon is {horizon}")
            }
            Violation::StepIndex { step, found } => {
                write!(f, "step {step}: index {found} out of sequence")
            }
            Violation::StateDim { step, found } => {
                write!(f, "step {step}: state has {found} features, expected {STATE_DIM}")
            }
            Violation::NonFinite { step, field } => write!(f, "step {step}: non-finite {field}"),
            Violation::NegativeAction { step } => write!(f, "step {step}: negative action"),
            Violation::NegativeReward { step } => write!(f, "step {step}: negative reward"),
            Violation::NegativeCost { step } => write!(f, "step {step}: negative cost"),
            Violation::CostExceedsRemaining {
                step,
                cost,
                remaining,
            } => write!(f, "step {step}: cost {cost} exceeds remaining budget {remaining}"),
            Violation::TotalMismatch {
                field,
                stored,
                summed,
            } => write!(f, "{field} total {stored} differs from step sum {summed}"),
            Violation::BudgetExceeded { total_cost, budget } => {
                write!(f, "budget exceeded: spent {total_cost} of {budget}")
            }
        }
    }
}

/// Checks every trajectory invariant. Violations are returned as data.
pub fn validate_trajectory(traj: &Trajectory) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if let Err(e) = traj.campaign.validate() {
        out.push(Violation::InvalidCampaign(e.to_string()));
    }
    if traj.steps.is_empty() {
        out.push(Violation::EmptyTrajectory);
    }
    if traj.campaign.horizon > 0 && traj.steps.len() > traj.campaign.horizon {
        out.push(Violation::TooLong {
            len: traj.steps.len(),
            horizon: traj.campaign.horizon,
        });
    }
    let mut reward_sum = 0.0;
    let mut cost_sum = 0.0;
    for (i, s) in traj.steps.iter().enumerate() {
        let step = i + 1;
        if s.index != step {
            out.push(Violation::StepIndex {
                step,
                found: s.index,
            });
        }
        if s.state.len() != STATE_DIM {
            out.push(Violation::StateDim {
                step,
                found: s.state.len(),
            });
        }
        if s.state.iter().any(|x| !x.is_finite()) {
            out.push(Violation::NonFinite {
                step,
                field: "state",
            });
        }
        for (field, v) in [("action", s.action), ("reward", s.reward), ("cost", s.cost)] {
            if !v.is_finite() {
                out.push(Violation::NonFinite { step, field });
            }
        }
        if s.action < 0.0 {
            out.push(Violation::NegativeAction { step });
        }
        if s.reward < 0.0 {
            out.push(Violation::NegativeReward { step });
        }
        if s.cost < 0.0 {
            out.push(Violation::NegativeCost { step });
        }
        if cost_sum + s.cost > traj.campaign.budget {
            out.push(Violation::CostExceedsRemaining {
                step,
                cost: s.cost,
                remaining: traj.campaign.budget - cost_sum,
            });
        }
        reward_sum += s.reward;
        cost_sum += s.cost;
    }
    if reward_sum != traj.total_reward {
        out.push(Violation::TotalMismatch {
            field: "reward",
            stored: traj.total_reward,
            summed: reward_sum,
        });
    }
    if cost_sum != traj.total_cost {
        out.push(Violation::TotalMismatch {
            field: "cost",
            stored: traj.total_cost,
            summed: cost_sum,
        });
    }
    if traj.total_cost > traj.campaign.budget {
        out.push(Violation::BudgetExceeded {
            total_cost: traj.total_cost,
            budget: traj.campaign.budget,
        });
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}
