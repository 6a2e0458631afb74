//! Single-advertiser market simulator.
//!
//! Each step draws a batch of impressions, bids `lambda * value` on every
//! one of them, and settles winners at their least winning cost until the
//! budget runs out.

mod episode;
mod market;
mod state;

pub use episode::{run_episode, BidPolicy, Episode, Observation, StepOutcome};
pub use market::{default_profile, MarketModel};
pub use state::{build_state, EpisodeState, StepRecord, FEATURE_NAMES};
