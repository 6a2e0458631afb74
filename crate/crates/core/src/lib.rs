pub mod allocation;
pub mod error;
pub mod scalar;
pub mod sim;
pub mod types;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use types::{CampaignConfig, Impression, RewardMode, Step, Trajectory, STATE_DIM};
pub mod dataset;
pub mod cdpr;
pub mod cro;
pub mod eval;
pub mod experiments;
pub mod nn;

pub type PolicyModelF32 = nn::PolicyModel<f32>;
pub type PolicyModelF64 = nn::PolicyModel<f64>;
pub type GraphF32 = nn::Graph<f32>;
pub type GraphF64 = nn::Graph<f64>;
