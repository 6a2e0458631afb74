//! Dual-stream context construction and Pareto-prioritized trajectory
//! weighting for offline training data.

mod dual_stream;
mod pareto;
mod sampling;
mod scores;

pub use dual_stream::{build_dual_stream, DualStreamContext};
pub use pareto::{dominates, normalize_objectives, pareto_frontier, ObjectivePoint};
pub use sampling::{sampling_distribution, weighted_batch_sample, FilterParams, QualityScore};
pub use scores::{compliance_score, efficiency_score, richness_score, ZERO_VALUE_COMPLIANCE};
