use super::pareto::ObjectivePoint;

/// Compliance assigned to trajectories that acquired no reward.
pub const ZERO_VALUE_COMPLIANCE: f64 = 1e-6;

/// `exp(-kappa * d)` with `d` the Euclidean distance, in normalized
/// coordinates, to the nearest frontier member.
pub fn efficiency_score(point: &ObjectivePoint, frontier: &[ObjectivePoint], kappa: f64) -> f64 {
    let d = frontier
        .iter()
        .map(|f| (point.r_norm - f.r_norm).hypot(point.c_norm - f.c_norm))
        .fold(f64::INFINITY, f64::min);
    (-kappa * d).exp()
}

/// 1 when the realized ratio meets the target, otherwise `(target / ratio)^omega`.
///
/// A non-finite ratio (no reward acquired) scores [`ZERO_VALUE_COMPLIANCE`].
pub fn compliance_score(ratio: f64, target: f64, omega: f64) -> f64 {
    if !ratio.is_finite() {
        ZERO_VALUE_COMPLIANCE
    } else if ratio <= target {
        1.0
    } else {
        (target / ratio).powf(omega)
    }
}

pub fn richness_score(len: usize, t_max: usize) -> f64 {
    len as f64 / t_max as f64
}
