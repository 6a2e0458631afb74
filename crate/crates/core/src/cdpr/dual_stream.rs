use crate::types::Trajectory;

/// Return-to-go and cost-to-go token streams of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct DualStreamContext {
    pub rtg: Vec<f64>,
    pub ctg: Vec<f64>,
}

impl DualStreamContext {
    pub fn len(&self) -> usize {
        self.rtg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rtg.is_empty()
    }
}

fn suffix_sums(xs: impl DoubleEndedIterator<Item = f64> + ExactSizeIterator) -> Vec<f64> {
    let mut out = vec![0.0; xs.len()];
    let mut acc = 0.0;
    for (i, x) in xs.enumerate().rev() {
        acc += x;
        out[i] = acc;
    }
    out
}

/// Suffix sums `R_t = r_t + R_{t+1}` and `C_t = c_t + C_{t+1}`, accumulated
/// from the last step backwards.
pub fn build_dual_stream(traj: &Trajectory) -> DualStreamContext {
    DualStreamContext {
        rtg: suffix_sums(traj.rewards()),
        ctg: suffix_sums(traj.costs()),
    }
}
