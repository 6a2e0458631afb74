use rand::Rng;

use crate::cdpr::build_dual_stream;
use crate::nn::SeqBatch;
use crate::types::Trajectory;

/// A training batch: model inputs plus the per-row quantities the losses need.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainBatch {
    pub seq: SeqBatch,
    /// 1 for real rows, 0 for padding.
    pub mask: Vec<f64>,
    /// Value and cost accumulated before each row's step.
    pub prefix_r: Vec<f64>,
    pub prefix_c: Vec<f64>,
    /// Value and cost of the steps after each row's step.
    pub future_r: Vec<f64>,
    pub future_c: Vec<f64>,
    /// CPA target of each sequence.
    pub targets: Vec<f64>,
    pub steps: usize,
}

impl TrainBatch {
    pub fn rows(&self) -> usize {
        self.seq.rows()
    }
}

/// Cuts one window of at most `window` steps from each picked trajectory,
/// at a uniformly drawn offset.
pub fn assemble_batch<R: Rng + ?Sized>(
    data: &[Trajectory],
    picks: &[usize],
    window: usize,
    rng: &mut R,
) -> TrainBatch {
    let width = picks.iter().map(|&i| data[i].len().min(window)).max().unwrap_or(1).max(1);
    let n = picks.len();
    let mut seq = SeqBatch::new(n, width);
    let rows = n * width;
    let mut b = TrainBatch {
        seq: SeqBatch::new(0, 0),
        mask: vec![0.0; rows],
        prefix_r: vec![0.0; rows],
        prefix_c: vec![0.0; rows],
        future_r: vec![0.0; rows],
        future_c: vec![0.0; rows],
        targets: Vec::with_capacity(n),
        steps: 0,
    };
    for (s, &i) in picks.iter().enumerate() {
        let traj = &data[i];
        b.targets.push(traj.campaign.cpa_target);
        let len = traj.len().min(width);
        let start = if traj.len() > len { rng.random_range(0..=traj.len() - len) } else { 0 };
        let dual = build_dual_stream(traj);
        let (mut hr, mut hc) = (0.0, 0.0);
        for step in &traj.steps[..start] {
            hr += step.reward;
            hc += step.cost;
        }
        for p in 0..len {
            let t = start + p;
            let step = &traj.steps[t];
            let row = s * width + p;
            seq.set_step(s, p, dual.rtg[t], dual.ctg[t], &step.state, step.action, step.index);
            b.mask[row] = 1.0;
            b.prefix_r[row] = hr;
            b.prefix_c[row] = hc;
            let (nr, nc) = if t + 1 < traj.len() { (dual.rtg[t + 1], dual.ctg[t + 1]) } else { (0.0, 0.0) };
            b.future_r[row] = nr;
            b.future_c[row] = nc;
            hr += step.reward;
            hc += step.cost;
            b.steps += 1;
        }
    }
    b.seq = seq;
    b
}
