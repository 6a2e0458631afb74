/// A trajectory's (return, cost) in raw and min-max normalized units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectivePoint {
    pub r: f64,
    pub c: f64,
    pub r_norm: f64,
    pub c_norm: f64,
}

impl ObjectivePoint {
    /// A point that is already normalized.
    pub fn normalized(r_norm: f64, c_norm: f64) -> Self {
        Self {
            r: r_norm,
            c: c_norm,
            r_norm,
            c_norm,
        }
    }
}

/// Min-max scaling of each axis to `[0, 1]`; a constant axis maps to 0.
pub fn normalize_objectives(raw: &[(f64, f64)]) -> Vec<ObjectivePoint> {
    let bounds = |f: fn(&(f64, f64)) -> f64| {
        raw.iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
    };
    let (rlo, rhi) = bounds(|p| p.0);
    let (clo, chi) = bounds(|p| p.1);
    let scale = |x: f64, lo: f64, hi: f64| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 };
    raw.iter()
        .map(|&(r, c)| ObjectivePoint {
            r,
            c,
            r_norm: scale(r, rlo, rhi),
            c_norm: scale(c, clo, chi),
        })
        .collect()
}

/// `a` dominates `b`: no more cost, no less return, strictly better in one.
pub fn dominates(a: &ObjectivePoint, b: &ObjectivePoint) -> bool {
    a.c_norm <= b.c_norm && a.r_norm >= b.r_norm && (a.c_norm < b.c_norm || a.r_norm > b.r_norm)
}

/// Indices of non-dominated points, ascending. Exact duplicates are all kept.
///
/// Sort by cost, then sweep while tracking the best return among strictly
/// cheaper points: O(n log n).
pub fn pareto_frontier(points: &[ObjectivePoint]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .c_norm
            .total_cmp(&points[b].c_norm)
            .then(points[b].r_norm.total_cmp(&points[a].r_norm))
    });
    let mut front = Vec::new();
    let mut best_cheaper = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        let c = points[order[i]].c_norm;
        let group_max = points[order[i]].r_norm;
        let mut j = i;
        while j < order.len() && points[order[j]].c_norm == c {
            let p = &points[order[j]];
            if p.r_norm == group_max && p.r_norm > best_cheaper {
                front.push(order[j]);
            }
            j += 1;
        }
        best_cheaper = best_cheaper.max(group_max);
        i = j;
    }
    front.sort_unstable();
    front
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(points: &[ObjectivePoint]) -> Vec<usize> {
        (0..points.len())
            .filter(|&i| !points.iter().any(|q| dominates(q, &points[i])))
            .collect()
    }

    #[test]
    fn incomparable_pair_both_on_front() {
        // cheap and low-return vs. expensive and high-return
        let p = [ObjectivePoint::normalized(0.1, 0.1), ObjectivePoint::normalized(0.9, 0.9)];
        assert_eq!(pareto_frontier(&p), vec![0, 1]);
        // cheaper and higher-return dominates outright
        let p = [ObjectivePoint::normalized(0.9, 0.1), ObjectivePoint::normalized(0.1, 0.9)];
        assert_eq!(pareto_frontier(&p), vec![0]);
    }

    #[test]
    fn cheaper_equal_return_dominates() {
        let p = [ObjectivePoint::normalized(0.9, 0.1), ObjectivePoint::normalized(0.9, 0.2)];
        assert_eq!(pareto_frontier(&p), vec![0]);
    }

    #[test]
    fn duplicates_are_retained() {
        let p = [
            ObjectivePoint::normalized(0.5, 0.5),
            ObjectivePoint::normalized(0.5, 0.5),
            ObjectivePoint::normalized(0.4, 0.6),
        ];
        assert_eq!(pareto_frontier(&p), vec![0, 1]);
    }

    #[test]
    fn normalization_handles_constant_axis() {
        let pts = normalize_objectives(&[(1.0, 5.0), (3.0, 5.0), (2.0, 5.0)]);
        assert_eq!(pts.iter().map(|p| p.r_norm).collect::<Vec<_>>(), vec![0.0, 1.0, 0.5]);
        assert!(pts.iter().all(|p| p.c_norm == 0.0));
        assert_eq!(pareto_frontier(&pts), vec![1]);
    }

    proptest! {
        #[test]
        fn matches_brute_force(raw in prop::collection::vec((0u8..12, 0u8..12), 1..80)) {
            // coarse grid forces many ties and duplicates
            let pts = normalize_objectives(&raw.iter().map(|&(r, c)| (r as f64, c as f64)).collect::<Vec<_>>());
            let front = pareto_frontier(&pts);
            prop_assert_eq!(&front, &brute(&pts));
            for &a in &front {
                for &b in &front {
                    prop_assert!(!dominates(&pts[a], &pts[b]));
                }
            }
        }
    }
}
