//! Reference solvers for the static impression-allocation problem.
//!
//! Select a subset of impressions maximizing total value subject to a
//! budget cap and a single cost-per-conversion cap. [`solve_exact`] is
//! exhaustive and only meant for small instances; [`solve_greedy`] scales
//! but is a heuristic.

use crate::{Error, Result};

/// Largest instance [`solve_exact`] accepts.
pub const MAX_EXACT_ITEMS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationItem {
    pub value: f64,
    pub cost: f64,
    pub conversion: f64,
}

impl AllocationItem {
    pub fn new(value: f64, cost: f64, conversion: f64) -> Self {
        Self {
            value,
            cost,
            conversion,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationInstance {
    pub items: Vec<AllocationItem>,
    pub budget: f64,
    pub ratio_cap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub selected: Vec<bool>,
    pub value: f64,
}

impl AllocationInstance {
    pub fn new(items: Vec<AllocationItem>, budget: f64, ratio_cap: f64) -> Self {
        Self {
            items,
            budget,
            ratio_cap,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.items.is_empty() {
            return Err(Error::Config("allocation instance has no impressions".into()));
        }
        let bad = self.items.iter().any(|it| {
            !(it.value >= 0.0 && it.cost >= 0.0 && it.conversion >= 0.0)
                || !(it.value.is_finite() && it.cost.is_finite() && it.conversion.is_finite())
        });
        if bad || !(self.budget >= 0.0) || !(self.ratio_cap >= 0.0) {
            return Err(Error::Config(
                "allocation instance entries must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Both constraints, evaluated on totals accumulated in item order.
    pub fn is_feasible(&self, selected: &[bool]) -> bool {
        let (cost, conv) = self
            .items
            .iter()
            .zip(selected)
            .filter(|(_, &s)| s)
            .fold((0.0, 0.0), |(c, p), (it, _)| (c + it.cost, p + it.conversion));
        feasible(cost, conv, self.budget, self.ratio_cap)
    }

    pub fn value_of(&self, selected: &[bool]) -> f64 {
        self.items
            .iter()
            .zip(selected)
            .filter(|(_, &s)| s)
            .map(|(it, _)| it.value)
            .sum()
    }
}

#[inline]
fn feasible(cost: f64, conversions: f64, budget: f64, ratio_cap: f64) -> bool {
    cost <= budget && cost <= ratio_cap * conversions
}

/// Exhaustive search over all `2^n` selections.
///
/// Among optimal selections the lexicographically smallest bit-vector
/// (item 1 first) is returned.
pub fn solve_exact(inst: &AllocationInstance) -> Result<Allocation> {
    inst.validate()?;
    let n = inst.items.len();
    if n > MAX_EXACT_ITEMS {
        return Err(Error::InstanceTooLarge {
            n,
            max: MAX_EXACT_ITEMS,
        });
    }
    // Item i lives at bit n-1-i, so ascending masks are in lexicographic order.
    let mut best_mask = 0u32;
    let mut best_value = 0.0;
    for mask in 1u32..(1u32 << n) {
        let (mut value, mut cost, mut conv) = (0.0, 0.0, 0.0);
        for (i, it) in inst.items.iter().enumerate() {
            if mask >> (n - 1 - i) & 1 == 1 {
                value += it.value;
                cost += it.cost;
                conv += it.conversion;
            }
        }
        if value > best_value && feasible(cost, conv, inst.budget, inst.ratio_cap) {
            best_value = value;
            best_mask = mask;
        }
    }
    let selected = (0..n).map(|i| best_mask >> (n - 1 - i) & 1 == 1).collect();
    Ok(Allocation {
        selected,
        value: best_value,
    })
}

/// Value-per-cost greedy: zero-cost items first, then by descending
/// `value / cost`, adding an item only if both constraints still hold.
pub fn solve_greedy(inst: &AllocationInstance) -> Result<Allocation> {
    inst.validate()?;
    let mut order: Vec<usize> = (0..inst.items.len()).collect();
    order.sort_by(|&a, &b| {
        let (ia, ib) = (&inst.items[a], &inst.items[b]);
        match (ia.cost == 0.0, ib.cost == 0.0) {
            (true, false) => std::cmp::Ordering::Less,
            (false, true) => std::cmp::Ordering::Greater,
            (true, true) => ib.value.total_cmp(&ia.value),
            (false, false) => (ib.value / ib.cost).total_cmp(&(ia.value / ia.cost)),
        }
    });
    let mut selected = vec![false; inst.items.len()];
    let (mut cost, mut conv) = (0.0, 0.0);
    for i in order {
        let it = &inst.items[i];
        if feasible(cost + it.cost, conv + it.conversion, inst.budget, inst.ratio_cap) {
            selected[i] = true;
            cost += it.cost;
            conv += it.conversion;
        }
    }
    let value = inst.value_of(&selected);
    Ok(Allocation { selected, value })
}
