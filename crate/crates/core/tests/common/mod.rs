#![allow(dead_code)]

use market_core::model::{Horizon, Resource};

pub const PERFECT: [f64; 8] = [24.0, 46.0, 70.0, 83.0, 98.0, 60.0, 77.0, 102.0];
pub const IMPERFECT: [f64; 8] = [25.8, 42.9, 64.0, 83.0, 91.6, 56.3, 72.8, 111.1];

pub fn case_a() -> (Vec<Resource>, Horizon) {
    (
        vec![
            Resource::thermal("gen1", 10.0, 0.0, 40.0),
            Resource::thermal("gen2", 63.0, 0.0, 40.0),
            Resource::thermal("gen3", 100.0, 0.0, 30.0),
            Resource::storage("esr", 9.0, 5.0, 15.0, 12.0, 6.0),
        ],
        Horizon::new(PERFECT.to_vec()),
    )
}

/// Cheapest way for the three generators to cover `residual` MW, by merit
/// order; `None` when it is outside [0, 110].
fn merit_cost(residual: f64) -> Option<f64> {
    if !(-1e-9..=110.0 + 1e-9).contains(&residual) {
        return None;
    }
    let mut left = residual.max(0.0);
    let mut cost = 0.0;
    for (price, cap) in [(10.0, 40.0), (63.0, 40.0), (100.0, 30.0)] {
        let take = left.min(cap);
        cost += price * take;
        left -= take;
    }
    Some(cost)
}

/// Minimum Case A cost over every storage plan on a 1 MWh grid
/// (dynamic programming over SOC levels 0..=12), with the plan attaining it.
pub fn grid_oracle(demand: &[f64]) -> (f64, Vec<i32>) {
    const LEVELS: usize = 13;
    let mut best = vec![f64::INFINITY; LEVELS];
    best[6] = 0.0;
    let mut choice: Vec<Vec<(usize, i32)>> = Vec::new();
    for &d in demand {
        let mut next = vec![f64::INFINITY; LEVELS];
        let mut from = vec![(0usize, 0i32); LEVELS];
        for (soc, &base) in best.iter().enumerate() {
            if !base.is_finite() {
                continue;
            }
            for net in -15i32..=15 {
                let after = soc as i32 - net;
                if !(0..LEVELS as i32).contains(&after) {
                    continue;
                }
                let Some(gen) = merit_cost(d - net as f64) else { continue };
                let esr = if net > 0 { 9.0 * net as f64 } else { 5.0 * net as f64 };
                let total = base + gen + esr;
                if total < next[after as usize] - 1e-9 {
                    next[after as usize] = total;
                    from[after as usize] = (soc, net);
                }
            }
        }
        best = next;
        choice.push(from);
    }
    let (mut soc, cost) = best
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (s, &c)| if c < acc.1 { (s, c) } else { acc });
    let mut plan = vec![0; demand.len()];
    for t in (0..demand.len()).rev() {
        let (prev, net) = choice[t][soc];
        plan[t] = net;
        soc = prev;
    }
    (cost, plan)
}

/// Marginal cost of demand at period `t` (0-based) by central differences of
/// the grid oracle; returns (left, right) one-sided values.
pub fn grid_marginal(demand: &[f64], t: usize) -> (f64, f64) {
    let at = |delta: f64| {
        let mut d = demand.to_vec();
        d[t] += delta;
        grid_oracle(&d).0
    };
    let mid = at(0.0);
    (mid - at(-1.0), at(1.0) - mid)
}
