use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{offered_cost, PeriodState, Resource, ResourceState};

/// Constraint duals keyed by constraint name.
pub type DualMap = BTreeMap<String, f64>;

/// Schedules, prices and duals from one solved clearing program over
/// periods `start..=end`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MarketOutcome {
    pub start: usize,
    pub end: usize,
    /// One entry per period, each ordered like the resource list.
    pub schedule: Vec<PeriodState>,
    /// $/MWh
    pub lmp: Vec<f64>,
    /// Unserved load, MW (elastic programs only).
    pub shed: Vec<f64>,
    /// Surplus generation, MW (elastic programs only).
    pub spill: Vec<f64>,
    /// Optimal value of the program as built, including any adjustment terms.
    pub objective: f64,
    /// Ramp and SOC recursion duals (pi).
    pub intertemporal_duals: DualMap,
    /// Energy balance duals (lambda).
    pub system_duals: DualMap,
    /// Capacity, SOC limit and terminal target duals (mu).
    pub resource_duals: DualMap,
    pub solve_time: Duration,
}

impl MarketOutcome {
    pub fn state(&self, t: usize) -> &PeriodState {
        &self.schedule[t - self.start]
    }

    pub fn resource_state(&self, t: usize, resource: usize) -> &ResourceState {
        &self.schedule[t - self.start][resource]
    }

    pub fn lmp_at(&self, t: usize) -> f64 {
        self.lmp[t - self.start]
    }

    pub fn periods(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }

    /// Net output series of one resource, MW.
    pub fn net_output(&self, resource: usize) -> Vec<f64> {
        self.schedule.iter().map(|s| s[resource].output).collect()
    }

    pub fn soc(&self, resource: usize) -> Vec<f64> {
        self.schedule.iter().map(|s| s[resource].soc).collect()
    }

    /// Offered production cost of the schedule, $.
    pub fn production_cost(&self, resources: &[Resource], period_hours: f64) -> f64 {
        self.periods()
            .map(|t| {
                resources
                    .iter()
                    .zip(self.state(t))
                    .map(|(r, s)| offered_cost(r, s, t, period_hours))
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn total_shed(&self) -> f64 {
        self.shed.iter().sum()
    }

    /// Every dual of the program, keyed by constraint name.
    pub fn all_duals(&self) -> DualMap {
        let mut all = self.intertemporal_duals.clone();
        all.extend(self.system_duals.iter().map(|(k, v)| (k.clone(), *v)));
        all.extend(self.resource_duals.iter().map(|(k, v)| (k.clone(), *v)));
        all
    }

    /// Largest per-period schedule difference against another outcome over
    /// the periods both cover.
    pub fn max_schedule_diff(&self, other: &MarketOutcome) -> f64 {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        (lo..=hi)
            .flat_map(|t| self.state(t).iter().zip(other.state(t)).map(|(a, b)| a.max_abs_diff(b)))
            .fold(0.0, f64::max)
    }
}
