//! Surplus decomposition, lost opportunity cost and violation counts.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{settle, SettlementLedger, LOAD};
use crate::forward::ForwardResult;
use crate::lp::LpStatus;
use crate::model::{build_profit_max, offered_cost, Horizon, ModelError, PeriodState, Resource, ResourceKind};
use crate::realtime::RtTrace;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("profit maximisation for `{0}` ended with status {1:?}")]
    ProfitMax(String, LpStatus),
}

/// Best achievable versus achieved profit of one resource at given prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitGap {
    pub resource: String,
    pub max_profit: f64,
    pub achieved: f64,
    /// `max_profit - achieved`; negative only when the achieved dispatch
    /// is outside the resource's own feasible set (a missed target).
    pub gap: f64,
}

/// Profit of one resource's dispatch at `prices`, $.
pub fn achieved_profit(
    resource: &Resource,
    index: usize,
    dispatch: &[PeriodState],
    prices: &[f64],
    period_hours: f64,
) -> f64 {
    dispatch
        .iter()
        .zip(prices)
        .enumerate()
        .map(|(k, (s, p))| p * s[index].output * period_hours - offered_cost(resource, &s[index], k + 1, period_hours))
        .sum()
}

pub fn profit_gaps(
    resources: &[Resource],
    horizon: &Horizon,
    prices: &[f64],
    dispatch: &[PeriodState],
    time_limit: Duration,
) -> Result<Vec<ProfitGap>, MetricsError> {
    resources
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let best = build_profit_max(resources, horizon, i, prices)?
                .solve(time_limit)
                .map_err(|s| MetricsError::ProfitMax(r.id.clone(), s))?;
            let max_profit = -best.objective;
            let achieved = achieved_profit(r, i, dispatch, prices, horizon.period_hours);
            Ok(ProfitGap { resource: r.id.clone(), max_profit, achieved, gap: max_profit - achieved })
        })
        .collect()
}

/// Lost opportunity cost per resource at the settled price path, clamped at
/// zero.
pub fn compute_loc(
    resources: &[Resource],
    horizon: &Horizon,
    prices: &[f64],
    dispatch: &[PeriodState],
) -> Result<Vec<f64>, MetricsError> {
    Ok(profit_gaps(resources, horizon, prices, dispatch, Duration::from_secs(60))?
        .into_iter()
        .map(|g| g.gap.max(0.0))
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Surpluses {
    pub ps: f64,
    pub cs: f64,
    pub esrs: f64,
    pub ss: f64,
}

/// MWh by which storage ends away from its terminal target.
pub fn target_shortfall(resources: &[Resource], realized: &[PeriodState]) -> f64 {
    let Some(last) = realized.last() else { return 0.0 };
    resources
        .iter()
        .zip(last)
        .filter_map(|(r, s)| r.storage.as_ref()?.soc_target.map(|target| (s.soc - target).abs()))
        .sum()
}

/// Producer, consumer and storage surplus. A missed storage target is
/// charged to storage at the value of load.
pub fn compute_surpluses(
    ledger: &SettlementLedger,
    resources: &[Resource],
    horizon: &Horizon,
    realized: &[PeriodState],
    served: &[f64],
    value_of_load: f64,
) -> Surpluses {
    let dt = horizon.period_hours;
    let mut out = Surpluses::default();
    for (i, r) in resources.iter().enumerate() {
        let cost: f64 = realized.iter().enumerate().map(|(k, s)| offered_cost(r, &s[i], k + 1, dt)).sum();
        let surplus = ledger.total_cashflow(&r.id) - cost;
        match r.kind {
            ResourceKind::Thermal => out.ps += surplus,
            ResourceKind::Storage => out.esrs += surplus,
        }
    }
    out.esrs -= value_of_load * target_shortfall(resources, realized);
    out.cs = value_of_load * served.iter().sum::<f64>() * dt + ledger.total_cashflow(LOAD);
    out.ss = out.ps + out.cs + out.esrs;
    out
}

/// Efficiency and incentive metrics of one scheme run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub surpluses: Surpluses,
    /// $ per resource id.
    pub loc: BTreeMap<String, f64>,
    pub total_loc: f64,
    pub storage_loc: f64,
    pub violations: usize,
    pub target_missed: bool,
    /// MWh
    pub shed: f64,
    pub production_cost: f64,
    pub reoptimizations: usize,
    pub pricing_times: Vec<Duration>,
    pub scheduling_times: Vec<Duration>,
}

impl MetricsReport {
    pub fn mean_pricing_time(&self) -> Duration {
        mean(&self.pricing_times)
    }

    pub fn mean_scheduling_time(&self) -> Duration {
        mean(&self.scheduling_times)
    }
}

fn mean(d: &[Duration]) -> Duration {
    if d.is_empty() {
        return Duration::ZERO;
    }
    d.iter().sum::<Duration>() / d.len() as u32
}

pub fn metrics_report(
    resources: &[Resource],
    horizon: &Horizon,
    forward: &ForwardResult,
    trace: &RtTrace,
    value_of_load: f64,
) -> Result<MetricsReport, MetricsError> {
    let ledger = settle(resources, horizon, forward, Some(trace));
    let surpluses = compute_surpluses(&ledger, resources, horizon, &trace.realized, &trace.served, value_of_load);
    let loc_values = compute_loc(resources, horizon, &trace.lmp, &trace.realized)?;
    let loc: BTreeMap<String, f64> = resources.iter().map(|r| r.id.clone()).zip(loc_values.iter().copied()).collect();
    let storage_loc = resources.iter().zip(&loc_values).filter(|(r, _)| r.is_storage()).map(|(_, v)| v).sum();
    Ok(MetricsReport {
        surpluses,
        total_loc: loc_values.iter().sum(),
        storage_loc,
        loc,
        violations: trace.violations.len(),
        target_missed: trace.target_missed(),
        shed: trace
            .violations
            .iter()
            .filter(|v| v.kind == crate::realtime::ViolationKind::Shed)
            .map(|v| v.amount * horizon.period_hours)
            .sum(),
        production_cost: trace.realized_cost(resources, horizon.period_hours),
        reoptimizations: trace.reoptimizations,
        pricing_times: trace.windows.iter().map(|w| w.pricing_time).collect(),
        scheduling_times: trace.windows.iter().map(|w| w.scheduling_time).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::clear_forward;
    use crate::realtime::{run_rolling, RtConfig};

    #[test]
    fn always_in_the_money_unit_has_no_loc() {
        let rs = vec![Resource::thermal("g", 10.0, 0.0, 5.0)];
        let h = Horizon::new(vec![5.0; 3]);
        let dispatch: Vec<PeriodState> = (0..3).map(|_| vec![crate::model::ResourceState::thermal(5.0)]).collect();
        let loc = compute_loc(&rs, &h, &[50.0; 3], &dispatch).unwrap();
        assert_eq!(loc, vec![0.0]);
        let loc = compute_loc(&rs, &h, &[50.0, 5.0, 50.0], &dispatch).unwrap();
        assert!((loc[0] - 25.0).abs() < 1e-9);
    }

    #[test]
    fn zero_demand_has_zero_surplus() {
        let rs = vec![Resource::thermal("g", 10.0, 0.0, 5.0)];
        let h = Horizon::new(vec![0.0; 2]);
        let f = clear_forward(&rs, &h).unwrap();
        let trace = run_rolling(&rs, &h, &f, &h.demand, &RtConfig { window: 1, ..RtConfig::default() }).unwrap();
        let rep = metrics_report(&rs, &h, &f, &trace, 1000.0).unwrap();
        assert_eq!(rep.surpluses, Surpluses::default());
    }

    #[test]
    fn social_surplus_is_value_minus_cost() {
        let rs = vec![
            Resource::thermal("a", 10.0, 0.0, 30.0),
            Resource::thermal("b", 40.0, 0.0, 50.0),
            Resource::storage("s", 25.0, 15.0, 10.0, 20.0, 10.0).with_target(10.0),
        ];
        let h = Horizon::new(vec![20.0, 45.0, 35.0, 60.0]);
        let f = clear_forward(&rs, &h).unwrap();
        let realized = vec![22.0, 49.0, 33.0, 64.0];
        let trace = run_rolling(&rs, &h, &f, &realized, &RtConfig { window: 2, ..RtConfig::default() }).unwrap();
        let rep = metrics_report(&rs, &h, &f, &trace, 1000.0).unwrap();
        let served: f64 = trace.served.iter().sum();
        let s = rep.surpluses;
        assert!((s.ss - (1000.0 * served - rep.production_cost)).abs() < 1e-6);
        assert!((s.ss - (s.ps + s.cs + s.esrs)).abs() < 1e-9);
    }
}
