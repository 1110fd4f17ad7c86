//! Forward (day-ahead) clearing over the full horizon.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::LpStatus;
use crate::model::{
    build_full_horizon, validate_system, BuildOptions, ClearingProgram, DualMap, Horizon,
    MarketOutcome, ModelError, Resource, ResourceKind,
};
use crate::settlement::metrics::{profit_gaps, MetricsError, ProfitGap};

#[derive(Debug, Error)]
pub enum ForwardError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("forward clearing is infeasible: {0}")]
    Infeasible(String),
    #[error("forward clearing ended with status {0:?}")]
    Solver(LpStatus),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Guideline artifacts of the forward market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardResult {
    pub outcome: MarketOutcome,
    /// Forecast demand the forward market cleared against, MW.
    pub demand: Vec<f64>,
    /// Intertemporal opportunity cost of one more MWh of output, $/MWh,
    /// indexed `[period - 1][resource]`. Storage values refer to discharge.
    pub opportunity_cost: Vec<Vec<f64>>,
}

impl ForwardResult {
    pub fn lmp(&self) -> &[f64] {
        &self.outcome.lmp
    }

    pub fn duals(&self) -> DualMap {
        self.outcome.all_duals()
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// Clears the forward market with the default storage tie-break.
pub fn clear_forward(resources: &[Resource], horizon: &Horizon) -> Result<ForwardResult, ForwardError> {
    clear_forward_with(resources, horizon, BuildOptions::default(), Duration::from_secs(300))
}

pub fn clear_forward_with(
    resources: &[Resource],
    horizon: &Horizon,
    options: BuildOptions,
    time_limit: Duration,
) -> Result<ForwardResult, ForwardError> {
    validate_system(resources, horizon)?;
    let program = build_full_horizon(resources, horizon, options)?;
    let outcome = match program.solve(time_limit) {
        Ok(out) => out,
        Err(LpStatus::Infeasible) => {
            return Err(ForwardError::Infeasible(diagnose(resources, horizon, time_limit)))
        }
        Err(status) => return Err(ForwardError::Solver(status)),
    };
    let opportunity_cost = opportunity_costs(resources, horizon, &outcome);
    Ok(ForwardResult { outcome, demand: horizon.demand.clone(), opportunity_cost })
}

/// Names the constraint group that the elastic relaxation had to violate.
fn diagnose(resources: &[Resource], horizon: &Horizon, time_limit: Duration) -> String {
    let relaxed = build_full_horizon(resources, horizon, BuildOptions::pricing().elastic(1e4))
        .ok()
        .and_then(|p| p.solve(time_limit).ok());
    let Some(out) = relaxed else {
        return "no relaxation could be solved".into();
    };
    if let Some(t) = out.shed.iter().zip(&out.spill).position(|(a, b)| *a > 1e-7 || *b > 1e-7) {
        return format!("system constraint balance[{}] cannot be met", t + 1);
    }
    "resource constraint (terminal state-of-charge target) cannot be met".into()
}

fn dual(map: &DualMap, name: String) -> f64 {
    map.get(&name).copied().unwrap_or(0.0)
}

/// `-(A_t + B_{t+1})^T pi` per unit of output, divided by the period length.
fn opportunity_costs(resources: &[Resource], horizon: &Horizon, out: &MarketOutcome) -> Vec<Vec<f64>> {
    let pi = &out.intertemporal_duals;
    let dt = horizon.period_hours;
    (1..=horizon.periods)
        .map(|t| {
            resources
                .iter()
                .map(|r| match r.kind {
                    ResourceKind::Thermal => {
                        let here = dual(pi, format!("ramp_up[{}@{t}]", r.id))
                            - dual(pi, format!("ramp_down[{}@{t}]", r.id));
                        let next = dual(pi, format!("ramp_down[{}@{}]", r.id, t + 1))
                            - dual(pi, format!("ramp_up[{}@{}]", r.id, t + 1));
                        -(here + next) / dt
                    }
                    ResourceKind::Storage => {
                        -dual(pi, format!("soc_balance[{}@{t}]", r.id)) / r.store().discharge_efficiency
                    }
                })
                .collect()
        })
        .collect()
}

/// One (resource, period, direction) where the marginal identity was checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalCheck {
    pub resource: String,
    pub period: usize,
    /// "output", "discharge" or "charge"
    pub direction: String,
    pub marginal_profit: f64,
    pub opportunity_cost: f64,
}

impl MarginalCheck {
    pub fn residual(&self) -> f64 {
        (self.marginal_profit - self.opportunity_cost).abs()
    }
}

/// Marginal profit versus intertemporal opportunity cost at every
/// (resource, period) that sits strictly inside its capacity limits.
pub fn marginal_identity(
    resources: &[Resource],
    horizon: &Horizon,
    forward: &ForwardResult,
) -> Vec<MarginalCheck> {
    const TOL: f64 = 1e-6;
    let out = &forward.outcome;
    let mu = &out.resource_duals;
    let pi = &out.intertemporal_duals;
    let mut checks = Vec::new();
    for t in 1..=horizon.periods {
        let lmp = out.lmp_at(t);
        for (i, r) in resources.iter().enumerate() {
            let s = out.resource_state(t, i);
            let opp = forward.opportunity_cost[t - 1][i];
            match r.kind {
                ResourceKind::Thermal => {
                    let free = dual(mu, format!("p_max[{}@{t}]", r.id)).abs() < TOL
                        && dual(mu, format!("p_min[{}@{t}]", r.id)).abs() < TOL;
                    if free {
                        checks.push(MarginalCheck {
                            resource: r.id.clone(),
                            period: t,
                            direction: "output".into(),
                            marginal_profit: lmp - r.offer.at(t),
                            opportunity_cost: opp,
                        });
                    }
                }
                ResourceKind::Storage => {
                    let st = r.store();
                    if s.discharge > TOL && dual(mu, format!("discharge_max[{}@{t}]", r.id)).abs() < TOL {
                        checks.push(MarginalCheck {
                            resource: r.id.clone(),
                            period: t,
                            direction: "discharge".into(),
                            marginal_profit: lmp - r.offer.at(t),
                            opportunity_cost: opp,
                        });
                    }
                    if s.charge > TOL && dual(mu, format!("charge_max[{}@{t}]", r.id)).abs() < TOL {
                        let pi_t = dual(pi, format!("soc_balance[{}@{t}]", r.id));
                        checks.push(MarginalCheck {
                            resource: r.id.clone(),
                            period: t,
                            direction: "charge".into(),
                            marginal_profit: r.bid_price() - lmp,
                            opportunity_cost: st.charge_efficiency * pi_t,
                        });
                    }
                }
            }
        }
    }
    checks
}

/// Price-taking profit check of the forward result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub gaps: Vec<ProfitGap>,
    /// Largest |supply - demand| over periods, MW.
    pub balance_residual: f64,
    pub passed: bool,
}

pub fn verify_competitive_equilibrium(
    resources: &[Resource],
    horizon: &Horizon,
    forward: &ForwardResult,
) -> Result<EquilibriumReport, ForwardError> {
    verify_at_prices(resources, horizon, forward, forward.lmp())
}

/// As [`verify_competitive_equilibrium`] but at an arbitrary price path.
pub fn verify_at_prices(
    resources: &[Resource],
    horizon: &Horizon,
    forward: &ForwardResult,
    prices: &[f64],
) -> Result<EquilibriumReport, ForwardError> {
    let out = &forward.outcome;
    let gaps = profit_gaps(resources, horizon, prices, &out.schedule, Duration::from_secs(60))?;
    let balance_residual = (1..=horizon.periods)
        .map(|t| {
            let supply: f64 = out.state(t).iter().map(|s| s.output).sum();
            (supply - forward.demand[t - 1]).abs()
        })
        .fold(0.0, f64::max);
    let passed = balance_residual <= 1e-6
        && gaps.iter().all(|g| g.gap.abs() <= 1e-6 * (1.0 + g.max_profit.abs()));
    Ok(EquilibriumReport { gaps, balance_residual, passed })
}

/// |primal objective - dual objective| of the forward program evaluated at
/// the extracted duals.
pub fn dual_objective_gap(
    resources: &[Resource],
    horizon: &Horizon,
    forward: &ForwardResult,
) -> Result<f64, ForwardError> {
    let program: ClearingProgram = build_full_horizon(resources, horizon, BuildOptions::pricing())?;
    let all = forward.duals();
    let y: Vec<f64> = program
        .lp
        .constraints()
        .iter()
        .map(|c| all.get(&c.name).copied().unwrap_or(0.0))
        .collect();
    let dual_value = program.lp.dual_objective(&y);
    Ok((forward.outcome.objective - dual_value).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_single_unit_has_no_intertemporal_prices() {
        let rs = vec![Resource::thermal("g", 25.0, 0.0, 100.0)];
        let h = Horizon::new(vec![30.0; 4]);
        let f = clear_forward(&rs, &h).unwrap();
        assert!(f.outcome.intertemporal_duals.is_empty());
        assert!(f.lmp().iter().all(|p| (p - 25.0).abs() < 1e-9));
        assert!(verify_competitive_equilibrium(&rs, &h, &f).unwrap().passed);
    }

    #[test]
    fn ramp_limited_unit_carries_opportunity_cost() {
        let rs = vec![
            Resource::thermal("base", 10.0, 0.0, 100.0).with_ramps(10.0, 10.0, 20.0),
            Resource::thermal("peak", 50.0, 0.0, 100.0),
        ];
        let h = Horizon::new(vec![20.0, 40.0, 40.0]);
        let f = clear_forward(&rs, &h).unwrap();
        // base ramps 20 -> 30 -> 40, peak covers the rest at t2.
        assert!((f.outcome.state(2)[0].output - 30.0).abs() < 1e-9);
        assert!((f.lmp()[1] - 50.0).abs() < 1e-9);
        for c in marginal_identity(&rs, &h, &f) {
            assert!(c.residual() < 1e-6, "{c:?}");
        }
        assert!(dual_objective_gap(&rs, &h, &f).unwrap() < 1e-6);
        let rep = verify_competitive_equilibrium(&rs, &h, &f).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn zero_everything_is_an_equilibrium() {
        let rs = vec![Resource::thermal("g", 0.0, 0.0, 10.0)];
        let h = Horizon::new(vec![0.0; 3]);
        let f = clear_forward(&rs, &h).unwrap();
        let rep = verify_at_prices(&rs, &h, &f, &[0.0; 3]).unwrap();
        assert!(rep.passed);
    }

    #[test]
    fn infeasible_target_is_named() {
        let rs = vec![
            Resource::thermal("g", 10.0, 0.0, 10.0),
            Resource::storage("s", 9.0, 5.0, 1.0, 12.0, 0.0).with_target(12.0),
        ];
        let h = Horizon::new(vec![5.0, 5.0]);
        let err = clear_forward(&rs, &h).unwrap_err().to_string();
        assert!(err.contains("target"), "{err}");
    }

    #[test]
    fn json_round_trip() {
        let rs = vec![Resource::thermal("g", 25.0, 0.0, 100.0)];
        let h = Horizon::new(vec![30.0; 2]);
        let f = clear_forward(&rs, &h).unwrap();
        let back = ForwardResult::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(back.lmp(), f.lmp());
    }
}
