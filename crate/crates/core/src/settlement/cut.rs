//! Past and future value functions of a boundary dispatch, and the linear
//! lower cut on the past one built from forward duals.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::forward::ForwardResult;
use crate::model::{
    assemble, initial_state, BuildOptions, ClearingProgram, ClearingSpec, DualMap, Edge, Horizon,
    ModelError, PeriodState, Resource,
};

const LIMIT: Duration = Duration::from_secs(60);

fn past_program(
    resources: &[Resource],
    horizon: &Horizon,
    demand: &[f64],
    t0: usize,
    boundary: &PeriodState,
) -> Result<ClearingProgram, ModelError> {
    if t0 < 2 || t0 > horizon.periods {
        return Err(ModelError::InvalidWindow { start: t0, end: t0, periods: horizon.periods });
    }
    let spec = ClearingSpec::new(
        1,
        t0 - 1,
        demand[..t0 - 1].to_vec(),
        Edge::State(initial_state(resources)),
        Edge::State(boundary.clone()),
    )
    .options(BuildOptions::pricing());
    assemble(resources, horizon, &spec)
}

/// Minimum cost of periods `1..t0` that ends able to reach `boundary` at
/// `t0`; `+inf` when no such past exists.
pub fn backward_profit(
    resources: &[Resource],
    horizon: &Horizon,
    realized_demand: &[f64],
    t0: usize,
    boundary: &PeriodState,
) -> Result<f64, ModelError> {
    let program = past_program(resources, horizon, realized_demand, t0, boundary)?;
    Ok(program.solve(LIMIT).map_or(f64::INFINITY, |o| o.objective))
}

/// Minimum cost of periods `t_star + 1..=T` starting from `boundary` at
/// `t_star`; `+inf` when infeasible.
pub fn forward_profit(
    resources: &[Resource],
    horizon: &Horizon,
    demand: &[f64],
    t_star: usize,
    boundary: &PeriodState,
) -> Result<f64, ModelError> {
    if t_star >= horizon.periods {
        return Err(ModelError::InvalidWindow { start: t_star + 1, end: horizon.periods, periods: horizon.periods });
    }
    let spec = ClearingSpec::new(
        t_star + 1,
        horizon.periods,
        demand[t_star..].to_vec(),
        Edge::State(boundary.clone()),
        Edge::Open,
    )
    .options(BuildOptions::pricing());
    Ok(assemble(resources, horizon, &spec)?.solve(LIMIT).map_or(f64::INFINITY, |o| o.objective))
}

/// Value at `boundary` of the cut built from `duals` (matched by constraint
/// name) on the past program.
pub fn cut_value(
    resources: &[Resource],
    horizon: &Horizon,
    realized_demand: &[f64],
    t0: usize,
    boundary: &PeriodState,
    duals: &DualMap,
) -> Result<f64, ModelError> {
    let program = past_program(resources, horizon, realized_demand, t0, boundary)?;
    let y: Vec<f64> = program
        .lp
        .constraints()
        .iter()
        .map(|c| duals.get(&c.name).copied().unwrap_or(0.0))
        .collect();
    Ok(program.lp.dual_objective(&y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutSample {
    pub value: f64,
    pub cut: f64,
}

impl CutSample {
    pub fn holds(&self, tol: f64) -> bool {
        self.value == f64::INFINITY || self.cut <= self.value + tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutReport {
    pub t0: usize,
    pub samples: Vec<CutSample>,
    /// Value minus cut at the forward boundary.
    pub epsilon: f64,
    pub passed: bool,
}

/// Checks `cut <= value` at every sample boundary and reports the gap at the
/// forward schedule.
pub fn lower_cut_check(
    resources: &[Resource],
    horizon: &Horizon,
    forward: &ForwardResult,
    realized_demand: &[f64],
    t0: usize,
    samples: &[PeriodState],
) -> Result<CutReport, ModelError> {
    const TOL: f64 = 1e-6;
    let duals = forward.duals();
    let at = |x: &PeriodState| -> Result<CutSample, ModelError> {
        Ok(CutSample {
            value: backward_profit(resources, horizon, realized_demand, t0, x)?,
            cut: cut_value(resources, horizon, realized_demand, t0, x, &duals)?,
        })
    };
    let samples = samples.iter().map(at).collect::<Result<Vec<_>, _>>()?;
    let own = at(forward.outcome.state(t0))?;
    let epsilon = own.value - own.cut;
    let passed = samples.iter().all(|s| s.holds(TOL)) && epsilon >= -TOL;
    Ok(CutReport { t0, samples, epsilon, passed })
}
