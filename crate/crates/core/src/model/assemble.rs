//! The single assembler behind every clearing program.
//!
//! Rows are generated per period from a resource-local description in which
//! each term names a (variable kind, absolute period) pair. Terms inside the
//! assembled range become LP columns; terms outside it are resolved by the
//! [`Edge`] at that side: substituted with a known state, priced with a dual
//! from a previous solve, or dropped.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lp::{self, ConstraintTag, LinearProgram, LpSolution, LpStatus, Sense};

use super::outcome::{DualMap, MarketOutcome};
use super::{
    check_capacity, initial_state, Horizon, ModelError, PeriodState, Resource, ResourceKind,
    ResourceState, Window,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    Output,
    Charge,
    Discharge,
    Soc,
}

impl VarKind {
    const ALL: [VarKind; 4] = [VarKind::Output, VarKind::Charge, VarKind::Discharge, VarKind::Soc];

    fn prefix(self) -> &'static str {
        match self {
            VarKind::Output => "p",
            VarKind::Charge => "ch",
            VarKind::Discharge => "dis",
            VarKind::Soc => "soc",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }

    /// Coefficient of the variable in the energy balance.
    fn injection(self) -> f64 {
        match self {
            VarKind::Output | VarKind::Discharge => 1.0,
            VarKind::Charge => -1.0,
            VarKind::Soc => 0.0,
        }
    }
}

/// How rows that cross one side of the assembled range are treated.
#[derive(Debug, Clone, PartialEq)]
pub enum Edge {
    /// Substitute a known dispatch of the neighbouring period as constants.
    State(PeriodState),
    /// Drop the crossing rows and charge their in-range terms at `-dual * coeff`.
    Priced(DualMap),
    /// Drop the crossing rows.
    Open,
}

/// What closes each period: a demand to meet, or an exogenous price at which
/// every included resource sells and buys.
/// Deterministic offset in [0, 0.5) of a tie-break weight.
fn jitter(resource: usize, period: usize, side: u64) -> f64 {
    let seed = ((resource as u64) << 33) ^ ((period as u64) << 1) ^ side;
    0.5 * ChaCha8Rng::seed_from_u64(seed).random::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Market {
    Demand(Vec<f64>),
    Prices(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    /// Prefer later storage discharge and earlier charge among cost-equal
    /// schedules (lexicographic, never changes the optimal cost or duals).
    /// Weights carry a fixed per-(resource, period) offset below 0.5 so that
    /// swaps between storage units are not ties either.
    pub tie_break: bool,
    /// Adds shed/spill slacks on the energy balance and on relaxable boundary
    /// rows, priced at this value of load ($/MWh).
    pub elastic: Option<f64>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { tie_break: true, elastic: None }
    }
}

impl BuildOptions {
    pub fn pricing() -> Self {
        Self { tie_break: false, elastic: None }
    }

    pub fn elastic(self, value_of_load: f64) -> Self {
        Self { elastic: Some(value_of_load), ..self }
    }
}

#[derive(Debug, Clone)]
pub struct ClearingSpec {
    pub start: usize,
    pub end: usize,
    pub market: Market,
    pub left: Edge,
    pub right: Edge,
    /// Enforce storage terminal targets when the range ends at the horizon.
    pub include_target: bool,
    /// Restrict to these resource indices (all when `None`).
    pub resources: Option<Vec<usize>>,
    /// Pins the first `fixed.len()` periods of the range at these dispatches.
    pub fixed: Vec<PeriodState>,
    pub options: BuildOptions,
}

impl ClearingSpec {
    pub fn new(start: usize, end: usize, demand: Vec<f64>, left: Edge, right: Edge) -> Self {
        Self {
            start,
            end,
            market: Market::Demand(demand),
            left,
            right,
            include_target: true,
            resources: None,
            fixed: Vec::new(),
            options: BuildOptions::default(),
        }
    }

    pub fn options(mut self, options: BuildOptions) -> Self {
        self.options = options;
        self
    }
}

struct Term {
    kind: VarKind,
    period: usize,
    coeff: f64,
}

struct RowSpec {
    name: String,
    terms: Vec<Term>,
    sense: Sense,
    rhs: f64,
}

/// Rows linking period `t - 1` to `t` for one resource.
fn linking_rows(r: &Resource, t: usize, dt: f64) -> Vec<RowSpec> {
    let mut rows = Vec::new();
    match r.kind {
        ResourceKind::Thermal => {
            let term = |period, coeff| Term { kind: VarKind::Output, period, coeff };
            if let Some(up) = r.ramp_up {
                rows.push(RowSpec {
                    name: format!("ramp_up[{}@{t}]", r.id),
                    terms: vec![term(t, 1.0), term(t - 1, -1.0)],
                    sense: Sense::Le,
                    rhs: up,
                });
            }
            if let Some(down) = r.ramp_down {
                rows.push(RowSpec {
                    name: format!("ramp_down[{}@{t}]", r.id),
                    terms: vec![term(t - 1, 1.0), term(t, -1.0)],
                    sense: Sense::Le,
                    rhs: down,
                });
            }
        }
        ResourceKind::Storage => {
            let s = r.store();
            rows.push(RowSpec {
                name: format!("soc_balance[{}@{t}]", r.id),
                terms: vec![
                    Term { kind: VarKind::Soc, period: t, coeff: 1.0 },
                    Term { kind: VarKind::Soc, period: t - 1, coeff: -1.0 },
                    Term { kind: VarKind::Charge, period: t, coeff: -s.charge_efficiency * dt },
                    Term { kind: VarKind::Discharge, period: t, coeff: dt / s.discharge_efficiency },
                ],
                sense: Sense::Eq,
                rhs: 0.0,
            });
        }
    }
    rows
}

fn kinds(r: &Resource) -> &'static [VarKind] {
    match r.kind {
        ResourceKind::Thermal => &[VarKind::Output],
        ResourceKind::Storage => &[VarKind::Charge, VarKind::Discharge, VarKind::Soc],
    }
}

fn var_cost(r: &Resource, kind: VarKind, t: usize, dt: f64) -> f64 {
    match kind {
        VarKind::Output | VarKind::Discharge => r.offer.at(t) * dt,
        VarKind::Charge => -r.bid_price() * dt,
        VarKind::Soc => 0.0,
    }
}

/// An assembled program together with the bookkeeping needed to read a
/// [`MarketOutcome`] back out of its solution.
#[derive(Debug, Clone)]
pub struct ClearingProgram {
    pub lp: LinearProgram,
    pub start: usize,
    pub end: usize,
    pub period_hours: f64,
    /// Objective terms added for priced edges, as (column, coefficient).
    pub adjustments: Vec<(usize, f64)>,
    /// `[period offset][resource][kind slot]`
    vars: Vec<Vec<[Option<usize>; 4]>>,
    balance: Vec<Option<usize>>,
    shed: Vec<Option<(usize, usize)>>,
    prices: Option<Vec<f64>>,
}

impl ClearingProgram {
    pub fn var(&self, t: usize, resource: usize, kind: VarKind) -> Option<usize> {
        if t < self.start || t > self.end {
            return None;
        }
        self.vars[t - self.start][resource][kind.slot()]
    }

    pub fn balance_row(&self, t: usize) -> Option<usize> {
        self.balance.get(t.checked_sub(self.start)?).copied().flatten()
    }

    /// Solves the program and reads the outcome; non-optimal statuses are
    /// returned as the error.
    pub fn solve(&self, time_limit: Duration) -> Result<MarketOutcome, LpStatus> {
        let started = Instant::now();
        let sol = lp::solve(&self.lp, time_limit);
        if !sol.is_optimal() {
            return Err(sol.status);
        }
        let mut out = self.extract(&sol);
        out.solve_time = started.elapsed();
        Ok(out)
    }

    /// Column vector for a given window dispatch (for evaluating objectives).
    pub fn point(&self, schedule: &[PeriodState]) -> Vec<f64> {
        let mut x = vec![0.0; self.lp.num_variables()];
        for (k, per) in self.vars.iter().enumerate() {
            for (i, slots) in per.iter().enumerate() {
                for kind in VarKind::ALL {
                    if let Some(j) = slots[kind.slot()] {
                        x[j] = schedule[k][i].value(kind);
                    }
                }
            }
        }
        x
    }

    pub fn extract(&self, sol: &LpSolution) -> MarketOutcome {
        let mut schedule = Vec::with_capacity(self.vars.len());
        for per in &self.vars {
            let states: PeriodState = per
                .iter()
                .map(|slots| {
                    let v = |kind: VarKind| slots[kind.slot()].map_or(0.0, |j| sol.primal[j]);
                    if slots[VarKind::Output.slot()].is_some() {
                        ResourceState::thermal(v(VarKind::Output))
                    } else {
                        ResourceState::storage(v(VarKind::Charge), v(VarKind::Discharge), v(VarKind::Soc))
                    }
                })
                .collect();
            schedule.push(states);
        }
        let lmp = match &self.prices {
            Some(p) => p.clone(),
            None => self
                .balance
                .iter()
                .map(|row| row.map_or(f64::NAN, |i| sol.duals[i] / self.period_hours))
                .collect(),
        };
        let shed = self.shed.iter().map(|s| s.map_or(0.0, |(a, _)| sol.primal[a])).collect();
        let spill = self.shed.iter().map(|s| s.map_or(0.0, |(_, b)| sol.primal[b])).collect();
        let mut out = MarketOutcome {
            start: self.start,
            end: self.end,
            schedule,
            lmp,
            shed,
            spill,
            objective: sol.objective,
            solve_time: sol.wall_time,
            ..MarketOutcome::default()
        };
        for (con, &y) in self.lp.constraints().iter().zip(&sol.duals) {
            let map = match con.tag {
                ConstraintTag::Intertemporal => &mut out.intertemporal_duals,
                ConstraintTag::System => &mut out.system_duals,
                ConstraintTag::Resource | ConstraintTag::Boundary => &mut out.resource_duals,
            };
            map.insert(con.name.clone(), y);
        }
        out
    }
}

/// Assembles the clearing program for periods `spec.start..=spec.end`.
pub fn assemble(
    resources: &[Resource],
    horizon: &Horizon,
    spec: &ClearingSpec,
) -> Result<ClearingProgram, ModelError> {
    let (start, end, periods) = (spec.start, spec.end, horizon.periods);
    if start < 1 || start > end || end > periods {
        return Err(ModelError::InvalidWindow { start, end, periods });
    }
    let len = end - start + 1;
    let dt = horizon.period_hours;
    let n = resources.len();
    let (demand, prices) = match &spec.market {
        Market::Demand(d) => (Some(d), None),
        Market::Prices(p) => (None, Some(p)),
    };
    let series_len = demand.map_or_else(|| prices.map_or(0, |p| p.len()), |d| d.len());
    if series_len != len {
        return Err(ModelError::InvalidHorizon(format!(
            "{series_len} market values for a {len}-period range"
        )));
    }
    for edge in [&spec.left, &spec.right] {
        if let Edge::State(s) = edge {
            if s.len() != n {
                return Err(ModelError::BoundaryShape { got: s.len(), expected: n });
            }
        }
    }
    if spec.fixed.len() > len {
        return Err(ModelError::BoundaryShape { got: spec.fixed.len(), expected: len });
    }
    let included: Vec<bool> = match &spec.resources {
        Some(ids) => (0..n).map(|i| ids.contains(&i)).collect(),
        None => vec![true; n],
    };

    let mut lp = LinearProgram::new();
    let mut vars = vec![vec![[None; 4]; n]; len];
    let mut secondary = Vec::new();

    for k in 0..len {
        let t = start + k;
        let price = prices.map(|p| p[k]);
        for (i, r) in resources.iter().enumerate() {
            if !included[i] {
                continue;
            }
            for &kind in kinds(r) {
                let (mut lo, mut hi) = match kind {
                    VarKind::Output => (f64::NEG_INFINITY, f64::INFINITY),
                    _ => (0.0, f64::INFINITY),
                };
                if let Some(f) = spec.fixed.get(k) {
                    lo = f[i].value(kind);
                    hi = lo;
                }
                let mut cost = var_cost(r, kind, t, dt);
                if let Some(p) = price {
                    cost -= p * dt * kind.injection();
                }
                let j = lp.add_variable(format!("{}[{}@{t}]", kind.prefix(), r.id), lo, hi, cost)?;
                vars[k][i][kind.slot()] = Some(j);
                if spec.options.tie_break && r.is_storage() {
                    match kind {
                        VarKind::Discharge => secondary.push((j, (periods - t + 1) as f64 + jitter(i, t, 0))),
                        VarKind::Charge => secondary.push((j, t as f64 + jitter(i, t, 1))),
                        _ => {}
                    }
                }
            }
        }
    }

    let mut shed = vec![None; len];
    if let (Some(voll), Some(_)) = (spec.options.elastic, demand) {
        for (k, slot) in shed.iter_mut().enumerate() {
            let t = start + k;
            let a = lp.add_variable(format!("shed[{t}]"), 0.0, f64::INFINITY, voll * dt)?;
            let b = lp.add_variable(format!("spill[{t}]"), 0.0, f64::INFINITY, voll * dt)?;
            *slot = Some((a, b));
        }
    }

    let mut balance = vec![None; len];
    if let Some(demand) = demand {
        for k in 0..len {
            let t = start + k;
            let mut coeffs = Vec::new();
            for (i, r) in resources.iter().enumerate() {
                if !included[i] {
                    continue;
                }
                for &kind in kinds(r) {
                    let a = kind.injection();
                    if a != 0.0 {
                        coeffs.push((vars[k][i][kind.slot()].unwrap(), a));
                    }
                }
            }
            if let Some((a, b)) = shed[k] {
                coeffs.push((a, 1.0));
                coeffs.push((b, -1.0));
            }
            balance[k] = Some(lp.add_constraint(
                format!("balance[{t}]"),
                ConstraintTag::System,
                coeffs,
                Sense::Eq,
                demand[k],
            )?);
        }
    }

    let mut adjustments = Vec::new();
    let left = &spec.left;
    let right = if end == periods { Edge::Open } else { spec.right.clone() };

    for (i, r) in resources.iter().enumerate() {
        if !included[i] {
            continue;
        }
        // Linking rows: t = start uses the left edge, t = end + 1 the right.
        for t in start..=(end + 1).min(periods) {
            let edge = if t == start {
                Some(left)
            } else if t == end + 1 {
                Some(&right)
            } else {
                None
            };
            for row in linking_rows(r, t, dt) {
                let relaxable = t == end + 1;
                match edge {
                    Some(Edge::Open) => continue,
                    Some(Edge::Priced(duals)) => {
                        let pi = *duals
                            .get(&row.name)
                            .ok_or_else(|| ModelError::MissingDual(row.name.clone()))?;
                        for term in &row.terms {
                            if (start..=end).contains(&term.period) {
                                let j = vars[term.period - start][i][term.kind.slot()].unwrap();
                                lp.add_cost(j, -pi * term.coeff);
                                adjustments.push((j, -pi * term.coeff));
                            }
                        }
                        continue;
                    }
                    _ => {}
                }
                let mut coeffs = Vec::new();
                let mut rhs = row.rhs;
                for term in &row.terms {
                    if (start..=end).contains(&term.period) {
                        coeffs.push((vars[term.period - start][i][term.kind.slot()].unwrap(), term.coeff));
                    } else {
                        let value = match edge {
                            Some(Edge::State(s)) => s[i].value(term.kind),
                            _ => unreachable!("outside terms only occur at an edge"),
                        };
                        rhs -= term.coeff * value;
                    }
                }
                let rhs = if rhs.abs() < 1e-12 { 0.0 } else { rhs };
                if relaxable {
                    if let Some(voll) = spec.options.elastic {
                        add_violation_pair(&mut lp, &row.name, &mut coeffs, voll * dt)?;
                    }
                }
                lp.add_constraint(row.name, ConstraintTag::Intertemporal, coeffs, row.sense, rhs)?;
            }
        }

        // Per-period resource rows.
        for k in 0..len {
            let t = start + k;
            let v = |kind: VarKind| vars[k][i][kind.slot()].unwrap();
            let mut row = |name: String, j: usize, sense, rhs| {
                lp.add_constraint(name, ConstraintTag::Resource, vec![(j, 1.0)], sense, rhs)
            };
            match r.kind {
                ResourceKind::Thermal => {
                    row(format!("p_max[{}@{t}]", r.id), v(VarKind::Output), Sense::Le, r.eco_max)?;
                    row(format!("p_min[{}@{t}]", r.id), v(VarKind::Output), Sense::Ge, r.eco_min)?;
                }
                ResourceKind::Storage => {
                    let s = r.store();
                    row(format!("charge_max[{}@{t}]", r.id), v(VarKind::Charge), Sense::Le, -r.eco_min)?;
                    row(format!("discharge_max[{}@{t}]", r.id), v(VarKind::Discharge), Sense::Le, r.eco_max)?;
                    row(format!("soc_max[{}@{t}]", r.id), v(VarKind::Soc), Sense::Le, s.soc_max)?;
                }
            }
        }
        if let (true, true, Some(target)) = (
            spec.include_target,
            end == periods,
            r.storage.as_ref().and_then(|s| s.soc_target),
        ) {
            let name = format!("soc_target[{}]", r.id);
            let mut coeffs = vec![(vars[len - 1][i][VarKind::Soc.slot()].unwrap(), 1.0)];
            if let Some(voll) = spec.options.elastic {
                add_violation_pair(&mut lp, &name, &mut coeffs, voll * dt)?;
            }
            lp.add_constraint(name, ConstraintTag::Resource, coeffs, Sense::Eq, target)?;
        }
    }

    if !secondary.is_empty() {
        lp.set_secondary_objective(secondary);
    }

    Ok(ClearingProgram {
        lp,
        start,
        end,
        period_hours: dt,
        adjustments,
        vars,
        balance,
        shed,
        prices: prices.cloned(),
    })
}

fn add_violation_pair(
    lp: &mut LinearProgram,
    row: &str,
    coeffs: &mut Vec<(usize, f64)>,
    cost: f64,
) -> Result<(), ModelError> {
    let up = lp.add_variable(format!("viol_up[{row}]"), 0.0, f64::INFINITY, cost)?;
    let down = lp.add_variable(format!("viol_down[{row}]"), 0.0, f64::INFINITY, cost)?;
    coeffs.push((up, 1.0));
    coeffs.push((down, -1.0));
    Ok(())
}

/// Full-horizon clearing against `horizon.demand` from initial conditions.
pub fn build_full_horizon(
    resources: &[Resource],
    horizon: &Horizon,
    options: BuildOptions,
) -> Result<ClearingProgram, ModelError> {
    if options.elastic.is_none() {
        check_capacity(resources, &horizon.demand, horizon.period_hours, 1)?;
    }
    let spec = ClearingSpec::new(
        1,
        horizon.periods,
        horizon.demand.clone(),
        Edge::State(initial_state(resources)),
        Edge::Open,
    )
    .options(options);
    assemble(resources, horizon, &spec)
}

/// Real-time scheduling program for one window: realized state on the left,
/// guideline dispatch of the following period on the right.
pub fn build_sp(
    resources: &[Resource],
    horizon: &Horizon,
    window: &Window,
    past_dispatch: &PeriodState,
    future_anchor: Option<&PeriodState>,
    window_demand: &[f64],
    options: BuildOptions,
) -> Result<ClearingProgram, ModelError> {
    let right = match (window.has_future_boundary, future_anchor) {
        (true, Some(a)) => Edge::State(a.clone()),
        (true, None) => {
            return Err(ModelError::BoundaryShape { got: 0, expected: resources.len() })
        }
        (false, _) => Edge::Open,
    };
    let spec = ClearingSpec::new(
        window.start,
        window.end,
        window_demand.to_vec(),
        Edge::State(past_dispatch.clone()),
        right,
    )
    .options(options);
    assemble(resources, horizon, &spec)
}

/// Real-time pricing program for one window: boundary linking rows replaced
/// by offer adjustments from the guideline duals.
pub fn build_pp(
    resources: &[Resource],
    horizon: &Horizon,
    window: &Window,
    guideline_duals: &DualMap,
    window_demand: &[f64],
    options: BuildOptions,
) -> Result<ClearingProgram, ModelError> {
    let spec = ClearingSpec::new(
        window.start,
        window.end,
        window_demand.to_vec(),
        Edge::Priced(guideline_duals.clone()),
        if window.has_future_boundary { Edge::Priced(guideline_duals.clone()) } else { Edge::Open },
    )
    .options(options);
    assemble(resources, horizon, &spec)
}

/// The offer adjustments a pricing program would apply, keyed by column name.
pub fn pp_adjustments(
    resources: &[Resource],
    horizon: &Horizon,
    window: &Window,
    guideline_duals: &DualMap,
) -> Result<Vec<(String, f64)>, ModelError> {
    let demand = horizon.demand[window.start - 1..window.end].to_vec();
    let pp = build_pp(resources, horizon, window, guideline_duals, &demand, BuildOptions::pricing())?;
    Ok(pp
        .adjustments
        .iter()
        .map(|&(j, a)| (pp.lp.variables()[j].name.clone(), a))
        .collect())
}

/// Profit maximisation of one resource over the whole horizon at fixed prices
/// ($/MWh per period), posed as a minimisation of negative profit.
pub fn build_profit_max(
    resources: &[Resource],
    horizon: &Horizon,
    resource: usize,
    prices: &[f64],
) -> Result<ClearingProgram, ModelError> {
    let spec = ClearingSpec {
        market: Market::Prices(prices.to_vec()),
        resources: Some(vec![resource]),
        ..ClearingSpec::new(
            1,
            horizon.periods,
            Vec::new(),
            Edge::State(initial_state(resources)),
            Edge::Open,
        )
    }
    .options(BuildOptions::pricing());
    assemble(resources, horizon, &spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Resource;

    fn case_a() -> (Vec<Resource>, Horizon) {
        (
            vec![
                Resource::thermal("gen1", 10.0, 0.0, 40.0),
                Resource::thermal("gen2", 63.0, 0.0, 40.0),
                Resource::thermal("gen3", 100.0, 0.0, 30.0),
                Resource::storage("esr", 9.0, 5.0, 15.0, 12.0, 6.0),
            ],
            Horizon::new(vec![24.0, 46.0, 70.0, 83.0, 98.0, 60.0, 77.0, 102.0]),
        )
    }

    fn count(lp: &LinearProgram, prefix: &str) -> usize {
        lp.constraints().iter().filter(|c| c.name.starts_with(prefix)).count()
    }

    #[test]
    fn full_horizon_block_structure() {
        let (rs, h) = case_a();
        let prog = build_full_horizon(&rs, &h, BuildOptions::default()).unwrap();
        let lp = &prog.lp;
        assert_eq!(count(lp, "balance["), 8);
        assert_eq!(count(lp, "soc_balance["), 8);
        assert_eq!(count(lp, "soc_max["), 8);
        let power = count(lp, "p_max[") + count(lp, "p_min[") + count(lp, "charge_max[")
            + count(lp, "discharge_max[");
        assert_eq!(power, 4 * 8 * 2);
        for c in lp.constraints() {
            let periods: std::collections::BTreeSet<&str> = c
                .coeffs
                .iter()
                .map(|&(j, _)| {
                    let name = &lp.variables()[j].name;
                    &name[name.find('@').unwrap()..]
                })
                .collect();
            let coupling = periods.len() > 1
                || (c.tag == ConstraintTag::Intertemporal && c.name.ends_with("@1]"));
            assert_eq!(coupling, c.tag == ConstraintTag::Intertemporal, "{}", c.name);
        }
    }

    #[test]
    fn single_generator_clears_at_offer() {
        let rs = vec![Resource::thermal("g", 17.0, 0.0, 40.0)];
        let h = Horizon::new(vec![10.0]);
        let out = build_full_horizon(&rs, &h, BuildOptions::default())
            .unwrap()
            .solve(Duration::from_secs(5))
            .unwrap();
        assert!((out.schedule[0][0].output - 10.0).abs() < 1e-9);
        assert!((out.lmp[0] - 17.0).abs() < 1e-9);
    }

    #[test]
    fn sp_over_full_horizon_equals_full_program() {
        let (rs, h) = case_a();
        let full = build_full_horizon(&rs, &h, BuildOptions::default()).unwrap();
        let w = Window::full(h.periods);
        let sp = build_sp(&rs, &h, &w, &initial_state(&rs), None, &h.demand, BuildOptions::default())
            .unwrap();
        assert_eq!(full.lp.constraints(), sp.lp.constraints());
        assert_eq!(full.lp.variables(), sp.lp.variables());
        assert_eq!(full.lp.objective(), sp.lp.objective());
    }

    #[test]
    fn pricing_program_requires_boundary_duals() {
        let (rs, h) = case_a();
        let w = Window::new(4, 6, 8).unwrap();
        let err = build_pp(&rs, &h, &w, &DualMap::new(), &h.demand[3..6], BuildOptions::pricing())
            .unwrap_err();
        assert_eq!(err, ModelError::MissingDual("soc_balance[esr@4]".into()));
    }

    #[test]
    fn pricing_program_drops_edge_rows() {
        let (rs, h) = case_a();
        let w = Window::new(4, 6, 8).unwrap();
        let mut duals = DualMap::new();
        duals.insert("soc_balance[esr@4]".into(), -37.0);
        duals.insert("soc_balance[esr@7]".into(), -63.0);
        let pp = build_pp(&rs, &h, &w, &duals, &h.demand[3..6], BuildOptions::pricing()).unwrap();
        let names: Vec<&str> = pp
            .lp
            .constraints()
            .iter()
            .filter(|c| c.tag == ConstraintTag::Intertemporal)
            .map(|c| c.name.as_str())
            .collect();
        assert_eq!(names, ["soc_balance[esr@5]", "soc_balance[esr@6]"]);
        let adj = pp_adjustments(&rs, &h, &w, &duals).unwrap();
        let get = |n: &str| adj.iter().filter(|(m, _)| m == n).map(|(_, a)| a).sum::<f64>();
        // Left edge: -pi * coefficient of the period-4 terms.
        assert_eq!(get("soc[esr@4]"), 37.0);
        assert_eq!(get("ch[esr@4]"), -37.0);
        assert_eq!(get("dis[esr@4]"), 37.0);
        // Right edge: only the period-6 SOC term of the period-7 row.
        assert_eq!(get("soc[esr@6]"), -63.0);
        assert_eq!(get("dis[esr@6]"), 0.0);
    }

    #[test]
    fn anchored_window_substitutes_constants() {
        let (rs, h) = case_a();
        let w = Window::new(1, 3, 8).unwrap();
        let mut anchor = initial_state(&rs);
        anchor[3] = ResourceState::storage(0.0, 0.0, 12.0);
        let sp = build_sp(&rs, &h, &w, &initial_state(&rs), Some(&anchor), &h.demand[..3], BuildOptions::default())
            .unwrap();
        let edge = sp.lp.constraint("soc_balance[esr@4]").unwrap();
        assert_eq!(edge.coeffs.len(), 1);
        assert_eq!(edge.rhs, -12.0);
        let first = sp.lp.constraint("soc_balance[esr@1]").unwrap();
        assert_eq!(first.rhs, 6.0);
    }

    #[test]
    fn elastic_program_sheds_unservable_load() {
        let rs = vec![Resource::thermal("g", 10.0, 0.0, 5.0)];
        let h = Horizon::new(vec![8.0]);
        assert!(build_full_horizon(&rs, &h, BuildOptions::default()).is_err());
        let out = build_full_horizon(&rs, &h, BuildOptions::default().elastic(1000.0))
            .unwrap()
            .solve(Duration::from_secs(5))
            .unwrap();
        assert!((out.shed[0] - 3.0).abs() < 1e-9);
        assert!((out.lmp[0] - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn profit_max_follows_price() {
        let rs = vec![Resource::thermal("g", 10.0, 0.0, 5.0)];
        let h = Horizon::new(vec![0.0, 0.0]);
        let out = build_profit_max(&rs, &h, 0, &[12.0, 8.0])
            .unwrap()
            .solve(Duration::from_secs(5))
            .unwrap();
        assert_eq!(out.schedule[0][0].output, 5.0);
        assert_eq!(out.schedule[1][0].output, 0.0);
        assert!((out.objective + 10.0).abs() < 1e-9);
    }
}
