//! Rolling-horizon real-time market guided by a forward result.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::forward::ForwardResult;
use crate::lp::LpStatus;
use crate::model::{
    assemble, build_pp, build_sp, initial_state, BuildOptions, ClearingProgram, ClearingSpec,
    DualMap, Edge, Horizon, MarketOutcome, ModelError, PeriodState, Resource, Window,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RtConfig {
    /// Window length W, periods.
    pub window: usize,
    pub stride: usize,
    /// Relative L-infinity deviation of window demand from the guideline
    /// forecast above which the remaining horizon is re-optimised.
    pub delta: f64,
    pub reoptimize: bool,
    #[serde(with = "secs")]
    pub time_limit: Duration,
    /// $/MWh, prices the slack of elastic fallbacks.
    pub value_of_load: f64,
}

impl Default for RtConfig {
    fn default() -> Self {
        Self {
            window: 3,
            stride: 1,
            delta: 0.05,
            reoptimize: true,
            time_limit: Duration::from_secs(300),
            value_of_load: 1000.0,
        }
    }
}

impl RtConfig {
    pub fn blocks(window: usize) -> Self {
        Self { window, stride: window, ..Self::default() }
    }

    pub fn validate(&self, periods: usize) -> Result<(), ModelError> {
        let ok = 1 <= self.stride && self.stride <= self.window && self.window <= periods;
        if !ok {
            return Err(ModelError::InvalidHorizon(format!(
                "need 1 <= stride ({}) <= window ({}) <= periods ({periods})",
                self.stride, self.window
            )));
        }
        if !(self.delta >= 0.0) {
            return Err(ModelError::InvalidHorizon("delta must be non-negative".into()));
        }
        Ok(())
    }
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Shed,
    Spill,
    SocTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub period: usize,
    pub kind: ViolationKind,
    /// Resource id for target misses.
    pub resource: Option<String>,
    /// MW, or MWh for targets.
    pub amount: f64,
}

/// One market run in the rolling sequence. `schedule` and `prices` cover the
/// priced periods `window.start ..`, which may be fewer than the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub window: Window,
    pub schedule: Vec<PeriodState>,
    pub prices: Vec<f64>,
    /// Load served in each priced period, MW.
    pub served: Vec<f64>,
    pub past_state: PeriodState,
    pub anchor: Option<PeriodState>,
    pub reoptimized: bool,
    /// An elastic fallback was needed.
    pub elastic: bool,
    pub deviation: f64,
    pub scheduling_time: Duration,
    pub pricing_time: Duration,
}

/// Realized results of a rolling run, plus the per-window records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtTrace {
    pub windows: Vec<WindowRecord>,
    /// Committed dispatch `[period - 1][resource]`.
    pub realized: Vec<PeriodState>,
    /// First-settled price of every period, $/MWh.
    pub lmp: Vec<f64>,
    pub served: Vec<f64>,
    pub violations: Vec<Violation>,
    pub reoptimizations: usize,
}

impl RtTrace {
    pub fn new() -> Self {
        Self {
            windows: Vec::new(),
            realized: Vec::new(),
            lmp: Vec::new(),
            served: Vec::new(),
            violations: Vec::new(),
            reoptimizations: 0,
        }
    }

    /// Adds a record and commits its first `commit` periods as realized.
    pub fn push(&mut self, record: WindowRecord, commit: usize) {
        for k in 0..commit {
            self.realized.push(record.schedule[k].clone());
            self.lmp.push(record.prices[k]);
            self.served.push(record.served[k]);
        }
        self.windows.push(record);
    }

    /// Records shed/spill in committed periods and terminal target misses.
    pub fn finish(&mut self, resources: &[Resource], demand: &[f64]) {
        for (k, (&served, &d)) in self.served.iter().zip(demand).enumerate() {
            if served < d - 1e-6 {
                self.violations.push(Violation { period: k + 1, kind: ViolationKind::Shed, resource: None, amount: d - served });
            } else if served > d + 1e-6 {
                self.violations.push(Violation { period: k + 1, kind: ViolationKind::Spill, resource: None, amount: served - d });
            }
        }
        let last = self.realized.len();
        if last == 0 {
            return;
        }
        for (i, r) in resources.iter().enumerate() {
            if let Some(target) = r.storage.as_ref().and_then(|s| s.soc_target) {
                let soc = self.realized[last - 1][i].soc;
                if (soc - target).abs() > 1e-6 {
                    self.violations.push(Violation {
                        period: last,
                        kind: ViolationKind::SocTarget,
                        resource: Some(r.id.clone()),
                        amount: soc - target,
                    });
                }
            }
        }
    }

    pub fn target_missed(&self) -> bool {
        self.violations.iter().any(|v| v.kind == ViolationKind::SocTarget)
    }

    pub fn realized_cost(&self, resources: &[Resource], period_hours: f64) -> f64 {
        self.realized
            .iter()
            .enumerate()
            .map(|(k, s)| {
                resources.iter().zip(s).map(|(r, x)| crate::model::offered_cost(r, x, k + 1, period_hours)).sum::<f64>()
            })
            .sum()
    }

    pub fn pricing_times(&self) -> impl Iterator<Item = Duration> + '_ {
        self.windows.iter().map(|w| w.pricing_time)
    }
}

impl Default for RtTrace {
    fn default() -> Self {
        Self::new()
    }
}

/// The schedules, duals and forecast the real-time market is following.
#[derive(Debug, Clone)]
pub struct Guideline {
    pub schedule: Vec<PeriodState>,
    pub duals: DualMap,
    pub demand: Vec<f64>,
}

impl Guideline {
    pub fn from_forward(forward: &ForwardResult) -> Self {
        Self {
            schedule: forward.outcome.schedule.clone(),
            duals: forward.duals(),
            demand: forward.demand.clone(),
        }
    }

    fn deviation(&self, window: &Window, realized: &[f64]) -> f64 {
        window
            .periods()
            .map(|t| {
                let g = self.demand[t - 1];
                (realized[t - 1] - g).abs() / g.abs().max(1e-9)
            })
            .fold(0.0, f64::max)
    }
}

/// Solves `program`, falling back to `elastic` when it is infeasible.
/// Returns the outcome and whether the fallback was used.
pub(crate) fn solve_or_relax(
    program: Result<ClearingProgram, ModelError>,
    elastic: impl FnOnce() -> Result<ClearingProgram, ModelError>,
    time_limit: Duration,
) -> Result<(MarketOutcome, bool), ModelError> {
    match program?.solve(time_limit) {
        Ok(out) => Ok((out, false)),
        Err(LpStatus::Infeasible | LpStatus::TimeLimit) => {
            let relaxed = elastic()?.solve(time_limit).map_err(|status| {
                ModelError::InvalidHorizon(format!("elastic fallback ended with status {status:?}"))
            })?;
            Ok((relaxed, true))
        }
        Err(status) => {
            Err(ModelError::InvalidHorizon(format!("clearing ended with status {status:?}")))
        }
    }
}

pub(crate) fn served(out: &MarketOutcome, demand: &[f64]) -> Vec<f64> {
    demand
        .iter()
        .enumerate()
        .map(|(k, d)| d - out.shed.get(k).copied().unwrap_or(0.0) + out.spill.get(k).copied().unwrap_or(0.0))
        .collect()
}

/// Re-solves `start..=T` from `state` against window demand followed by the
/// guideline forecast, and installs the result as the new guideline.
fn reoptimize(
    resources: &[Resource],
    horizon: &Horizon,
    guideline: &mut Guideline,
    start: usize,
    window_end: usize,
    state: &PeriodState,
    realized_demand: &[f64],
    config: &RtConfig,
) -> Result<bool, ModelError> {
    let periods = horizon.periods;
    let mut demand = guideline.demand.clone();
    demand[start - 1..window_end].copy_from_slice(&realized_demand[start - 1..window_end]);
    let spec = |options| {
        ClearingSpec::new(start, periods, demand[start - 1..].to_vec(), Edge::State(state.clone()), Edge::Open)
            .options(options)
    };
    let (out, relaxed) = solve_or_relax(
        assemble(resources, horizon, &spec(BuildOptions::default())),
        || assemble(resources, horizon, &spec(BuildOptions::default().elastic(config.value_of_load))),
        config.time_limit,
    )?;
    for t in start..=periods {
        guideline.schedule[t - 1] = out.state(t).clone();
    }
    guideline.duals.extend(out.all_duals());
    guideline.demand = demand;
    Ok(relaxed)
}

/// Runs the coordinated real-time market over the whole horizon.
pub fn run_rolling(
    resources: &[Resource],
    horizon: &Horizon,
    forward: &ForwardResult,
    realized_demand: &[f64],
    config: &RtConfig,
) -> Result<RtTrace, ModelError> {
    config.validate(horizon.periods)?;
    if realized_demand.len() != horizon.periods {
        return Err(ModelError::InvalidHorizon(format!(
            "{} realized demand values for {} periods",
            realized_demand.len(),
            horizon.periods
        )));
    }
    let periods = horizon.periods;
    let mut guideline = Guideline::from_forward(forward);
    let mut trace = RtTrace::new();
    let mut state = initial_state(resources);
    let mut t0 = 1;
    while t0 <= periods {
        let window = Window::starting_at(t0, config.window, periods)?;
        let demand = &realized_demand[window.start - 1..window.end];
        let deviation = guideline.deviation(&window, realized_demand);
        let mut reoptimized = false;
        let mut elastic = false;
        if config.reoptimize && deviation > config.delta {
            elastic |= reoptimize(resources, horizon, &mut guideline, t0, window.end, &state, realized_demand, config)?;
            reoptimized = true;
        }

        let anchor = window.has_future_boundary.then(|| guideline.schedule[window.end].clone());
        let sp = |options| build_sp(resources, horizon, &window, &state, anchor.as_ref(), demand, options);
        let mut scheduled = sp(BuildOptions::default())?.solve(config.time_limit);
        if scheduled.is_err() && config.reoptimize && !reoptimized {
            elastic |= reoptimize(resources, horizon, &mut guideline, t0, window.end, &state, realized_demand, config)?;
            reoptimized = true;
            let anchor = window.has_future_boundary.then(|| guideline.schedule[window.end].clone());
            scheduled = build_sp(resources, horizon, &window, &state, anchor.as_ref(), demand, BuildOptions::default())?
                .solve(config.time_limit);
        }
        let anchor = window.has_future_boundary.then(|| guideline.schedule[window.end].clone());
        let sched = match scheduled {
            Ok(out) => out,
            Err(_) => {
                elastic = true;
                build_sp(resources, horizon, &window, &state, anchor.as_ref(), demand, BuildOptions::default().elastic(config.value_of_load))?
                    .solve(config.time_limit)
                    .map_err(|s| ModelError::InvalidHorizon(format!("elastic scheduling ended with status {s:?}")))?
            }
        };

        let (priced, pp_relaxed) = solve_or_relax(
            build_pp(resources, horizon, &window, &guideline.duals, demand, BuildOptions::pricing()),
            || build_pp(resources, horizon, &window, &guideline.duals, demand, BuildOptions::pricing().elastic(config.value_of_load)),
            config.time_limit,
        )?;
        elastic |= pp_relaxed;

        let commit = config.stride.min(window.len());
        let record = WindowRecord {
            window,
            served: served(&sched, demand),
            schedule: sched.schedule.clone(),
            prices: priced.lmp.clone(),
            past_state: state.clone(),
            anchor,
            reoptimized,
            elastic,
            deviation,
            scheduling_time: sched.solve_time,
            pricing_time: priced.solve_time,
        };
        state = record.schedule[commit - 1].clone();
        trace.reoptimizations += reoptimized as usize;
        trace.push(record, commit);
        t0 += commit;
    }
    trace.finish(resources, realized_demand);
    Ok(trace)
}

/// Full-horizon clearing against realized demand: the efficiency benchmark.
pub fn perfect_information_run(
    resources: &[Resource],
    horizon: &Horizon,
    realized_demand: &[f64],
) -> Result<MarketOutcome, crate::forward::ForwardError> {
    let realized = horizon.with_demand(realized_demand.to_vec());
    crate::forward::clear_forward(resources, &realized).map(|f| f.outcome)
}

/// For every window, whether the guideline schedule after the window is
/// still reachable from the window's scheduled end state.
pub fn future_feasibility(
    resources: &[Resource],
    horizon: &Horizon,
    forward: &ForwardResult,
    trace: &RtTrace,
) -> Result<Vec<(usize, bool)>, ModelError> {
    let periods = horizon.periods;
    let mut out = Vec::new();
    for rec in &trace.windows {
        let end = rec.window.start + rec.schedule.len() - 1;
        if end >= periods {
            continue;
        }
        let spec = ClearingSpec {
            fixed: forward.outcome.schedule[end..].to_vec(),
            ..ClearingSpec::new(
                end + 1,
                periods,
                forward.demand[end..].to_vec(),
                Edge::State(rec.schedule.last().unwrap().clone()),
                Edge::Open,
            )
        }
        .options(BuildOptions::pricing());
        let feasible = assemble(resources, horizon, &spec)?.solve(Duration::from_secs(60)).is_ok();
        out.push((end, feasible));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::clear_forward;

    fn merit_system() -> (Vec<Resource>, Horizon) {
        (
            vec![Resource::thermal("a", 10.0, 0.0, 30.0), Resource::thermal("b", 40.0, 0.0, 50.0)],
            Horizon::new(vec![20.0, 45.0, 35.0, 60.0]),
        )
    }

    #[test]
    fn single_period_horizon_is_one_window() {
        let rs = vec![Resource::thermal("a", 10.0, 0.0, 30.0)];
        let h = Horizon::new(vec![12.0]);
        let f = clear_forward(&rs, &h).unwrap();
        let cfg = RtConfig { window: 1, ..RtConfig::default() };
        let trace = run_rolling(&rs, &h, &f, &[12.0], &cfg).unwrap();
        assert_eq!(trace.windows.len(), 1);
        assert_eq!(trace.lmp, vec![10.0]);
        assert_eq!(trace.realized[0][0].output, 12.0);
    }

    #[test]
    fn uncoupled_system_prices_at_marginal_offer() {
        let (rs, h) = merit_system();
        let f = clear_forward(&rs, &h).unwrap();
        let trace = run_rolling(&rs, &h, &f, &h.demand, &RtConfig { window: 2, ..RtConfig::default() }).unwrap();
        assert_eq!(trace.lmp, vec![10.0, 40.0, 40.0, 40.0]);
        assert!(trace.violations.is_empty());
        assert_eq!(trace.reoptimizations, 0);
    }

    #[test]
    fn overload_is_shed_not_fatal() {
        let (rs, h) = merit_system();
        let f = clear_forward(&rs, &h).unwrap();
        let realized = vec![20.0, 45.0, 95.0, 60.0];
        let trace = run_rolling(&rs, &h, &f, &realized, &RtConfig { window: 2, ..RtConfig::default() }).unwrap();
        assert_eq!(trace.violations.len(), 1);
        assert_eq!(trace.violations[0].kind, ViolationKind::Shed);
        assert!((trace.violations[0].amount - 15.0).abs() < 1e-9);
        assert!((trace.lmp[2] - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn config_bounds() {
        assert!(RtConfig { window: 3, stride: 4, ..RtConfig::default() }.validate(8).is_err());
        assert!(RtConfig { window: 9, ..RtConfig::default() }.validate(8).is_err());
        assert!(RtConfig::blocks(3).validate(8).is_ok());
        let json = serde_json::to_string(&RtConfig::default()).unwrap();
        let back: RtConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, RtConfig::default());
    }
}
