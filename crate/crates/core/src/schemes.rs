//! Comparison pricing schemes behind one interface.
//!
//! Every scheme walks the horizon period by period from realized state and
//! produces an [`RtTrace`]. Apart from `Proposed`, each settles only the
//! first period of the problem it solves; later periods are advisory.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::forward::ForwardResult;
use crate::model::{
    assemble, initial_state, BuildOptions, ClearingSpec, Edge, Horizon, MarketOutcome, ModelError,
    PeriodState, Resource, Window,
};
use crate::realtime::{run_rolling, served, solve_or_relax, RtConfig, RtTrace, WindowRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeId {
    Myopic,
    FirstOnly,
    Proposed,
    Hogan,
    Hua,
}

impl SchemeId {
    pub const ALL: [SchemeId; 5] =
        [SchemeId::Myopic, SchemeId::FirstOnly, SchemeId::Proposed, SchemeId::Hogan, SchemeId::Hua];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::Myopic => "myopic",
            SchemeId::FirstOnly => "first_only",
            SchemeId::Proposed => "proposed",
            SchemeId::Hogan => "hogan",
            SchemeId::Hua => "hua",
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.as_str() == s.replace('-', "_"))
            .ok_or_else(|| format!("unknown scheme `{s}` (expected one of myopic, first_only, proposed, hogan, hua)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub rt: RtConfig,
    /// Hogan pricing pins past periods at their realized dispatch instead of
    /// letting them re-optimise.
    pub hogan_fix_past: bool,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self { rt: RtConfig { window: 2, ..RtConfig::default() }, hogan_fix_past: false }
    }
}

/// Demand seen at period `t`: realized inside the lookahead window, the
/// forward forecast beyond it, realized for the past.
fn lookahead_demand(forecast: &[f64], realized: &[f64], t: usize, window: usize) -> Vec<f64> {
    let seen = (t + window - 1).min(forecast.len());
    realized[..seen].iter().chain(&forecast[seen..]).copied().collect()
}

struct Step {
    schedule: MarketOutcome,
    schedule_elastic: bool,
    price: f64,
    pricing_time: Duration,
    price_elastic: bool,
}

fn clear(
    resources: &[Resource],
    horizon: &Horizon,
    spec: ClearingSpec,
    value_of_load: f64,
    time_limit: Duration,
) -> Result<(MarketOutcome, bool), ModelError> {
    let base = spec.options;
    let relaxed = spec.clone().options(base.elastic(value_of_load));
    solve_or_relax(
        assemble(resources, horizon, &spec),
        || assemble(resources, horizon, &relaxed),
        time_limit,
    )
}

/// Runs `scheme` over the horizon against `realized_demand`.
pub fn run_scheme(
    scheme: SchemeId,
    resources: &[Resource],
    horizon: &Horizon,
    forward: &ForwardResult,
    realized_demand: &[f64],
    config: &SchemeConfig,
) -> Result<RtTrace, ModelError> {
    let rt = &config.rt;
    if scheme == SchemeId::Proposed {
        return run_rolling(resources, horizon, forward, realized_demand, rt);
    }
    rt.validate(horizon.periods)?;
    let periods = horizon.periods;
    let forecast = &forward.demand;
    let (voll, limit) = (rt.value_of_load, rt.time_limit);
    let mut trace = RtTrace::new();
    let mut state = initial_state(resources);
    for t in 1..=periods {
        let step = match scheme {
            SchemeId::Myopic => {
                let spec = ClearingSpec {
                    include_target: false,
                    ..ClearingSpec::new(t, t, vec![realized_demand[t - 1]], Edge::State(state.clone()), Edge::Open)
                };
                let (out, elastic) = clear(resources, horizon, spec, voll, limit)?;
                Step { price: out.lmp[0], pricing_time: out.solve_time, price_elastic: elastic, schedule_elastic: elastic, schedule: out }
            }
            SchemeId::FirstOnly => {
                let end = (t + rt.window - 1).min(periods);
                let spec = ClearingSpec::new(t, end, realized_demand[t - 1..end].to_vec(), Edge::State(state.clone()), Edge::Open);
                let (out, elastic) = clear(resources, horizon, spec, voll, limit)?;
                Step { price: out.lmp[0], pricing_time: out.solve_time, price_elastic: elastic, schedule_elastic: elastic, schedule: out }
            }
            SchemeId::Hua | SchemeId::Hogan => {
                let demand = lookahead_demand(forecast, realized_demand, t, rt.window);
                let spec = ClearingSpec::new(t, periods, demand[t - 1..].to_vec(), Edge::State(state.clone()), Edge::Open);
                let (out, elastic) = clear(resources, horizon, spec, voll, limit)?;
                if scheme == SchemeId::Hua {
                    Step { price: out.lmp[0], pricing_time: out.solve_time, price_elastic: elastic, schedule_elastic: elastic, schedule: out }
                } else {
                    let (price, pricing_time, price_elastic) =
                        hogan_price(resources, horizon, &trace.realized, &demand, t, config)?;
                    Step { price, pricing_time, price_elastic, schedule_elastic: elastic, schedule: out }
                }
            }
            SchemeId::Proposed => unreachable!(),
        };
        let first: PeriodState = step.schedule.state(t).clone();
        let record = WindowRecord {
            window: Window::starting_at(t, rt.window, periods)?,
            schedule: vec![first.clone()],
            prices: vec![step.price],
            served: served(&step.schedule, &realized_demand[t - 1..t]),
            past_state: state.clone(),
            anchor: None,
            reoptimized: false,
            elastic: step.schedule_elastic || step.price_elastic,
            deviation: 0.0,
            scheduling_time: step.schedule.solve_time,
            pricing_time: step.pricing_time,
        };
        trace.push(record, 1);
        state = first;
    }
    trace.finish(resources, realized_demand);
    Ok(trace)
}

/// Full-horizon re-pricing at period `t`; returns the period-`t` price.
fn hogan_price(
    resources: &[Resource],
    horizon: &Horizon,
    past: &[PeriodState],
    demand: &[f64],
    t: usize,
    config: &SchemeConfig,
) -> Result<(f64, Duration, bool), ModelError> {
    let mut spec = ClearingSpec::new(
        1,
        horizon.periods,
        demand.to_vec(),
        Edge::State(initial_state(resources)),
        Edge::Open,
    )
    .options(BuildOptions::pricing());
    if config.hogan_fix_past {
        spec.fixed = past.to_vec();
    }
    let (out, elastic) = clear(resources, horizon, spec, config.rt.value_of_load, config.rt.time_limit)?;
    Ok((out.lmp_at(t), out.solve_time, elastic))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::clear_forward;

    #[test]
    fn scheme_names_round_trip() {
        for id in SchemeId::ALL {
            assert_eq!(id.as_str().parse::<SchemeId>().unwrap(), id);
        }
        assert_eq!("first-only".parse::<SchemeId>().unwrap(), SchemeId::FirstOnly);
        assert!("greedy".parse::<SchemeId>().is_err());
    }

    #[test]
    fn lookahead_mixes_realized_and_forecast() {
        let d = lookahead_demand(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 40.0], 2, 2);
        assert_eq!(d, vec![10.0, 20.0, 30.0, 4.0]);
        let d = lookahead_demand(&[1.0, 2.0], &[10.0, 20.0], 2, 3);
        assert_eq!(d, vec![10.0, 20.0]);
    }

    #[test]
    fn zero_demand_dispatches_nothing() {
        let rs = vec![Resource::thermal("g", 5.0, 0.0, 10.0)];
        let h = Horizon::new(vec![0.0; 3]);
        let f = clear_forward(&rs, &h).unwrap();
        let trace = run_scheme(SchemeId::Myopic, &rs, &h, &f, &h.demand, &SchemeConfig::default()).unwrap();
        assert!(trace.realized.iter().all(|s| s[0].output == 0.0));
    }

    #[test]
    fn first_only_with_unit_window_is_myopic_without_targets() {
        let rs = vec![
            Resource::thermal("a", 10.0, 0.0, 40.0).with_ramps(15.0, 15.0, 10.0),
            Resource::thermal("b", 60.0, 0.0, 40.0),
            Resource::storage("s", 30.0, 20.0, 10.0, 20.0, 10.0),
        ];
        let h = Horizon::new(vec![20.0, 50.0, 30.0, 60.0]);
        let f = clear_forward(&rs, &h).unwrap();
        let cfg = SchemeConfig { rt: RtConfig { window: 1, ..RtConfig::default() }, ..SchemeConfig::default() };
        let a = run_scheme(SchemeId::Myopic, &rs, &h, &f, &h.demand, &cfg).unwrap();
        let b = run_scheme(SchemeId::FirstOnly, &rs, &h, &f, &h.demand, &cfg).unwrap();
        assert_eq!(a.lmp, b.lmp);
        assert_eq!(a.realized, b.realized);
    }

    #[test]
    fn hua_and_hogan_agree_at_the_first_period() {
        let rs = vec![
            Resource::thermal("a", 10.0, 0.0, 40.0).with_ramps(15.0, 15.0, 10.0),
            Resource::thermal("b", 60.0, 0.0, 40.0),
            Resource::storage("s", 30.0, 20.0, 10.0, 20.0, 10.0).with_target(10.0),
        ];
        let h = Horizon::new(vec![20.0, 50.0, 30.0, 60.0]);
        let f = clear_forward(&rs, &h).unwrap();
        let cfg = SchemeConfig::default();
        let hua = run_scheme(SchemeId::Hua, &rs, &h, &f, &h.demand, &cfg).unwrap();
        let hogan = run_scheme(SchemeId::Hogan, &rs, &h, &f, &h.demand, &cfg).unwrap();
        assert!((hua.lmp[0] - hogan.lmp[0]).abs() < 1e-9);
        assert!((hogan.lmp[0] - f.lmp()[0]).abs() < 1e-9);
        assert_eq!(hua.realized, hogan.realized);
    }
}
