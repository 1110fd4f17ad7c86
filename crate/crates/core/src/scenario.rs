//! Scenario files, realized-demand generation and synthetic test systems.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{validate_system, Horizon, ModelError, Price, Resource};
use crate::realtime::RtConfig;
use crate::schemes::SchemeId;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {reason}")]
    Schema { path: String, reason: String },
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    Version(u32),
}

fn schema(path: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Schema { path: path.into(), reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawMode {
    /// One factor per period.
    PerPeriod,
    /// One factor per realization, applied to every period.
    PerScenario,
}

/// Uniform multiplicative deviations `forecast * U[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub seed: u64,
    #[serde(default = "per_period")]
    pub mode: DrawMode,
}

fn per_period() -> DrawMode {
    DrawMode::PerPeriod
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Realization {
    /// Realized demand series given verbatim, one per realization.
    Explicit { series: Vec<Vec<f64>> },
    Generator(GeneratorSpec),
}

/// Expected outcomes checked by an experiment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Golden {
    /// Forward LMP, $/MWh.
    pub forward_lmp: Option<Vec<f64>>,
    /// Net forward schedule of one resource.
    pub forward_schedule: Option<GoldenSchedule>,
    /// Proposed real-time prices equal the forward prices.
    pub rt_prices_match_forward: bool,
    /// Proposed real-time dispatch equals the forward schedule.
    pub rt_dispatch_matches_forward: bool,
    /// Proposed real-time dispatch equals the perfect-information dispatch.
    pub rt_dispatch_matches_perfect_information: bool,
    /// Cross-scheme orderings of surplus, LOC and violations.
    pub scheme_orderings: bool,
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldenSchedule {
    pub resource: String,
    pub net_output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub resources: Vec<Resource>,
    pub horizon: Horizon,
    pub realization: Realization,
    #[serde(default)]
    pub rt: RtConfig,
    /// Window lengths to sweep; defaults to `rt.window`.
    #[serde(default)]
    pub windows: Vec<usize>,
    #[serde(default = "all_schemes")]
    pub schemes: Vec<SchemeId>,
    #[serde(default = "default_value_of_load")]
    pub value_of_load: f64,
    #[serde(default)]
    pub hogan_fix_past: bool,
    #[serde(default)]
    pub golden: Golden,
}

fn all_schemes() -> Vec<SchemeId> {
    SchemeId::ALL.to_vec()
}

fn default_value_of_load() -> f64 {
    1000.0
}

impl ScenarioFile {
    pub fn windows(&self) -> Vec<usize> {
        if self.windows.is_empty() {
            vec![self.rt.window]
        } else {
            self.windows.clone()
        }
    }

    /// Every realized demand series of the scenario.
    pub fn realizations(&self) -> Vec<Vec<f64>> {
        match &self.realization {
            Realization::Explicit { series } => series.clone(),
            Realization::Generator(spec) => generate_realizations(spec, &self.horizon.demand),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::Version(self.schema_version));
        }
        if let Err(e) = validate_system(&self.resources, &self.horizon) {
            let path = match &e {
                ModelError::InvalidResource { id, .. } | ModelError::DuplicateResource(id) => {
                    let k = self.resources.iter().position(|r| &r.id == id).unwrap_or(0);
                    format!("resources[{k}]")
                }
                _ => "horizon".to_string(),
            };
            return Err(schema(path, e.to_string()));
        }
        let periods = self.horizon.periods;
        match &self.realization {
            Realization::Explicit { series } => {
                if series.is_empty() {
                    return Err(schema("realization.explicit.series", "at least one series is required"));
                }
                for (k, s) in series.iter().enumerate() {
                    let path = format!("realization.explicit.series[{k}]");
                    if s.len() != periods {
                        return Err(schema(path, format!("{} values for {periods} periods", s.len())));
                    }
                    if s.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
                        return Err(schema(path, "demand must be finite and non-negative"));
                    }
                }
            }
            Realization::Generator(g) => {
                if !(g.lo.is_finite() && g.hi.is_finite() && 0.0 <= g.lo && g.lo <= g.hi) {
                    return Err(schema("realization.generator", "need 0 <= lo <= hi"));
                }
                if g.count == 0 {
                    return Err(schema("realization.generator.count", "must be positive"));
                }
            }
        }
        self.rt.validate(periods).map_err(|e| schema("rt", e.to_string()))?;
        for (k, &w) in self.windows.iter().enumerate() {
            let cfg = RtConfig { window: w, stride: self.rt.stride.min(w), ..self.rt };
            cfg.validate(periods).map_err(|e| schema(format!("windows[{k}]"), e.to_string()))?;
        }
        if self.schemes.is_empty() {
            return Err(schema("schemes", "at least one scheme is required"));
        }
        if !(self.value_of_load > 0.0) {
            return Err(schema("value_of_load", "must be positive"));
        }
        Ok(())
    }
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<ScenarioFile, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        schema(if path == "." { "(root)".to_string() } else { path }, e.into_inner().to_string())
    })?;
    file.validate()?;
    Ok(file)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioFile, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    parse_scenario(&text)
}

/// `spec.count` realized series, each `forecast * factor` with factors drawn
/// uniformly from `[lo, hi]`. Deterministic for a given seed.
pub fn generate_realizations(spec: &GeneratorSpec, forecast: &[f64]) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let draw = |rng: &mut ChaCha8Rng| {
        if spec.hi > spec.lo {
            rng.random_range(spec.lo..=spec.hi)
        } else {
            spec.lo
        }
    };
    (0..spec.count)
        .map(|_| match spec.mode {
            DrawMode::PerPeriod => forecast.iter().map(|d| d * draw(&mut rng)).collect(),
            DrawMode::PerScenario => {
                let f = draw(&mut rng);
                forecast.iter().map(|d| d * f).collect()
            }
        })
        .collect()
}

/// A random small system: two to seven thermal units (some ramp-limited),
/// up to two storage units, 3 to 12 periods. Draws the forward market
/// cannot clear are rejected and redrawn.
pub fn random_system(seed: u64) -> (Vec<Resource>, Horizon) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let (rs, h) = draw_system(&mut rng);
        if crate::forward::clear_forward(&rs, &h).is_ok() {
            return (rs, h);
        }
    }
}

fn draw_system(rng: &mut ChaCha8Rng) -> (Vec<Resource>, Horizon) {
    let periods = rng.random_range(3..=12);
    let thermal = rng.random_range(2..=7);
    let storage = rng.random_range(0..=2);
    let mut resources = Vec::new();
    let mut capacity = 0.0;
    for k in 0..thermal {
        let eco_max: f64 = rng.random_range(20.0..80.0);
        let offer = rng.random_range(5.0..120.0);
        let mut r = Resource::thermal(format!("g{k}"), offer, 0.0, eco_max);
        // The first unit is unconstrained so every demand below capacity is servable.
        if k > 0 && rng.random_bool(0.6) {
            let ramp = eco_max * rng.random_range(0.15..0.5);
            let start = eco_max * rng.random_range(0.0..0.6);
            r = r.with_ramps(ramp, ramp * rng.random_range(0.8..1.2), start);
        }
        capacity += if r.ramp_up.is_some() { r.initial_output } else { eco_max };
        resources.push(r);
    }
    for k in 0..storage {
        let power = rng.random_range(5.0..25.0);
        let energy = power * rng.random_range(1.0..4.0);
        let bid = rng.random_range(5.0..60.0);
        let offer = bid + rng.random_range(1.0..20.0);
        let mut r = Resource::storage(format!("s{k}"), offer, bid, power, energy, energy * rng.random_range(0.0..1.0))
            .with_efficiencies(rng.random_range(0.85..1.0), rng.random_range(0.85..1.0));
        if rng.random_bool(0.5) {
            let target = energy * rng.random_range(0.2..0.8);
            r = r.with_target(target);
        }
        resources.push(r);
    }
    let demand = (0..periods).map(|_| capacity * rng.random_range(0.2..0.9)).collect();
    (resources, Horizon::new(demand))
}

/// A 24-period day with 20 thermal units and 2 storage units with terminal
/// targets.
pub fn synthetic_day(seed: u64) -> (Vec<Resource>, Horizon) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut resources = Vec::new();
    let units = 20;
    for k in 0..units {
        let offer = 10.0 + 190.0 * (k as f64 / (units - 1) as f64) + rng.random_range(-2.0..2.0);
        let eco_max: f64 = rng.random_range(60.0..120.0);
        let ramp = eco_max * rng.random_range(0.10..0.30);
        resources.push(Resource {
            offer: Price::Flat(offer.clamp(10.0, 200.0)),
            ..Resource::thermal(format!("g{:02}", k + 1), 0.0, 0.0, eco_max).with_ramps(ramp, ramp, 0.0)
        });
    }
    let shape = [
        0.62, 0.58, 0.56, 0.55, 0.57, 0.63, 0.72, 0.82, 0.88, 0.90, 0.91, 0.90, 0.88, 0.87, 0.87, 0.89, 0.93, 0.99,
        1.00, 0.97, 0.91, 0.82, 0.73, 0.66,
    ];
    let total: f64 = resources.iter().map(|r| r.eco_max).sum();
    let peak = 0.72 * total;
    let demand: Vec<f64> = shape.iter().map(|s| s * peak).collect();
    // Start every unit at its share of the first-period merit order.
    let mut left = demand[0];
    for r in resources.iter_mut() {
        let take = left.min(r.eco_max);
        r.initial_output = take;
        left -= take;
    }
    for (k, (power, energy)) in [(60.0, 240.0), (40.0, 120.0)].into_iter().enumerate() {
        let start = energy * 0.5;
        resources.push(
            Resource::storage(format!("esr{}", k + 1), 30.0 + 5.0 * k as f64, 20.0 + 5.0 * k as f64, power, energy, start)
                .with_efficiencies(0.95, 0.95)
                .with_target(start),
        );
    }
    (resources, Horizon::new(demand))
}
