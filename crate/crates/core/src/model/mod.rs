//! Resources, horizons and the clearing programs assembled from them.
//!
//! Every market problem in the crate (forward clearing, real-time scheduling
//! and pricing, re-optimisation, profit maximisation, the past/future value
//! functions) is the same block-structured LP restricted to a contiguous range
//! of periods, with the rows that cross the range edges either substituted
//! with known values or replaced by dual-priced objective terms. See
//! [`assemble`].

mod assemble;
mod outcome;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::LpError;

pub use assemble::{
    assemble, build_full_horizon, build_pp, build_profit_max, build_sp, pp_adjustments,
    BuildOptions, ClearingProgram, ClearingSpec, Edge, Market, VarKind,
};
pub use outcome::{DualMap, MarketOutcome};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("resource `{id}`: {reason}")]
    InvalidResource { id: String, reason: String },
    #[error("duplicate resource id `{0}`")]
    DuplicateResource(String),
    #[error("horizon: {0}")]
    InvalidHorizon(String),
    #[error("window {start}..={end} is not inside 1..={periods}")]
    InvalidWindow { start: usize, end: usize, periods: usize },
    #[error("demand {demand} MW at period {period} exceeds the maximum deliverable {capacity} MW")]
    InsufficientCapacity { period: usize, demand: f64, capacity: f64 },
    #[error("guideline has no dual for intertemporal constraint `{0}`")]
    MissingDual(String),
    #[error("boundary state has {got} entries, expected {expected}")]
    BoundaryShape { got: usize, expected: usize },
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceKind {
    Thermal,
    Storage,
}

/// A price that is either flat over the horizon or given per period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Price {
    Flat(f64),
    Series(Vec<f64>),
}

impl Price {
    /// Price at 1-based period `t`.
    pub fn at(&self, t: usize) -> f64 {
        match self {
            Price::Flat(p) => *p,
            Price::Series(v) => v[t - 1],
        }
    }

    fn check(&self, periods: usize) -> Result<(), String> {
        match self {
            Price::Flat(p) if !p.is_finite() => Err("offer is not finite".into()),
            Price::Series(v) if v.len() != periods => {
                Err(format!("offer series has {} entries, horizon has {periods}", v.len()))
            }
            Price::Series(v) if v.iter().any(|p| !p.is_finite()) => {
                Err("offer series has non-finite entries".into())
            }
            _ => Ok(()),
        }
    }

    fn min(&self) -> f64 {
        match self {
            Price::Flat(p) => *p,
            Price::Series(v) => v.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageParams {
    /// MWh
    pub soc_max: f64,
    /// MWh
    pub soc_initial: f64,
    #[serde(default = "one")]
    pub charge_efficiency: f64,
    #[serde(default = "one")]
    pub discharge_efficiency: f64,
    /// Required state of charge at the end of the horizon, MWh.
    #[serde(default)]
    pub soc_target: Option<f64>,
}

fn one() -> f64 {
    1.0
}

/// A generator or a storage unit offering into the market.
///
/// Storage `eco_min` is negative: its magnitude is the maximum charge rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resource {
    pub id: String,
    pub kind: ResourceKind,
    /// $/MWh, per unit of output (discharge for storage).
    pub offer: Price,
    /// Storage willingness to pay for charging energy, $/MWh.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bid: Option<f64>,
    /// MW
    pub eco_max: f64,
    /// MW
    pub eco_min: f64,
    /// MW per period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp_up: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp_down: Option<f64>,
    /// Output at period 0, MW.
    #[serde(default)]
    pub initial_output: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage: Option<StorageParams>,
}

impl Resource {
    pub fn thermal(id: impl Into<String>, offer: f64, eco_min: f64, eco_max: f64) -> Self {
        Self {
            id: id.into(),
            kind: ResourceKind::Thermal,
            offer: Price::Flat(offer),
            bid: None,
            eco_max,
            eco_min,
            ramp_up: None,
            ramp_down: None,
            initial_output: 0.0,
            storage: None,
        }
    }

    pub fn with_ramps(mut self, up: f64, down: f64, initial_output: f64) -> Self {
        self.ramp_up = Some(up);
        self.ramp_down = Some(down);
        self.initial_output = initial_output;
        self
    }

    /// Storage with unit efficiencies and no terminal target.
    pub fn storage(
        id: impl Into<String>,
        offer: f64,
        bid: f64,
        max_power: f64,
        soc_max: f64,
        soc_initial: f64,
    ) -> Self {
        Self {
            id: id.into(),
            kind: ResourceKind::Storage,
            offer: Price::Flat(offer),
            bid: Some(bid),
            eco_max: max_power,
            eco_min: -max_power,
            ramp_up: None,
            ramp_down: None,
            initial_output: 0.0,
            storage: Some(StorageParams {
                soc_max,
                soc_initial,
                charge_efficiency: 1.0,
                discharge_efficiency: 1.0,
                soc_target: None,
            }),
        }
    }

    pub fn with_target(mut self, target: f64) -> Self {
        if let Some(s) = self.storage.as_mut() {
            s.soc_target = Some(target);
        }
        self
    }

    pub fn with_efficiencies(mut self, charge: f64, discharge: f64) -> Self {
        if let Some(s) = self.storage.as_mut() {
            s.charge_efficiency = charge;
            s.discharge_efficiency = discharge;
        }
        self
    }

    pub fn is_storage(&self) -> bool {
        self.kind == ResourceKind::Storage
    }

    /// Storage parameters; panics for thermal units.
    pub fn store(&self) -> &StorageParams {
        self.storage.as_ref().expect("storage parameters on a storage resource")
    }

    pub fn bid_price(&self) -> f64 {
        self.bid.unwrap_or(0.0)
    }

    /// Largest output the resource can deliver in any single period, MW.
    pub fn max_deliverable(&self, period_hours: f64) -> f64 {
        match &self.storage {
            Some(s) => self.eco_max.min(s.soc_max * s.discharge_efficiency / period_hours),
            None => self.eco_max,
        }
    }

    pub fn validate(&self, periods: usize) -> Result<(), ModelError> {
        let fail = |reason: String| ModelError::InvalidResource { id: self.id.clone(), reason };
        self.offer.check(periods).map_err(fail)?;
        if !(self.eco_min <= self.eco_max) {
            return Err(fail(format!(
                "eco_min {} exceeds eco_max {}",
                self.eco_min, self.eco_max
            )));
        }
        for (name, r) in [("ramp_up", self.ramp_up), ("ramp_down", self.ramp_down)] {
            if let Some(r) = r {
                if !(r >= 0.0) {
                    return Err(fail(format!("{name} must be non-negative")));
                }
            }
        }
        match (self.kind, &self.storage) {
            (ResourceKind::Thermal, Some(_)) => {
                return Err(fail("thermal resource carries storage parameters".into()))
            }
            (ResourceKind::Thermal, None) => {}
            (ResourceKind::Storage, None) => {
                return Err(fail("storage resource lacks storage parameters".into()))
            }
            (ResourceKind::Storage, Some(s)) => {
                if self.ramp_up.is_some() || self.ramp_down.is_some() {
                    return Err(fail("ramp limits apply to thermal units only".into()));
                }
                let Some(bid) = self.bid else {
                    return Err(fail("storage resource lacks a charge bid".into()));
                };
                if self.eco_min > 0.0 || self.eco_max < 0.0 {
                    return Err(fail("storage eco_min must be <= 0 <= eco_max".into()));
                }
                if !(0.0 <= s.soc_initial && s.soc_initial <= s.soc_max) {
                    return Err(fail(format!(
                        "soc_initial {} outside [0, soc_max {}]",
                        s.soc_initial, s.soc_max
                    )));
                }
                for (name, e) in [
                    ("charge_efficiency", s.charge_efficiency),
                    ("discharge_efficiency", s.discharge_efficiency),
                ] {
                    if !(e > 0.0 && e <= 1.0) {
                        return Err(fail(format!("{name} {e} outside (0, 1]")));
                    }
                }
                if let Some(target) = s.soc_target {
                    if !(0.0..=s.soc_max).contains(&target) {
                        return Err(fail(format!("soc_target {target} outside [0, soc_max]")));
                    }
                }
                // A simultaneous charge/discharge pair must cost something,
                // otherwise the split variables can cycle energy for free.
                if self.offer.min() <= bid {
                    return Err(fail(format!(
                        "offer {} must exceed bid {bid}",
                        self.offer.min()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Periods `1..=T` with a forecast demand per period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub periods: usize,
    #[serde(default = "one")]
    pub period_hours: f64,
    /// MW per period.
    pub demand: Vec<f64>,
}

impl Horizon {
    pub fn new(demand: Vec<f64>) -> Self {
        Self { periods: demand.len(), period_hours: 1.0, demand }
    }

    pub fn with_demand(&self, demand: Vec<f64>) -> Self {
        Self { periods: self.periods, period_hours: self.period_hours, demand }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.periods == 0 {
            return Err(ModelError::InvalidHorizon("at least one period is required".into()));
        }
        if self.demand.len() != self.periods {
            return Err(ModelError::InvalidHorizon(format!(
                "{} demand values for {} periods",
                self.demand.len(),
                self.periods
            )));
        }
        if let Some(t) = self.demand.iter().position(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(ModelError::InvalidHorizon(format!(
                "demand at period {} must be finite and non-negative",
                t + 1
            )));
        }
        if !(self.period_hours > 0.0) {
            return Err(ModelError::InvalidHorizon("period length must be positive".into()));
        }
        Ok(())
    }
}

/// Validates a resource set against a horizon.
pub fn validate_system(resources: &[Resource], horizon: &Horizon) -> Result<(), ModelError> {
    horizon.validate()?;
    let mut seen = std::collections::HashSet::new();
    for r in resources {
        if !seen.insert(r.id.as_str()) {
            return Err(ModelError::DuplicateResource(r.id.clone()));
        }
        r.validate(horizon.periods)?;
    }
    Ok(())
}

/// Rejects demand that no dispatch could serve in some period.
pub fn check_capacity(
    resources: &[Resource],
    demand: &[f64],
    period_hours: f64,
    first_period: usize,
) -> Result<(), ModelError> {
    let capacity: f64 = resources.iter().map(|r| r.max_deliverable(period_hours)).sum();
    for (k, &d) in demand.iter().enumerate() {
        if d > capacity + 1e-9 {
            return Err(ModelError::InsufficientCapacity {
                period: first_period + k,
                demand: d,
                capacity,
            });
        }
    }
    Ok(())
}

/// A contiguous block of periods `start..=end` (1-based) cleared together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub end: usize,
    pub has_past_boundary: bool,
    pub has_future_boundary: bool,
}

impl Window {
    pub fn new(start: usize, end: usize, periods: usize) -> Result<Self, ModelError> {
        if start < 1 || start > end || end > periods {
            return Err(ModelError::InvalidWindow { start, end, periods });
        }
        Ok(Self { start, end, has_past_boundary: true, has_future_boundary: end < periods })
    }

    /// Window of length `len` starting at `start`, truncated at the horizon end.
    pub fn starting_at(start: usize, len: usize, periods: usize) -> Result<Self, ModelError> {
        Self::new(start, (start + len.max(1) - 1).min(periods), periods)
    }

    pub fn full(periods: usize) -> Self {
        Self { start: 1, end: periods, has_past_boundary: true, has_future_boundary: false }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn periods(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }

    pub fn contains(&self, t: usize) -> bool {
        self.start <= t && t <= self.end
    }
}

/// Dispatch of one resource in one period.
///
/// Thermal units use `output` only. Storage keeps charge and discharge split
/// with `output = discharge - charge`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ResourceState {
    pub output: f64,
    #[serde(default)]
    pub charge: f64,
    #[serde(default)]
    pub discharge: f64,
    #[serde(default)]
    pub soc: f64,
}

impl ResourceState {
    pub fn thermal(output: f64) -> Self {
        Self { output, ..Self::default() }
    }

    pub fn storage(charge: f64, discharge: f64, soc: f64) -> Self {
        Self { output: discharge - charge, charge, discharge, soc }
    }

    /// Initial condition (period 0) of a resource.
    pub fn initial(resource: &Resource) -> Self {
        match &resource.storage {
            Some(s) => Self::storage(0.0, 0.0, s.soc_initial),
            None => Self::thermal(resource.initial_output),
        }
    }

    pub fn value(&self, kind: VarKind) -> f64 {
        match kind {
            VarKind::Output => self.output,
            VarKind::Charge => self.charge,
            VarKind::Discharge => self.discharge,
            VarKind::Soc => self.soc,
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.output - other.output)
            .abs()
            .max((self.charge - other.charge).abs())
            .max((self.discharge - other.discharge).abs())
            .max((self.soc - other.soc).abs())
    }
}

/// Dispatch of every resource in one period, ordered like the resource list.
pub type PeriodState = Vec<ResourceState>;

/// Initial conditions for all resources.
pub fn initial_state(resources: &[Resource]) -> PeriodState {
    resources.iter().map(ResourceState::initial).collect()
}

/// Offered production cost of a resource in period `t`, $.
pub fn offered_cost(resource: &Resource, state: &ResourceState, t: usize, period_hours: f64) -> f64 {
    match resource.kind {
        ResourceKind::Thermal => resource.offer.at(t) * state.output * period_hours,
        ResourceKind::Storage => {
            (resource.offer.at(t) * state.discharge - resource.bid_price() * state.charge) * period_hours
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn esr() -> Resource {
        Resource::storage("esr", 9.0, 5.0, 15.0, 12.0, 6.0)
    }

    #[test]
    fn storage_validation_names_the_field() {
        let mut r = esr();
        r.storage.as_mut().unwrap().soc_initial = 13.0;
        let err = r.validate(8).unwrap_err().to_string();
        assert!(err.contains("soc_initial"), "{err}");

        let mut r = esr();
        r.bid = Some(9.0);
        assert!(r.validate(8).unwrap_err().to_string().contains("must exceed bid"));

        let r = esr().with_efficiencies(0.0, 1.0);
        assert!(r.validate(8).unwrap_err().to_string().contains("charge_efficiency"));

        assert!(esr().with_target(20.0).validate(8).is_err());
        assert!(esr().validate(8).is_ok());
    }

    #[test]
    fn thermal_bounds_must_be_ordered() {
        let g = Resource::thermal("g", 10.0, 50.0, 40.0);
        assert!(g.validate(3).is_err());
        let g = Resource::thermal("g", 10.0, 0.0, 40.0);
        assert!(g.validate(3).is_ok());
        let mut g = g;
        g.offer = Price::Series(vec![1.0, 2.0]);
        assert!(g.validate(3).is_err());
    }

    #[test]
    fn windows_truncate_at_the_horizon() {
        let w = Window::starting_at(7, 3, 8).unwrap();
        assert_eq!((w.start, w.end), (7, 8));
        assert!(!w.has_future_boundary);
        let w = Window::starting_at(1, 3, 8).unwrap();
        assert!(w.has_future_boundary && w.has_past_boundary);
        assert!(Window::new(0, 2, 8).is_err());
        assert!(Window::new(3, 2, 8).is_err());
        assert!(Window::new(3, 9, 8).is_err());
    }

    #[test]
    fn capacity_screen_counts_storage_energy() {
        let rs = vec![Resource::thermal("g", 10.0, 0.0, 40.0), esr()];
        assert!(check_capacity(&rs, &[52.0], 1.0, 1).is_ok());
        let err = check_capacity(&rs, &[10.0, 52.5], 1.0, 1).unwrap_err();
        assert_eq!(
            err,
            ModelError::InsufficientCapacity { period: 2, demand: 52.5, capacity: 52.0 }
        );
    }

    #[test]
    fn duplicate_ids_rejected() {
        let rs = vec![Resource::thermal("g", 1.0, 0.0, 1.0), Resource::thermal("g", 2.0, 0.0, 1.0)];
        assert_eq!(
            validate_system(&rs, &Horizon::new(vec![1.0])),
            Err(ModelError::DuplicateResource("g".into()))
        );
    }
}
