//! Assertion suite for the market design's guarantees on one system:
//! equilibrium, marginal identity, schedule and price consistency under an
//! accurate forecast, reachability of the guideline, and the lower cut.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::forward::{clear_forward, marginal_identity, verify_competitive_equilibrium, ForwardError, ForwardResult};
use crate::model::{Horizon, PeriodState, Resource, ResourceKind, ResourceState};
use crate::realtime::{future_feasibility, run_rolling, RtConfig};
use crate::settlement::cut::lower_cut_check;
use crate::settlement::metrics::compute_loc;

pub const TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub passed: bool,
    /// Worst residual found, in the check's own units.
    pub worst: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub checks: Vec<PropertyCheck>,
    /// Boundaries at which the lower cut was evaluated.
    pub cut_samples: usize,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn check(name: &str, worst: f64, tol: f64, detail: impl Into<String>) -> PropertyCheck {
    PropertyCheck { name: name.to_string(), passed: worst <= tol, worst, detail: detail.into() }
}

/// Options of [`verify_system`].
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub rt: RtConfig,
    /// Realized demand for the lower-cut check; the forecast when `None`.
    pub realized: Option<Vec<f64>>,
    /// Random boundaries per cut period.
    pub cut_samples: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { rt: RtConfig::default(), realized: None, cut_samples: 4, seed: 0 }
    }
}

/// Random boundary states around the forward state at `t0`: half perturbed
/// locally, half drawn over each resource's whole range.
pub fn sample_boundaries(
    resources: &[Resource],
    forward: &ForwardResult,
    t0: usize,
    count: usize,
    rng: &mut impl Rng,
) -> Vec<PeriodState> {
    let base = forward.outcome.state(t0);
    (0..count)
        .map(|k| {
            let local = k % 2 == 0;
            resources
                .iter()
                .zip(base)
                .map(|(r, b)| match r.kind {
                    ResourceKind::Thermal => {
                        let (lo, hi) = (r.eco_min, r.eco_max);
                        let x = if local {
                            (b.output + (hi - lo) * rng.random_range(-0.2..=0.2)).clamp(lo, hi)
                        } else {
                            rng.random_range(lo..=hi)
                        };
                        ResourceState::thermal(x)
                    }
                    ResourceKind::Storage => {
                        let cap = r.store().soc_max;
                        let soc = if local {
                            (b.soc + cap * rng.random_range(-0.2..=0.2)).clamp(0.0, cap)
                        } else {
                            rng.random_range(0.0..=cap)
                        };
                        ResourceState { soc, ..*b }
                    }
                })
                .collect()
        })
        .collect()
}

/// Runs every check on one system. Consistency checks use realized =
/// forecast; the lower cut uses `options.realized` when given.
pub fn verify_system(
    resources: &[Resource],
    horizon: &Horizon,
    options: &VerifyOptions,
) -> Result<PropertyReport, ForwardError> {
    let forward = clear_forward(resources, horizon)?;
    let mut checks = Vec::new();

    let eq = verify_competitive_equilibrium(resources, horizon, &forward)?;
    let worst = eq.gaps.iter().map(|g| g.gap.abs() / (1.0 + g.max_profit.abs())).fold(eq.balance_residual, f64::max);
    checks.push(check("competitive_equilibrium", worst, TOL, format!("{} resources", eq.gaps.len())));

    let marg = marginal_identity(resources, horizon, &forward);
    let worst = marg.iter().map(|c| c.residual()).fold(0.0, f64::max);
    checks.push(check("marginal_identity", worst, TOL, format!("{} marginal (resource, period) pairs", marg.len())));

    let trace = run_rolling(resources, horizon, &forward, &horizon.demand, &options.rt)?;
    let worst = trace
        .realized
        .iter()
        .enumerate()
        .flat_map(|(k, s)| s.iter().zip(forward.outcome.state(k + 1)).map(|(a, b)| a.max_abs_diff(b)))
        .fold(0.0, f64::max);
    checks.push(check("schedule_consistency", worst, TOL, format!("{} windows", trace.windows.len())));
    let cost = trace.realized_cost(resources, horizon.period_hours);
    let fwd_cost = forward.outcome.production_cost(resources, horizon.period_hours);
    checks.push(check(
        "cost_consistency",
        (cost - fwd_cost).abs() / (1.0 + fwd_cost.abs()),
        TOL,
        format!("realized {cost:.6} forward {fwd_cost:.6}"),
    ));

    let reach = future_feasibility(resources, horizon, &forward, &trace)?;
    let blocked: Vec<usize> = reach.iter().filter(|(_, ok)| !ok).map(|(t, _)| *t).collect();
    checks.push(PropertyCheck {
        name: "guideline_reachable".into(),
        passed: blocked.is_empty(),
        worst: blocked.len() as f64,
        detail: if blocked.is_empty() { format!("{} boundaries", reach.len()) } else { format!("unreachable after {blocked:?}") },
    });

    let worst = trace.lmp.iter().zip(forward.lmp()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    checks.push(check("price_consistency", worst, TOL, ""));
    let loc = compute_loc(resources, horizon, &trace.lmp, &trace.realized)?;
    let worst = loc.iter().copied().fold(0.0, f64::max);
    checks.push(check("zero_lost_opportunity_cost", worst, TOL, ""));

    let realized = options.realized.clone().unwrap_or_else(|| horizon.demand.clone());
    let accurate = realized == horizon.demand;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let (mut violated, mut worst_eps, mut samples) = (0.0f64, 0.0f64, 0);
    for t0 in 2..=horizon.periods {
        let bounds = sample_boundaries(resources, &forward, t0, options.cut_samples, &mut rng);
        let rep = lower_cut_check(resources, horizon, &forward, &realized, t0, &bounds)?;
        samples += rep.samples.len();
        for s in &rep.samples {
            if s.value.is_finite() {
                violated = violated.max(s.cut - s.value);
            }
        }
        violated = violated.max(-rep.epsilon);
        worst_eps = worst_eps.max(rep.epsilon.abs());
    }
    checks.push(check("lower_cut", violated, TOL, format!("{samples} sampled boundaries")));
    if accurate {
        checks.push(check("cut_tight_at_forward", worst_eps, TOL, ""));
    }
    Ok(PropertyReport { checks, cut_samples: samples })
}
