//! Runs every scheme, realization and window length of a scenario against
//! one shared forward result, and checks the scenario's golden outcomes.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forward::{clear_forward, ForwardError, ForwardResult};
use crate::realtime::{perfect_information_run, RtConfig, RtTrace};
use crate::scenario::ScenarioFile;
use crate::schemes::{run_scheme, SchemeConfig, SchemeId};
use crate::settlement::metrics::{metrics_report, MetricsReport};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("forward clearing failed")]
    Forward(#[from] ForwardError),
    #[error("writing {path}")]
    Io { path: String, source: std::io::Error },
    #[error("writing csv")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scheme: SchemeId,
    /// 0-based realization index.
    pub realization: usize,
    pub window: usize,
    pub metrics: Option<MetricsReport>,
    pub error: Option<String>,
    #[serde(skip)]
    pub trace: Option<RtTrace>,
}

/// Means over realizations of one (scheme, window) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scheme: SchemeId,
    pub window: usize,
    pub runs: usize,
    pub ss: f64,
    pub ps: f64,
    pub cs: f64,
    pub esrs: f64,
    pub total_loc: f64,
    pub storage_loc: f64,
    pub violations: usize,
    pub target_misses: usize,
    /// Percent change against myopic at the same window, when present.
    pub relative: Option<Relative>,
    /// Seconds; excluded from the summary file to keep it reproducible.
    #[serde(skip)]
    pub pricing_time: f64,
    #[serde(skip)]
    pub scheduling_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Relative {
    pub ss: f64,
    pub ps: f64,
    pub cs: f64,
    pub esrs: f64,
    pub total_loc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub forward_lmp: Vec<f64>,
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<Aggregate>,
    pub verdicts: Vec<Verdict>,
}

impl ExperimentReport {
    /// No golden check failed and every run completed.
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn aggregate(&self, scheme: SchemeId, window: usize) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.scheme == scheme && a.window == window)
    }
}

fn rt_for(scenario: &ScenarioFile, window: usize) -> RtConfig {
    RtConfig {
        window,
        stride: scenario.rt.stride.min(window),
        value_of_load: scenario.value_of_load,
        ..scenario.rt
    }
}

/// Runs the whole scenario. Runs that fail are recorded and the rest
/// continue. When `out_dir` is given, `metrics.csv`, `timing.csv` and
/// `summary.json` are written there.
pub fn run_experiment(scenario: &ScenarioFile, out_dir: Option<&Path>) -> Result<ExperimentReport, ExperimentError> {
    let forward = clear_forward(&scenario.resources, &scenario.horizon)?;
    let realizations = scenario.realizations();
    let mut jobs = Vec::new();
    for w in scenario.windows() {
        for &s in &scenario.schemes {
            for k in 0..realizations.len() {
                jobs.push((s, k, w));
            }
        }
    }
    let runs: Vec<RunRecord> = jobs
        .into_par_iter()
        .map(|(scheme, k, window)| run_one(scenario, &forward, &realizations[k], scheme, k, window))
        .collect();
    let aggregates = aggregate(scenario, &runs);
    let verdicts = golden_verdicts(scenario, &forward, &realizations, &runs, &aggregates);
    let report = ExperimentReport {
        name: scenario.name.clone(),
        forward_lmp: forward.lmp().to_vec(),
        runs,
        aggregates,
        verdicts,
    };
    if let Some(dir) = out_dir {
        write_outputs(&report, dir)?;
    }
    Ok(report)
}

fn run_one(
    scenario: &ScenarioFile,
    forward: &ForwardResult,
    realized: &[f64],
    scheme: SchemeId,
    realization: usize,
    window: usize,
) -> RunRecord {
    let config = SchemeConfig { rt: rt_for(scenario, window), hogan_fix_past: scenario.hogan_fix_past };
    let (rs, h) = (&scenario.resources, &scenario.horizon);
    let outcome = run_scheme(scheme, rs, h, forward, realized, &config)
        .map_err(|e| e.to_string())
        .and_then(|trace| {
            let m = metrics_report(rs, h, forward, &trace, scenario.value_of_load).map_err(|e| e.to_string())?;
            Ok((trace, m))
        });
    match outcome {
        Ok((trace, m)) => {
            log::debug!("{scheme} realization {realization} W={window}: SS {:.2}", m.surpluses.ss);
            RunRecord { scheme, realization, window, metrics: Some(m), error: None, trace: Some(trace) }
        }
        Err(e) => {
            log::warn!("{scheme} realization {realization} W={window} failed: {e}");
            RunRecord { scheme, realization, window, metrics: None, error: Some(e), trace: None }
        }
    }
}

fn pct(x: f64, base: f64) -> f64 {
    if base == 0.0 {
        if x == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(x)
        }
    } else {
        100.0 * (x - base) / base.abs()
    }
}

fn aggregate(scenario: &ScenarioFile, runs: &[RunRecord]) -> Vec<Aggregate> {
    let mut out = Vec::new();
    for w in scenario.windows() {
        for &scheme in &scenario.schemes {
            let ms: Vec<&MetricsReport> = runs
                .iter()
                .filter(|r| r.scheme == scheme && r.window == w)
                .filter_map(|r| r.metrics.as_ref())
                .collect();
            let n = ms.len().max(1) as f64;
            let mean = |f: &dyn Fn(&MetricsReport) -> f64| ms.iter().map(|m| f(m)).sum::<f64>() / n;
            out.push(Aggregate {
                scheme,
                window: w,
                runs: ms.len(),
                ss: mean(&|m| m.surpluses.ss),
                ps: mean(&|m| m.surpluses.ps),
                cs: mean(&|m| m.surpluses.cs),
                esrs: mean(&|m| m.surpluses.esrs),
                total_loc: mean(&|m| m.total_loc),
                storage_loc: mean(&|m| m.storage_loc),
                violations: ms.iter().map(|m| m.violations).sum(),
                target_misses: ms.iter().filter(|m| m.target_missed).count(),
                relative: None,
                pricing_time: mean(&|m| m.mean_pricing_time().as_secs_f64()),
                scheduling_time: mean(&|m| m.mean_scheduling_time().as_secs_f64()),
            });
        }
    }
    let bases: BTreeMap<usize, Aggregate> =
        out.iter().filter(|a| a.scheme == SchemeId::Myopic).map(|a| (a.window, a.clone())).collect();
    for a in &mut out {
        if let Some(b) = bases.get(&a.window) {
            a.relative = Some(Relative {
                ss: pct(a.ss, b.ss),
                ps: pct(a.ps, b.ps),
                cs: pct(a.cs, b.cs),
                esrs: pct(a.esrs, b.esrs),
                total_loc: pct(a.total_loc, b.total_loc),
            });
        }
    }
    out
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn golden_verdicts(
    scenario: &ScenarioFile,
    forward: &ForwardResult,
    realizations: &[Vec<f64>],
    runs: &[RunRecord],
    aggregates: &[Aggregate],
) -> Vec<Verdict> {
    let g = &scenario.golden;
    let tol = g.tolerance.unwrap_or(1e-6);
    let mut out = Vec::new();
    let failed: Vec<String> = runs
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("{} #{} W={}: {e}", r.scheme, r.realization, r.window)))
        .collect();
    let detail = if failed.is_empty() { format!("{} runs", runs.len()) } else { failed.join("; ") };
    out.push(Verdict::new("runs_completed", failed.is_empty(), detail));

    if let Some(lmp) = &g.forward_lmp {
        let d = max_diff(forward.lmp(), lmp);
        out.push(Verdict::new("forward_lmp", d <= tol, format!("max deviation {d:.3e}")));
    }
    if let Some(sched) = &g.forward_schedule {
        let detail;
        let passed = match scenario.resources.iter().position(|r| r.id == sched.resource) {
            Some(i) => {
                let d = max_diff(&forward.outcome.net_output(i), &sched.net_output);
                detail = format!("{}: max deviation {d:.3e}", sched.resource);
                d <= tol
            }
            None => {
                detail = format!("unknown resource `{}`", sched.resource);
                false
            }
        };
        out.push(Verdict::new("forward_schedule", passed, detail));
    }

    let proposed: Vec<(&RunRecord, &RtTrace)> = runs
        .iter()
        .filter(|r| r.scheme == SchemeId::Proposed)
        .filter_map(|r| r.trace.as_ref().map(|t| (r, t)))
        .collect();
    let need_proposed = g.rt_prices_match_forward || g.rt_dispatch_matches_forward || g.rt_dispatch_matches_perfect_information;
    if need_proposed && proposed.is_empty() {
        out.push(Verdict::new("proposed_runs", false, "golden checks need at least one proposed run"));
    }
    if g.rt_prices_match_forward {
        let d = proposed.iter().map(|(_, t)| max_diff(&t.lmp, forward.lmp())).fold(0.0, f64::max);
        out.push(Verdict::new("rt_prices_match_forward", d <= tol, format!("max deviation {d:.3e}")));
    }
    if g.rt_dispatch_matches_forward {
        let d = proposed
            .iter()
            .flat_map(|(_, t)| t.realized.iter().enumerate().map(|(k, s)| state_diff(s, forward.outcome.state(k + 1))))
            .fold(0.0, f64::max);
        out.push(Verdict::new("rt_dispatch_matches_forward", d <= tol, format!("max deviation {d:.3e}")));
    }
    if g.rt_dispatch_matches_perfect_information {
        let mut d = 0.0f64;
        let mut detail = String::new();
        for (r, t) in &proposed {
            match perfect_information_run(&scenario.resources, &scenario.horizon, &realizations[r.realization]) {
                Ok(pi) => {
                    for (k, s) in t.realized.iter().enumerate() {
                        d = d.max(state_diff(s, pi.state(k + 1)));
                    }
                }
                Err(e) => {
                    d = f64::INFINITY;
                    detail = format!("perfect-information run #{} failed: {e}; ", r.realization);
                }
            }
        }
        detail.push_str(&format!("max deviation {d:.3e}"));
        out.push(Verdict::new("rt_dispatch_matches_perfect_information", d <= tol, detail));
    }
    if g.scheme_orderings {
        out.extend(ordering_verdicts(scenario, aggregates));
    }
    out
}

fn state_diff(a: &crate::model::PeriodState, b: &crate::model::PeriodState) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.max_abs_diff(y)).fold(0.0, f64::max)
}

/// Cross-scheme orderings at the scenario's base window, plus the window
/// sweep of the proposed scheme when several windows are run.
fn ordering_verdicts(scenario: &ScenarioFile, aggregates: &[Aggregate]) -> Vec<Verdict> {
    let mut out = Vec::new();
    let w = scenario.rt.window;
    let get = |s: SchemeId, w: usize| aggregates.iter().find(|a| a.scheme == s && a.window == w);
    let (Some(my), Some(fo), Some(pr), Some(hua)) = (
        get(SchemeId::Myopic, w),
        get(SchemeId::FirstOnly, w),
        get(SchemeId::Proposed, w),
        get(SchemeId::Hua, w),
    ) else {
        out.push(Verdict::new("scheme_orderings", false, format!("need myopic, first_only, proposed and hua at W={w}")));
        return out;
    };
    out.push(Verdict::new(
        "surplus_proposed_above_myopic",
        pr.ss > my.ss,
        format!("SS proposed {:.2} myopic {:.2}", pr.ss, my.ss),
    ));
    out.push(Verdict::new(
        "loc_ordering",
        hua.total_loc < pr.total_loc && pr.total_loc < fo.total_loc && fo.total_loc < my.total_loc,
        format!(
            "LOC hua {:.2} proposed {:.2} first_only {:.2} myopic {:.2}",
            hua.total_loc, pr.total_loc, fo.total_loc, my.total_loc
        ),
    ));
    // At most one realization in 25 may meet the target by chance.
    let need = my.runs - my.runs / 25;
    out.push(Verdict::new(
        "myopic_misses_target",
        my.target_misses >= need,
        format!("{} of {} realizations", my.target_misses, my.runs),
    ));
    out.push(Verdict::new("proposed_no_violations", pr.violations == 0, format!("{} violations", pr.violations)));

    let sweep: Vec<&Aggregate> = scenario.windows().iter().filter_map(|&w| get(SchemeId::Proposed, w)).collect();
    if sweep.len() > 1 {
        let mut sorted = sweep.clone();
        sorted.sort_by_key(|a| a.window);
        let monotone = sorted.windows(2).all(|p| p[1].total_loc <= p[0].total_loc);
        let detail: Vec<String> = sorted.iter().map(|a| format!("W={} {:.2}", a.window, a.total_loc)).collect();
        out.push(Verdict::new("proposed_loc_nonincreasing_in_window", monotone, detail.join(", ")));
        let v: usize = sorted.iter().map(|a| a.violations).sum();
        out.push(Verdict::new("proposed_no_violations_any_window", v == 0, format!("{v} violations")));
    }
    out
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    scheme: &'a str,
    realization: usize,
    window: usize,
    ss: Option<f64>,
    ps: Option<f64>,
    cs: Option<f64>,
    esrs: Option<f64>,
    total_loc: Option<f64>,
    storage_loc: Option<f64>,
    violations: Option<usize>,
    target_missed: Option<bool>,
    shed_mwh: Option<f64>,
    production_cost: Option<f64>,
    reoptimizations: Option<usize>,
    error: &'a str,
}

#[derive(Serialize)]
struct TimingRow<'a> {
    scheme: &'a str,
    realization: usize,
    window: usize,
    mean_scheduling_s: f64,
    mean_pricing_s: f64,
    max_pricing_s: f64,
}

/// Writes to a temporary sibling and renames, so readers never see a
/// partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    let io = |source| ExperimentError::Io { path: path.display().to_string(), source };
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn metrics_csv(report: &ExperimentReport) -> Result<Vec<u8>, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &report.runs {
        let m = r.metrics.as_ref();
        w.serialize(MetricsRow {
            scheme: r.scheme.as_str(),
            realization: r.realization,
            window: r.window,
            ss: m.map(|m| m.surpluses.ss),
            ps: m.map(|m| m.surpluses.ps),
            cs: m.map(|m| m.surpluses.cs),
            esrs: m.map(|m| m.surpluses.esrs),
            total_loc: m.map(|m| m.total_loc),
            storage_loc: m.map(|m| m.storage_loc),
            violations: m.map(|m| m.violations),
            target_missed: m.map(|m| m.target_missed),
            shed_mwh: m.map(|m| m.shed),
            production_cost: m.map(|m| m.production_cost),
            reoptimizations: m.map(|m| m.reoptimizations),
            error: r.error.as_deref().unwrap_or(""),
        })?;
    }
    w.into_inner().map_err(|e| ExperimentError::Csv(e.into_error().into()))
}

fn timing_csv(report: &ExperimentReport) -> Result<Vec<u8>, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &report.runs {
        let Some(m) = &r.metrics else { continue };
        w.serialize(TimingRow {
            scheme: r.scheme.as_str(),
            realization: r.realization,
            window: r.window,
            mean_scheduling_s: m.mean_scheduling_time().as_secs_f64(),
            mean_pricing_s: m.mean_pricing_time().as_secs_f64(),
            max_pricing_s: m.pricing_times.iter().max().copied().unwrap_or_default().as_secs_f64(),
        })?;
    }
    w.into_inner().map_err(|e| ExperimentError::Csv(e.into_error().into()))
}

#[derive(Serialize)]
struct Summary<'a> {
    name: &'a str,
    passed: bool,
    forward_lmp: &'a [f64],
    aggregates: &'a [Aggregate],
    verdicts: &'a [Verdict],
}

pub fn summary_json(report: &ExperimentReport) -> Result<String, ExperimentError> {
    Ok(serde_json::to_string_pretty(&Summary {
        name: &report.name,
        passed: report.passed(),
        forward_lmp: &report.forward_lmp,
        aggregates: &report.aggregates,
        verdicts: &report.verdicts,
    })?)
}

fn write_outputs(report: &ExperimentReport, dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Io { path: dir.display().to_string(), source })?;
    write_atomic(&dir.join("metrics.csv"), &metrics_csv(report)?)?;
    write_atomic(&dir.join("timing.csv"), &timing_csv(report)?)?;
    write_atomic(&dir.join("summary.json"), summary_json(report)?.as_bytes())
}

/// Human-readable table of the aggregates, one line per (scheme, window).
pub fn render_table(report: &ExperimentReport) -> String {
    let mut s = format!(
        "{:<11} {:>2} {:>15} {:>9} {:>9} {:>9} {:>12} {:>5} {:>5} {:>11}\n",
        "scheme", "W", "SS", "dSS%", "dESRS%", "dLOC%", "LOC", "viol", "miss", "pricing_s"
    );
    for a in &report.aggregates {
        let rel = |f: fn(&Relative) -> f64| a.relative.as_ref().map_or("-".to_string(), |r| format!("{:.2}", f(r)));
        s.push_str(&format!(
            "{:<11} {:>2} {:>15.2} {:>9} {:>9} {:>9} {:>12.2} {:>5} {:>5} {:>11.3e}\n",
            a.scheme.as_str(),
            a.window,
            a.ss,
            rel(|r| r.ss),
            rel(|r| r.esrs),
            rel(|r| r.total_loc),
            a.total_loc,
            a.violations,
            a.target_misses,
            a.pricing_time
        ));
    }
    for v in &report.verdicts {
        s.push_str(&format!("{} {}: {}\n", if v.passed { "PASS" } else { "FAIL" }, v.name, v.detail));
    }
    s
}
