//! `market`: clear forward markets, run real-time schemes and experiments
//! from scenario files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use market_core::experiment::{render_table, run_experiment, summary_json};
use market_core::forward::{clear_forward, ForwardResult};
use market_core::scenario::{load_scenario, Realization, ScenarioFile};
use market_core::schemes::{run_scheme, SchemeConfig, SchemeId};
use market_core::settlement::metrics::metrics_report;
use market_core::verify::{verify_system, VerifyOptions};

#[derive(Parser)]
#[command(name = "market", version, about = "Multi-period electricity market clearing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clear the full-horizon forward market of a scenario.
    ClearForward {
        #[command(flatten)]
        common: Common,
    },
    /// Run one pricing scheme against one realization.
    RunRt {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "proposed")]
        scheme: SchemeId,
        /// 0-based realization index.
        #[arg(long, default_value_t = 0)]
        realization: usize,
        /// Reuse a forward result written by `clear-forward --out`.
        #[arg(long)]
        forward: Option<PathBuf>,
    },
    /// Run every scheme, realization and window of a scenario.
    RunExperiment {
        #[command(flatten)]
        common: Common,
        /// Restrict to these schemes.
        #[arg(long)]
        scheme: Vec<SchemeId>,
    },
    /// Check equilibrium, consistency and lower-cut guarantees on a scenario.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Realization used for the lower-cut check; forecast when omitted.
        #[arg(long)]
        realization: Option<usize>,
        /// Sampled boundaries per cut period.
        #[arg(long, default_value_t = 4)]
        samples: usize,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    scenario: PathBuf,
    /// Window length; replaces the scenario's window sweep.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    /// Seed of the realization generator (or of boundary sampling for `verify`).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Output file (a directory for `run-experiment`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

/// Bad input: reported with exit code 2.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn load(common: &Common) -> anyhow::Result<ScenarioFile> {
    let mut sc = load_scenario(&common.scenario).map_err(|e| config(e.to_string()))?;
    if let Some(w) = common.window {
        sc.rt.window = w;
        sc.rt.stride = sc.rt.stride.min(w);
        sc.windows = vec![w];
    }
    if let Some(s) = common.stride {
        sc.rt.stride = s;
    }
    if let (Some(seed), Realization::Generator(g)) = (common.seed, &mut sc.realization) {
        g.seed = seed;
    }
    sc.validate().map_err(|e| config(e.to_string()))?;
    Ok(sc)
}

fn emit(common: &Common, text: &str, json: impl FnOnce() -> anyhow::Result<String>) -> anyhow::Result<()> {
    let body = match common.format {
        Format::Text => text.to_string(),
        Format::Json => json()?,
    };
    match &common.out {
        Some(path) => std::fs::write(path, body).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{body}");
            if common.format == Format::Json {
                println!();
            }
            Ok(())
        }
    }
}

fn fmt_series(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ")
}

fn clear_forward_cmd(common: &Common) -> anyhow::Result<bool> {
    let sc = load(common)?;
    let f = clear_forward(&sc.resources, &sc.horizon)?;
    let mut text = format!("objective {:.6}\nlmp {}\n", f.outcome.objective, fmt_series(f.lmp()));
    for (i, r) in sc.resources.iter().enumerate() {
        text.push_str(&format!("{} {}\n", r.id, fmt_series(&f.outcome.net_output(i))));
    }
    emit(common, &text, || Ok(f.to_json()?))?;
    Ok(true)
}

fn read_forward(path: &Path, sc: &ScenarioFile) -> anyhow::Result<ForwardResult> {
    let text = std::fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
    let f = ForwardResult::from_json(&text).map_err(|e| config(format!("{}: {e}", path.display())))?;
    let shape_ok = f.outcome.schedule.len() == sc.horizon.periods
        && f.outcome.schedule.iter().all(|s| s.len() == sc.resources.len());
    if !shape_ok {
        bail!(config(format!("{}: forward result does not match the scenario's periods and resources", path.display())));
    }
    Ok(f)
}

fn run_rt_cmd(common: &Common, scheme: SchemeId, k: usize, forward: Option<&Path>) -> anyhow::Result<bool> {
    let sc = load(common)?;
    let realizations = sc.realizations();
    let Some(realized) = realizations.get(k) else {
        bail!(config(format!("realization {k} out of range ({} available)", realizations.len())));
    };
    let f = match forward {
        Some(p) => read_forward(p, &sc)?,
        None => clear_forward(&sc.resources, &sc.horizon)?,
    };
    let cfg = SchemeConfig { rt: market_core::realtime::RtConfig { value_of_load: sc.value_of_load, ..sc.rt }, hogan_fix_past: sc.hogan_fix_past };
    let trace = run_scheme(scheme, &sc.resources, &sc.horizon, &f, realized, &cfg)?;
    let m = metrics_report(&sc.resources, &sc.horizon, &f, &trace, sc.value_of_load)?;
    let mut text = format!("scheme {scheme} W={} stride={}\nlmp {}\n", sc.rt.window, sc.rt.stride, fmt_series(&trace.lmp));
    for (i, r) in sc.resources.iter().enumerate() {
        let x: Vec<f64> = trace.realized.iter().map(|s| s[i].output).collect();
        text.push_str(&format!("{} {}\n", r.id, fmt_series(&x)));
    }
    let s = m.surpluses;
    text.push_str(&format!(
        "SS {:.2} PS {:.2} CS {:.2} ESRS {:.2}\nLOC {:.2} (storage {:.2})\nviolations {} reoptimizations {}\n",
        s.ss, s.ps, s.cs, s.esrs, m.total_loc, m.storage_loc, m.violations, m.reoptimizations
    ));
    emit(common, &text, || Ok(serde_json::to_string_pretty(&serde_json::json!({ "trace": trace, "metrics": m }))?))?;
    Ok(true)
}

fn run_experiment_cmd(common: &Common, schemes: &[SchemeId]) -> anyhow::Result<bool> {
    let mut sc = load(common)?;
    if !schemes.is_empty() {
        sc.schemes = schemes.to_vec();
    }
    let report = run_experiment(&sc, common.out.as_deref())?;
    match common.format {
        Format::Text => print!("{}", render_table(&report)),
        Format::Json => println!("{}", summary_json(&report)?),
    }
    Ok(report.passed())
}

fn verify_cmd(common: &Common, realization: Option<usize>, samples: usize) -> anyhow::Result<bool> {
    let sc = load(common)?;
    let realized = match realization {
        Some(k) => Some(
            sc.realizations()
                .get(k)
                .cloned()
                .ok_or_else(|| config(format!("realization {k} out of range")))?,
        ),
        None => None,
    };
    let options = VerifyOptions { rt: sc.rt, realized, cut_samples: samples, seed: common.seed.unwrap_or(0) };
    let rep = verify_system(&sc.resources, &sc.horizon, &options)?;
    let mut text = String::new();
    for c in &rep.checks {
        text.push_str(&format!("{} {} worst {:.3e} {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.worst, c.detail));
    }
    emit(common, &text, || Ok(serde_json::to_string_pretty(&rep)?))?;
    Ok(rep.passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::ClearForward { common } => clear_forward_cmd(common),
        Command::RunRt { common, scheme, realization, forward } => run_rt_cmd(common, *scheme, *realization, forward.as_deref()),
        Command::RunExperiment { common, scheme } => run_experiment_cmd(common, scheme),
        Command::Verify { common, realization, samples } => verify_cmd(common, *realization, *samples),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.is::<ConfigError>() { 2 } else { 1 })
        }
    }
}
