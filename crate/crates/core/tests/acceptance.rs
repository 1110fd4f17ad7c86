//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

mod common;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use common::{case_a, grid_marginal, grid_oracle, IMPERFECT, PERFECT};
use market_core::experiment::{run_experiment, ExperimentReport};
use market_core::forward::{clear_forward, marginal_identity, verify_competitive_equilibrium};
use market_core::realtime::{perfect_information_run, run_rolling, RtConfig};
use market_core::scenario::{load_scenario, random_system};
use market_core::schemes::SchemeId;
use market_core::verify::{verify_system, VerifyOptions};

const TOL: f64 = 1e-6;
const LMP: [f64; 8] = [10.0, 63.0, 63.0, 100.0, 100.0, 63.0, 63.0, 100.0];
const ESR: [f64; 8] = [-6.0, 0.0, 0.0, 0.0, 12.0, -12.0, 0.0, 12.0];

type Outcome = Result<String, String>;

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn ensure(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn case_a_perfect() -> Outcome {
    let (rs, h) = case_a();
    let start = Instant::now();
    let f = clear_forward(&rs, &h).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let d = max_diff(f.lmp(), &LMP);
    ensure(d <= TOL, format!("LMP {:?} off by {d:.2e}", f.lmp()))?;
    let (cost, _) = grid_oracle(&PERFECT);
    ensure((f.outcome.objective - cost).abs() <= TOL, format!("objective {} vs grid {cost}", f.outcome.objective))?;
    for t in 0..8 {
        let (left, right) = grid_marginal(&PERFECT, t);
        ensure(left <= LMP[t] + TOL && LMP[t] <= right + TOL, format!("grid marginals at t{} are {left}, {right}", t + 1))?;
    }
    let esr = f.outcome.net_output(3);
    let d = max_diff(&esr, &ESR);
    ensure(d <= TOL, format!("ESR {esr:?}"))?;
    ensure((f.outcome.soc(3)[0] - 12.0).abs() <= TOL, "SOC after t1 is not 12".into())?;
    ensure(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"))?;
    Ok(format!("LMP and ESR schedule match; grid objective {cost}; {elapsed:?}"))
}

fn random_consistency() -> Outcome {
    let start = Instant::now();
    let (mut sched, mut price, mut loc) = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..50 {
        let (rs, h) = random_system(seed);
        if rs.len() > 10 || h.periods > 12 {
            return Err(format!("system {seed} too large"));
        }
        let window = 1 + seed as usize % h.periods.min(4);
        let rt = RtConfig { window, stride: 1 + seed as usize % window, ..RtConfig::default() };
        let rep = verify_system(&rs, &h, &VerifyOptions { rt, cut_samples: 0, ..VerifyOptions::default() })
            .map_err(|e| format!("system {seed}: {e}"))?;
        sched = sched.max(rep.get("schedule_consistency").unwrap().worst);
        price = price.max(rep.get("price_consistency").unwrap().worst);
        loc = loc.max(rep.get("zero_lost_opportunity_cost").unwrap().worst);
    }
    let elapsed = start.elapsed();
    let detail = format!("max dispatch diff {sched:.2e}, price diff {price:.2e}, LOC {loc:.2e}; {elapsed:?}");
    ensure(sched <= TOL && price <= TOL && loc <= TOL && elapsed < Duration::from_secs(120), detail.clone())?;
    Ok(detail)
}

fn case_a_imperfect() -> Outcome {
    let (rs, h) = case_a();
    let f = clear_forward(&rs, &h).map_err(|e| e.to_string())?;
    let trace = run_rolling(&rs, &h, &f, &IMPERFECT, &RtConfig::blocks(3)).map_err(|e| e.to_string())?;
    let dp = max_diff(&trace.lmp, f.lmp());
    let pi = perfect_information_run(&rs, &h, &IMPERFECT).map_err(|e| e.to_string())?;
    let dx = trace
        .realized
        .iter()
        .enumerate()
        .flat_map(|(k, s)| s.iter().zip(pi.state(k + 1)).map(|(a, b)| a.max_abs_diff(b)))
        .fold(0.0, f64::max);
    let detail = format!("price diff {dp:.2e}, dispatch vs perfect information {dx:.2e}, {} re-optimizations", trace.reoptimizations);
    ensure(dp <= TOL && dx <= TOL, detail.clone())?;
    Ok(detail)
}

fn equilibrium() -> Outcome {
    let mut systems = vec![case_a()];
    systems.extend((0..50).map(random_system));
    let (mut gap, mut resid, mut checks) = (0.0f64, 0.0f64, 0usize);
    for (k, (rs, h)) in systems.iter().enumerate() {
        let f = clear_forward(rs, h).map_err(|e| format!("system {k}: {e}"))?;
        let rep = verify_competitive_equilibrium(rs, h, &f).map_err(|e| e.to_string())?;
        ensure(rep.passed, format!("system {k}: {:?}", rep.gaps))?;
        gap = rep.gaps.iter().map(|g| g.gap.abs()).fold(gap, f64::max);
        for c in marginal_identity(rs, h, &f) {
            resid = resid.max(c.residual());
            checks += 1;
        }
    }
    let detail = format!("51 systems, max profit gap {gap:.2e}; {checks} marginal pairs, max residual {resid:.2e}");
    ensure(gap <= TOL && resid <= TOL, detail.clone())?;
    Ok(detail)
}

fn lower_cut() -> Outcome {
    let (rs, h) = case_a();
    let opts = VerifyOptions { realized: Some(IMPERFECT.to_vec()), cut_samples: 8, seed: 11, ..VerifyOptions::default() };
    let rep = verify_system(&rs, &h, &opts).map_err(|e| e.to_string())?;
    let mut samples = rep.cut_samples;
    let mut worst = rep.get("lower_cut").unwrap().worst;
    let mut eps = verify_system(&rs, &h, &VerifyOptions { cut_samples: 2, ..VerifyOptions::default() })
        .map_err(|e| e.to_string())?
        .get("cut_tight_at_forward")
        .unwrap()
        .worst;
    for seed in 0..10 {
        let (rs, h) = random_system(1000 + seed);
        let realized: Vec<f64> = h.demand.iter().enumerate().map(|(t, d)| d * (1.0 + 0.04 * ((t % 3) as f64 - 1.0))).collect();
        let opts = VerifyOptions { realized: Some(realized), cut_samples: 3, seed, ..VerifyOptions::default() };
        let rep = verify_system(&rs, &h, &opts).map_err(|e| e.to_string())?;
        samples += rep.cut_samples;
        worst = worst.max(rep.get("lower_cut").unwrap().worst);
        let tight = verify_system(&rs, &h, &VerifyOptions { cut_samples: 1, seed, ..VerifyOptions::default() })
            .map_err(|e| e.to_string())?;
        eps = eps.max(tight.get("cut_tight_at_forward").unwrap().worst);
    }
    let detail = format!("{samples} boundaries, worst cut excess {worst:.2e}, |epsilon| at accurate forecast {eps:.2e}");
    ensure(samples >= 100 && worst <= TOL && eps <= TOL, detail.clone())?;
    Ok(detail)
}

fn verdict(report: &ExperimentReport, name: &str) -> Result<String, String> {
    let v = report.verdicts.iter().find(|v| v.name == name).ok_or(format!("no `{name}` verdict"))?;
    ensure(v.passed, format!("{name}: {}", v.detail))?;
    Ok(v.detail.clone())
}

fn case_b(report: &ExperimentReport, elapsed: Duration) -> Outcome {
    verdict(report, "runs_completed")?;
    let ss = verdict(report, "surplus_proposed_above_myopic")?;
    let loc = verdict(report, "loc_ordering")?;
    let miss = verdict(report, "myopic_misses_target")?;
    let my = report.aggregate(SchemeId::Myopic, 2).ok_or("no myopic runs")?;
    ensure(my.runs == 25 && my.target_misses >= 24, format!("myopic missed target in {} of {}", my.target_misses, my.runs))?;
    let pr = report.aggregate(SchemeId::Proposed, 2).ok_or("no proposed runs")?;
    ensure(pr.violations == 0, format!("proposed has {} violations", pr.violations))?;
    ensure(elapsed < Duration::from_secs(600), format!("took {elapsed:?}"))?;
    Ok(format!("{ss}; {loc}; myopic misses target in {miss}; proposed violations 0; {elapsed:?}"))
}

fn window_sweep(report: &ExperimentReport) -> Outcome {
    let mut prev = f64::INFINITY;
    let mut parts = Vec::new();
    for w in 1..=4 {
        let a = report.aggregate(SchemeId::Proposed, w).ok_or(format!("no proposed runs at W={w}"))?;
        ensure(a.total_loc <= prev, format!("LOC rises at W={w}: {:.2} > {prev:.2}", a.total_loc))?;
        ensure(a.violations == 0, format!("{} violations at W={w}", a.violations))?;
        prev = a.total_loc;
        parts.push(format!("W={w} {:.2}", a.total_loc));
    }
    Ok(format!("proposed LOC {}; no violations", parts.join(", ")))
}

fn pricing_times(report: &ExperimentReport) -> Outcome {
    let order = [SchemeId::Myopic, SchemeId::Proposed, SchemeId::Hua, SchemeId::Hogan];
    let times: Vec<f64> = order
        .iter()
        .map(|&s| report.aggregate(s, 2).map(|a| a.pricing_time).ok_or(format!("no {s} runs")))
        .collect::<Result<_, _>>()?;
    let detail = order.iter().zip(&times).map(|(s, t)| format!("{s} {t:.2e}s")).collect::<Vec<_>>().join(" <= ");
    ensure(times.windows(2).all(|w| w[0] <= w[1]), detail.clone())?;
    Ok(detail)
}

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, outcome: Outcome| {
        match outcome {
            Ok(d) => println!("PASS criterion {n} ({name}): {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}): {d}");
            }
        }
    };
    report(1, "case A perfect forecast", case_a_perfect());
    report(2, "schedule and price consistency on 50 random systems", random_consistency());
    report(3, "case A imperfect forecast", case_a_imperfect());
    report(4, "competitive equilibrium and marginal identity", equilibrium());
    report(5, "lower cut", lower_cut());

    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/case_b_synthetic.json");
    let start = Instant::now();
    let experiment = load_scenario(&path)
        .map_err(|e| e.to_string())
        .and_then(|sc| run_experiment(&sc, None).map_err(|e| e.to_string()));
    let elapsed = start.elapsed();
    match experiment {
        Ok(rep) => {
            report(6, "synthetic day scheme comparison", case_b(&rep, elapsed));
            report(7, "window sweep", window_sweep(&rep));
            report(8, "pricing solve time ordering", pricing_times(&rep));
        }
        Err(e) => {
            for (n, name) in [(6, "synthetic day scheme comparison"), (7, "window sweep"), (8, "pricing solve time ordering")] {
                report(n, name, Err(e.clone()));
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
