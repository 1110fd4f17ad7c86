mod common;

use std::time::Duration;

use common::{case_a, grid_marginal, grid_oracle, IMPERFECT, PERFECT};
use market_core::forward::{clear_forward, marginal_identity, verify_at_prices, verify_competitive_equilibrium};
use market_core::model::{build_full_horizon, build_sp, initial_state, BuildOptions, Window};
use market_core::realtime::{perfect_information_run, run_rolling, RtConfig};
use market_core::settlement::settle;

const LMP: [f64; 8] = [10.0, 63.0, 63.0, 100.0, 100.0, 63.0, 63.0, 100.0];

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn oracle_agrees_with_merit_order_prices() {
    for t in 0..8 {
        let (left, right) = grid_marginal(&PERFECT, t);
        assert_eq!(left, LMP[t], "period {}", t + 1);
        assert_eq!(right, LMP[t], "period {}", t + 1);
    }
}

#[test]
fn forward_objective_matches_grid_oracle() {
    let (rs, h) = case_a();
    let (cost, _) = grid_oracle(&PERFECT);
    let f = clear_forward(&rs, &h).unwrap();
    assert!((f.outcome.objective - cost).abs() < 1e-6, "{} vs {cost}", f.outcome.objective);
    let (cost, _) = grid_oracle(&IMPERFECT.map(|d| d.round()));
    let rounded = h.with_demand(IMPERFECT.map(|d| d.round()).to_vec());
    let g = clear_forward(&rs, &rounded).unwrap();
    assert!((g.outcome.objective - cost).abs() < 1e-6);
}

#[test]
fn forward_prices_and_storage_schedule() {
    let (rs, h) = case_a();
    let f = clear_forward(&rs, &h).unwrap();
    assert!(close(f.lmp(), &LMP, 1e-6), "{:?}", f.lmp());
    let esr = f.outcome.net_output(3);
    assert!(close(&esr, &[-6.0, 0.0, 0.0, 0.0, 12.0, -12.0, 0.0, 12.0], 1e-6), "{esr:?}");
    assert!((f.outcome.soc(3)[0] - 12.0).abs() < 1e-9);
    // The SOC cap is worth something at t1.
    assert!(f.outcome.resource_duals["soc_max[esr@1]"] < -1e-6);
    for s in &f.outcome.schedule {
        assert!(s[3].charge * s[3].discharge < 1e-9);
    }
}

#[test]
fn tie_break_can_be_switched_off() {
    let (rs, h) = case_a();
    let off = BuildOptions { tie_break: false, ..BuildOptions::default() };
    let out = build_full_horizon(&rs, &h, off).unwrap().solve(Duration::from_secs(5)).unwrap();
    assert!(close(&out.lmp, &LMP, 1e-6));
    let on = clear_forward(&rs, &h).unwrap();
    assert!((out.objective - on.outcome.objective).abs() < 1e-6);
}

#[test]
fn forward_equilibrium_and_marginal_identity() {
    let (rs, h) = case_a();
    let f = clear_forward(&rs, &h).unwrap();
    let rep = verify_competitive_equilibrium(&rs, &h, &f).unwrap();
    assert!(rep.passed, "{rep:?}");
    let checks = marginal_identity(&rs, &h, &f);
    assert!(!checks.is_empty());
    for c in checks {
        assert!(c.residual() < 1e-6, "{c:?}");
    }
    // Raising the t5 price makes gen3 want its full capacity there.
    let mut bumped = LMP.to_vec();
    bumped[4] += 1.0;
    let rep = verify_at_prices(&rs, &h, &f, &bumped).unwrap();
    let gap = |id: &str| rep.gaps.iter().find(|g| g.resource == id).unwrap().gap;
    assert!(gap("gen3") > 1e-6);
    assert!(gap("esr").abs() < 1e-6);
}

#[test]
fn first_block_schedule_matches_forward() {
    let (rs, h) = case_a();
    let f = clear_forward(&rs, &h).unwrap();
    let w = Window::new(1, 3, 8).unwrap();
    let sp = build_sp(&rs, &h, &w, &initial_state(&rs), Some(f.outcome.state(4)), &PERFECT[..3], BuildOptions::default())
        .unwrap()
        .solve(Duration::from_secs(5))
        .unwrap();
    assert!(sp.max_schedule_diff(&f.outcome) < 1e-6);
}

#[test]
fn perfect_forecast_rolling_run_reproduces_forward() {
    let (rs, h) = case_a();
    let f = clear_forward(&rs, &h).unwrap();
    for cfg in [RtConfig::blocks(3), RtConfig { window: 3, ..RtConfig::default() }] {
        let trace = run_rolling(&rs, &h, &f, &PERFECT, &cfg).unwrap();
        assert!(close(&trace.lmp, &LMP, 1e-6), "{:?}", trace.lmp);
        for (t, s) in trace.realized.iter().enumerate() {
            for (a, b) in s.iter().zip(f.outcome.state(t + 1)) {
                assert!(a.max_abs_diff(b) < 1e-6);
            }
        }
        let ledger = settle(&rs, &h, &f, Some(&trace));
        assert!(ledger.rt_entries().all(|e| e.cashflow.abs() < 1e-6));
    }
}

#[test]
fn imperfect_forecast_prices_hold_and_match_perfect_information() {
    let (rs, h) = case_a();
    let f = clear_forward(&rs, &h).unwrap();
    let trace = run_rolling(&rs, &h, &f, &IMPERFECT, &RtConfig::blocks(3)).unwrap();
    assert!(close(&trace.lmp, &LMP, 1e-6), "{:?}", trace.lmp);
    assert!(trace.reoptimizations > 0);
    let plain = RtConfig { reoptimize: false, ..RtConfig::blocks(3) };
    let unguided = run_rolling(&rs, &h, &f, &IMPERFECT, &plain).unwrap();
    assert_eq!(unguided.reoptimizations, 0);
    assert!(close(&unguided.lmp, &LMP, 1e-6), "{:?}", unguided.lmp);
    let pi = perfect_information_run(&rs, &h, &IMPERFECT).unwrap();
    assert!(close(&pi.lmp, &LMP, 1e-6), "{:?}", pi.lmp);
    for (t, s) in trace.realized.iter().enumerate() {
        for (a, b) in s.iter().zip(pi.state(t + 1)) {
            assert!(a.max_abs_diff(b) < 1e-6, "t{} {a:?} {b:?}", t + 1);
        }
    }
    for (a, b) in trace.realized.iter().zip(&unguided.realized) {
        assert!(a[3].max_abs_diff(&b[3]) < 1e-6);
    }
    let esr: Vec<f64> = trace.realized.iter().map(|s| s[3].output).collect();
    let fwd = f.outcome.net_output(3);
    let moved: Vec<usize> = (0..8).filter(|&k| (esr[k] - fwd[k]).abs() > 1e-6).map(|k| k + 1).collect();
    assert_eq!(moved, vec![4, 5], "{esr:?}");
    let ledger = settle(&rs, &h, &f, Some(&trace));
    let t4 = ledger
        .rt_entries()
        .filter(|e| e.participant == "esr" && e.period == 4)
        .map(|e| e.cashflow)
        .sum::<f64>();
    assert!((t4 - LMP[3] * (esr[3] - fwd[3])).abs() < 1e-6);
}
