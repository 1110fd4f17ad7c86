//! Multi-settlement ledger and the metrics computed from it.

pub mod cut;
pub mod metrics;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::forward::ForwardResult;
use crate::model::{Horizon, Resource};
use crate::realtime::RtTrace;

/// Participant id used for the (inelastic) load.
pub const LOAD: &str = "load";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarketId {
    Forward,
    /// Real-time market run number `s` (0-based, in clearing order).
    Rt(usize),
}

impl fmt::Display for MarketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarketId::Forward => f.write_str("forward"),
            MarketId::Rt(s) => write!(f, "rt-{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub market: MarketId,
    pub participant: String,
    pub period: usize,
    /// Settled energy, MWh: the full quantity in the forward market, the
    /// deviation from the previous market afterwards. Load is negative.
    pub quantity: f64,
    /// $/MWh
    pub price: f64,
    /// Payment received, $ (negative when paying).
    pub cashflow: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SettlementLedger {
    pub entries: Vec<LedgerEntry>,
}

impl SettlementLedger {
    pub fn cashflow_by_participant(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            *out.entry(e.participant.clone()).or_insert(0.0) += e.cashflow;
        }
        out
    }

    pub fn total_cashflow(&self, participant: &str) -> f64 {
        self.entries.iter().filter(|e| e.participant == participant).map(|e| e.cashflow).sum()
    }

    /// Largest |sum of settled quantities| over (market, period); zero when
    /// every market balances.
    pub fn max_market_imbalance(&self) -> f64 {
        let mut net: BTreeMap<(MarketId, usize), f64> = BTreeMap::new();
        for e in &self.entries {
            *net.entry((e.market, e.period)).or_insert(0.0) += e.quantity;
        }
        net.values().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn rt_entries(&self) -> impl Iterator<Item = &LedgerEntry> {
        self.entries.iter().filter(|e| e.market != MarketId::Forward)
    }
}

fn push_market(
    entries: &mut Vec<LedgerEntry>,
    previous: &mut [Vec<f64>],
    market: MarketId,
    period: usize,
    price: f64,
    quantities: impl Iterator<Item = (String, f64)>,
    dt: f64,
) {
    for (k, (participant, q)) in quantities.enumerate() {
        let deviation = (q - previous[period - 1][k]) * dt;
        previous[period - 1][k] = q;
        entries.push(LedgerEntry {
            market,
            participant,
            period,
            quantity: deviation,
            price,
            cashflow: price * deviation,
        });
    }
}

/// Settles the forward market and every real-time run in `trace`.
pub fn settle(
    resources: &[Resource],
    horizon: &Horizon,
    forward: &ForwardResult,
    trace: Option<&RtTrace>,
) -> SettlementLedger {
    let dt = horizon.period_hours;
    let n = resources.len();
    let mut previous = vec![vec![0.0; n + 1]; horizon.periods];
    let mut entries = Vec::new();
    let ids = || resources.iter().map(|r| r.id.clone()).chain(std::iter::once(LOAD.to_string()));
    for t in 1..=horizon.periods {
        let state = forward.outcome.state(t);
        let q = state.iter().map(|s| s.output).chain(std::iter::once(-forward.demand[t - 1]));
        push_market(&mut entries, &mut previous, MarketId::Forward, t, forward.outcome.lmp_at(t), ids().zip(q), dt);
    }
    if let Some(trace) = trace {
        for (s, rec) in trace.windows.iter().enumerate() {
            for (k, price) in rec.prices.iter().enumerate() {
                let t = rec.window.start + k;
                let q = rec.schedule[k].iter().map(|x| x.output).chain(std::iter::once(-rec.served[k]));
                push_market(&mut entries, &mut previous, MarketId::Rt(s), t, *price, ids().zip(q), dt);
            }
        }
    }
    SettlementLedger { entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::clear_forward;
    use crate::realtime::{run_rolling, RtConfig};

    fn system() -> (Vec<Resource>, Horizon) {
        (
            vec![
                Resource::thermal("a", 10.0, 0.0, 30.0).with_ramps(10.0, 10.0, 10.0),
                Resource::thermal("b", 40.0, 0.0, 50.0),
                Resource::storage("s", 25.0, 15.0, 10.0, 20.0, 10.0),
            ],
            Horizon::new(vec![20.0, 45.0, 35.0, 60.0, 30.0]),
        )
    }

    #[test]
    fn forward_only_ledger_balances() {
        let (rs, h) = system();
        let f = clear_forward(&rs, &h).unwrap();
        let ledger = settle(&rs, &h, &f, None);
        assert_eq!(ledger.entries.len(), 5 * 4);
        assert!(ledger.max_market_imbalance() < 1e-9);
        let total: f64 = ledger.cashflow_by_participant().values().sum();
        assert!(total.abs() < 1e-6);
    }

    #[test]
    fn perfect_forecast_rt_entries_vanish() {
        let (rs, h) = system();
        let f = clear_forward(&rs, &h).unwrap();
        let trace = run_rolling(&rs, &h, &f, &h.demand, &RtConfig { window: 2, ..RtConfig::default() }).unwrap();
        let ledger = settle(&rs, &h, &f, Some(&trace));
        assert!(ledger.rt_entries().all(|e| e.cashflow.abs() < 1e-6 && e.quantity.abs() < 1e-6));
    }

    #[test]
    fn cashflows_telescope() {
        let (rs, h) = system();
        let f = clear_forward(&rs, &h).unwrap();
        let realized = vec![22.0, 41.0, 38.0, 63.0, 27.0];
        let trace = run_rolling(&rs, &h, &f, &realized, &RtConfig { window: 3, ..RtConfig::default() }).unwrap();
        let ledger = settle(&rs, &h, &f, Some(&trace));
        assert!(ledger.max_market_imbalance() < 1e-9);
        for (i, r) in rs.iter().enumerate() {
            for t in 1..=h.periods {
                let mut prev = f.outcome.state(t)[i].output;
                let mut expected = f.outcome.lmp_at(t) * prev;
                for rec in &trace.windows {
                    if t >= rec.window.start && t - rec.window.start < rec.prices.len() {
                        let k = t - rec.window.start;
                        let q = rec.schedule[k][i].output;
                        expected += rec.prices[k] * (q - prev);
                        prev = q;
                    }
                }
                let got: f64 = ledger
                    .entries
                    .iter()
                    .filter(|e| e.participant == r.id && e.period == t)
                    .map(|e| e.cashflow)
                    .sum();
                assert!((got - expected).abs() < 1e-9);
                assert!((prev - trace.realized[t - 1][i].output).abs() < 1e-9);
            }
        }
    }
}
