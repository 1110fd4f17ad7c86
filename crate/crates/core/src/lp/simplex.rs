//! Bounded-variable primal simplex on a dense tableau.
//!
//! Singleton rows are folded into variable bounds and rows that share a
//! coefficient pattern (ramp up/down pairs) are merged into one ranged row
//! before the tableau is built. Every remaining row `i` becomes
//! `a_i x - s_i = 0` with the slack bounded by the row's range, so the slack
//! columns double as `-B^{-1}` and duals come straight out of the tableau.
//!
//! Phase I minimises a sum of artificials, phase II the primary objective and,
//! when the program carries one, phase III minimises the secondary objective
//! over columns whose primary reduced cost is zero. Phase III never changes
//! primary reduced costs, so the reported duals are those of an optimal basis
//! of the primary problem.

use std::collections::HashMap;
use std::time::Instant;

use super::{LinearProgram, LpSolution, LpStatus, Sense, SolveOptions};

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const TIE_TOL: f64 = 1e-8;
const DROP_TOL: f64 = 1e-13;
const DEGENERATE_STREAK: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
enum BoundSource {
    Declared,
    /// Bound implied by a singleton row with the given coefficient.
    Row { con: usize, coef: f64 },
}

#[derive(Debug, Clone)]
struct RangedRow {
    coeffs: Vec<(usize, f64)>,
    lo: f64,
    hi: f64,
    /// Original rows supplying the lower/upper side, with the factor mapping
    /// internal coefficients back to original ones.
    lo_src: Option<(usize, f64)>,
    hi_src: Option<(usize, f64)>,
}

struct Presolved {
    lower: Vec<f64>,
    upper: Vec<f64>,
    lower_src: Vec<BoundSource>,
    upper_src: Vec<BoundSource>,
    rows: Vec<RangedRow>,
    infeasible: bool,
}

fn presolve(lp: &LinearProgram) -> Presolved {
    let n = lp.num_variables();
    let mut lower: Vec<f64> = lp.variables().iter().map(|v| v.lower).collect();
    let mut upper: Vec<f64> = lp.variables().iter().map(|v| v.upper).collect();
    let mut lower_src = vec![BoundSource::Declared; n];
    let mut upper_src = vec![BoundSource::Declared; n];
    let mut rows: Vec<RangedRow> = Vec::new();
    let mut by_pattern: HashMap<Vec<(usize, u64)>, usize> = HashMap::new();
    let mut infeasible = false;

    for (ci, con) in lp.constraints().iter().enumerate() {
        let mut coeffs: Vec<(usize, f64)> = con.coeffs.clone();
        coeffs.sort_by_key(|&(j, _)| j);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
        for (j, a) in coeffs {
            match merged.last_mut() {
                Some((k, b)) if *k == j => *b += a,
                _ => merged.push((j, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);

        let (lo, hi) = match con.sense {
            Sense::Le => (f64::NEG_INFINITY, con.rhs),
            Sense::Ge => (con.rhs, f64::INFINITY),
            Sense::Eq => (con.rhs, con.rhs),
        };

        match merged.len() {
            0 => {
                if lo > FEAS_TOL || hi < -FEAS_TOL {
                    infeasible = true;
                }
            }
            1 => {
                let (j, a) = merged[0];
                let (vlo, vhi) = if a > 0.0 { (lo / a, hi / a) } else { (hi / a, lo / a) };
                let src = BoundSource::Row { con: ci, coef: a };
                if vlo > lower[j] {
                    lower[j] = vlo;
                    lower_src[j] = src;
                }
                if vhi < upper[j] {
                    upper[j] = vhi;
                    upper_src[j] = src;
                }
            }
            _ => {
                let sigma = if merged[0].1 > 0.0 { 1.0 } else { -1.0 };
                let normalized: Vec<(usize, f64)> =
                    merged.iter().map(|&(j, a)| (j, a * sigma)).collect();
                let (lo, hi) = if sigma > 0.0 { (lo, hi) } else { (-hi, -lo) };
                let key: Vec<(usize, u64)> =
                    normalized.iter().map(|&(j, a)| (j, a.to_bits())).collect();
                let src = Some((ci, sigma));
                match by_pattern.get(&key) {
                    Some(&ri) => {
                        let row = &mut rows[ri];
                        if lo > row.lo {
                            row.lo = lo;
                            row.lo_src = src;
                        }
                        if hi < row.hi {
                            row.hi = hi;
                            row.hi_src = src;
                        }
                    }
                    None => {
                        by_pattern.insert(key, rows.len());
                        rows.push(RangedRow {
                            coeffs: normalized,
                            lo,
                            hi,
                            lo_src: if lo.is_finite() { src } else { None },
                            hi_src: if hi.is_finite() { src } else { None },
                        });
                    }
                }
            }
        }
    }
    for j in 0..n {
        if lower[j] > upper[j] + FEAS_TOL * (1.0 + upper[j].abs()) {
            infeasible = true;
        } else if lower[j] > upper[j] {
            upper[j] = lower[j];
        }
    }
    for row in &mut rows {
        if row.lo > row.hi + FEAS_TOL * (1.0 + row.hi.abs()) {
            infeasible = true;
        } else if row.lo > row.hi {
            row.hi = row.lo;
        }
    }
    Presolved { lower, upper, lower_src, upper_src, rows, infeasible }
}

enum Outcome {
    Optimal,
    Unbounded,
    Limit,
}

struct Tableau {
    m: usize,
    ncol: usize,
    /// Row-major `B^{-1} A` over structural, slack and artificial columns.
    t: Vec<f64>,
    basis: Vec<usize>,
    row_of: Vec<Option<usize>>,
    x: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    iterations: usize,
    scratch: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.ncol + j]
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.lo[j] == self.hi[j]
    }

    /// Direction in which nonbasic column `j` may profitably move, if any.
    fn improving_direction(&self, j: usize, dj: f64) -> Option<f64> {
        if self.row_of[j].is_some() || self.is_fixed(j) {
            return None;
        }
        let x = self.x[j];
        let at_lo = x <= self.lo[j];
        let at_hi = x >= self.hi[j];
        if dj < -OPT_TOL && !at_hi {
            Some(1.0)
        } else if dj > OPT_TOL && !at_lo {
            Some(-1.0)
        } else {
            None
        }
    }

    fn pivot(&mut self, r: usize, q: usize, costs: &mut [&mut Vec<f64>]) {
        let ncol = self.ncol;
        let p = self.t[r * ncol + q];
        let inv = 1.0 / p;
        self.scratch.clear();
        {
            let row = &mut self.t[r * ncol..(r + 1) * ncol];
            for (k, v) in row.iter_mut().enumerate() {
                if *v != 0.0 {
                    *v *= inv;
                    if v.abs() < DROP_TOL {
                        *v = 0.0;
                    } else {
                        self.scratch.push(k);
                    }
                }
            }
            row[q] = 1.0;
        }
        let (before, rest) = self.t.split_at_mut(r * ncol);
        let (pivot_row, after) = rest.split_at_mut(ncol);
        let nz = &self.scratch;
        let eliminate = |row: &mut [f64]| {
            let f = row[q];
            if f != 0.0 {
                for &k in nz {
                    let v = row[k] - f * pivot_row[k];
                    row[k] = if v.abs() < DROP_TOL { 0.0 } else { v };
                }
                row[q] = 0.0;
            }
        };
        for row in before.chunks_exact_mut(ncol) {
            eliminate(row);
        }
        for row in after.chunks_exact_mut(ncol) {
            eliminate(row);
        }
        for d in costs.iter_mut() {
            let f = d[q];
            if f != 0.0 {
                for &k in nz {
                    d[k] -= f * pivot_row[k];
                }
                d[q] = 0.0;
            }
        }
        let leaving = self.basis[r];
        self.row_of[leaving] = None;
        self.basis[r] = q;
        self.row_of[q] = Some(r);
    }

    /// Runs primal simplex iterations on reduced-cost vector `tracked[0]`,
    /// keeping the remaining vectors in `tracked` consistent.
    fn optimize(
        &mut self,
        tracked: &mut [&mut Vec<f64>],
        eligible: &dyn Fn(usize, &[&mut Vec<f64>]) -> bool,
        deadline: &Deadline,
    ) -> Outcome {
        let mut degenerate = 0usize;
        let mut column = vec![0.0; self.m];
        loop {
            if deadline.expired(self.iterations) {
                return Outcome::Limit;
            }
            let bland = degenerate > DEGENERATE_STREAK;

            // Pricing.
            let mut entering: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..self.ncol {
                let dj = tracked[0][j];
                if dj.abs() <= OPT_TOL {
                    continue;
                }
                let Some(dir) = self.improving_direction(j, dj) else { continue };
                if !eligible(j, tracked) {
                    continue;
                }
                if bland {
                    entering = Some((j, dir));
                    break;
                }
                if dj.abs() > best {
                    best = dj.abs();
                    entering = Some((j, dir));
                }
            }
            let Some((q, dir)) = entering else { return Outcome::Optimal };

            for (i, c) in column.iter_mut().enumerate() {
                *c = self.at(i, q);
            }

            // Ratio test: basic i moves at rate alpha_i = -T_iq * dir.
            let range = self.hi[q] - self.lo[q];
            let mut theta_max = f64::INFINITY;
            for (i, &tiq) in column.iter().enumerate() {
                if tiq.abs() <= PIVOT_TOL {
                    continue;
                }
                let b = self.basis[i];
                let alpha = -tiq * dir;
                let bound = if alpha < 0.0 { self.lo[b] } else { self.hi[b] };
                if !bound.is_finite() {
                    continue;
                }
                let slack_tol = if bland { 0.0 } else { FEAS_TOL };
                let ratio = ((bound - self.x[b]).abs() + slack_tol) / alpha.abs();
                if ratio < theta_max {
                    theta_max = ratio;
                }
            }
            if theta_max == f64::INFINITY && !range.is_finite() {
                return Outcome::Unbounded;
            }

            let mut leave: Option<usize> = None;
            let mut theta;
            if range.is_finite() && range <= theta_max {
                theta = range;
            } else {
                let mut best_alpha = 0.0;
                theta = f64::INFINITY;
                for (i, &tiq) in column.iter().enumerate() {
                    if tiq.abs() <= PIVOT_TOL {
                        continue;
                    }
                    let b = self.basis[i];
                    let alpha = -tiq * dir;
                    let bound = if alpha < 0.0 { self.lo[b] } else { self.hi[b] };
                    if !bound.is_finite() {
                        continue;
                    }
                    let ratio = ((bound - self.x[b]) / alpha).max(0.0);
                    if ratio > theta_max {
                        continue;
                    }
                    let better = if bland {
                        ratio < theta - 1e-12
                            || (ratio <= theta + 1e-12 && leave.is_some_and(|l| b < self.basis[l]))
                    } else {
                        alpha.abs() > best_alpha
                    };
                    if leave.is_none() || better {
                        best_alpha = alpha.abs();
                        theta = ratio;
                        leave = Some(i);
                    }
                }
            }

            self.iterations += 1;
            if theta <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }

            // Move along the edge.
            if theta > 0.0 {
                self.x[q] += dir * theta;
                for (i, &tiq) in column.iter().enumerate() {
                    if tiq != 0.0 {
                        let b = self.basis[i];
                        self.x[b] -= tiq * dir * theta;
                    }
                }
            }
            match leave {
                None => {
                    self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                }
                Some(r) => {
                    let b = self.basis[r];
                    let alpha = -column[r] * dir;
                    self.x[b] = if alpha < 0.0 { self.lo[b] } else { self.hi[b] };
                    self.pivot(r, q, tracked);
                }
            }
        }
    }

    /// Recomputes basic values from the nonbasic ones.
    fn refresh_basics(&mut self) {
        for i in 0..self.m {
            let row = &self.t[i * self.ncol..(i + 1) * self.ncol];
            let b = self.basis[i];
            let mut v = 0.0;
            for (j, &tij) in row.iter().enumerate() {
                if tij != 0.0 && j != b {
                    v -= tij * self.x[j];
                }
            }
            self.x[b] = v;
        }
    }

    fn reduced_costs(&self, costs: &[f64]) -> Vec<f64> {
        let mut d = costs.to_vec();
        for i in 0..self.m {
            let cb = costs[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.ncol..(i + 1) * self.ncol];
                for (dj, &tij) in d.iter_mut().zip(row) {
                    if tij != 0.0 {
                        *dj -= cb * tij;
                    }
                }
            }
        }
        for &b in &self.basis {
            d[b] = 0.0;
        }
        d
    }
}

struct Deadline {
    start: Instant,
    limit: std::time::Duration,
    max_iterations: usize,
}

impl Deadline {
    fn expired(&self, iterations: usize) -> bool {
        if iterations >= self.max_iterations {
            return true;
        }
        iterations.is_multiple_of(64) && self.start.elapsed() > self.limit
    }
}

pub(super) fn solve(lp: &LinearProgram, options: &SolveOptions) -> LpSolution {
    let start = Instant::now();
    let n = lp.num_variables();
    let nrows = lp.num_constraints();
    let failed = |status: LpStatus, iterations: usize| LpSolution {
        status,
        objective: f64::NAN,
        primal: vec![f64::NAN; n],
        duals: vec![f64::NAN; nrows],
        reduced_costs: vec![f64::NAN; n],
        iterations,
        wall_time: start.elapsed(),
    };

    let pre = presolve(lp);
    if pre.infeasible {
        return failed(LpStatus::Infeasible, 0);
    }
    let m = pre.rows.len();

    // Initial nonbasic point.
    let mut x0 = vec![0.0; n];
    for j in 0..n {
        x0[j] = if pre.lower[j].is_finite() {
            pre.lower[j]
        } else if pre.upper[j].is_finite() {
            pre.upper[j]
        } else {
            0.0
        };
    }
    let activity: Vec<f64> = pre
        .rows
        .iter()
        .map(|r| r.coeffs.iter().map(|&(j, a)| a * x0[j]).sum())
        .collect();
    let needs_art: Vec<bool> = pre
        .rows
        .iter()
        .zip(&activity)
        .map(|(r, &act)| act < r.lo - FEAS_TOL || act > r.hi + FEAS_TOL)
        .collect();
    let n_art = needs_art.iter().filter(|&&b| b).count();
    let ncol = n + m + n_art;

    let mut tab = Tableau {
        m,
        ncol,
        t: vec![0.0; m * ncol],
        basis: vec![0; m],
        row_of: vec![None; ncol],
        x: vec![0.0; ncol],
        lo: vec![0.0; ncol],
        hi: vec![0.0; ncol],
        iterations: 0,
        scratch: Vec::with_capacity(ncol),
    };
    tab.x[..n].copy_from_slice(&x0);
    tab.lo[..n].copy_from_slice(&pre.lower);
    tab.hi[..n].copy_from_slice(&pre.upper);

    let mut art_cols = Vec::with_capacity(n_art);
    let mut next_art = n + m;
    for (i, row) in pre.rows.iter().enumerate() {
        let s = n + i;
        tab.lo[s] = row.lo;
        tab.hi[s] = row.hi;
        let act = activity[i];
        let t_row = &mut tab.t[i * ncol..(i + 1) * ncol];
        if needs_art[i] {
            let sval = act.clamp(row.lo, row.hi);
            let sigma = if sval - act >= 0.0 { 1.0 } else { -1.0 };
            let a = next_art;
            next_art += 1;
            for &(j, c) in &row.coeffs {
                t_row[j] = c / sigma;
            }
            t_row[s] = -1.0 / sigma;
            t_row[a] = 1.0;
            tab.x[s] = sval;
            tab.x[a] = (sval - act) / sigma;
            tab.lo[a] = 0.0;
            tab.hi[a] = f64::INFINITY;
            tab.basis[i] = a;
            tab.row_of[a] = Some(i);
            art_cols.push(a);
        } else {
            for &(j, c) in &row.coeffs {
                t_row[j] = -c;
            }
            t_row[s] = 1.0;
            tab.x[s] = act;
            tab.basis[i] = s;
            tab.row_of[s] = Some(i);
        }
    }

    let max_iterations = options
        .max_iterations
        .unwrap_or(50 * (m + ncol) + 1000);
    let deadline = Deadline { start, limit: options.time_limit, max_iterations };
    let all = |_: usize, _: &[&mut Vec<f64>]| true;

    // Phase I.
    if n_art > 0 {
        let mut c1 = vec![0.0; ncol];
        for &a in &art_cols {
            c1[a] = 1.0;
        }
        let mut d1 = tab.reduced_costs(&c1);
        match tab.optimize(&mut [&mut d1], &all, &deadline) {
            Outcome::Optimal => {}
            Outcome::Unbounded => unreachable!("phase I objective is bounded below"),
            Outcome::Limit => return failed(LpStatus::TimeLimit, tab.iterations),
        }
        tab.refresh_basics();
        let scale = pre
            .rows
            .iter()
            .flat_map(|r| [r.lo, r.hi])
            .chain(pre.lower.iter().copied())
            .chain(pre.upper.iter().copied())
            .filter(|v| v.is_finite())
            .fold(1.0f64, |acc, v| acc.max(v.abs()));
        let infeasibility: f64 = art_cols.iter().map(|&a| tab.x[a]).sum();
        if infeasibility > 1e-7 * scale {
            return failed(LpStatus::Infeasible, tab.iterations);
        }
        for &a in &art_cols {
            tab.hi[a] = 0.0;
            if tab.row_of[a].is_none() {
                tab.x[a] = 0.0;
            }
        }
        // Drive artificials out of the basis where possible.
        for r in 0..m {
            let b = tab.basis[r];
            if b < n + m {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for k in 0..n + m {
                if tab.row_of[k].is_some() {
                    continue;
                }
                let v = tab.at(r, k).abs();
                if v > 1e-7 && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((k, v));
                }
            }
            if let Some((k, _)) = best {
                tab.pivot(r, k, &mut []);
                tab.x[b] = 0.0;
            }
        }
        tab.refresh_basics();
    }

    // Phase II.
    let mut cost = vec![0.0; ncol];
    cost[..n].copy_from_slice(lp.objective());
    let mut d = tab.reduced_costs(&cost);
    match tab.optimize(&mut [&mut d], &all, &deadline) {
        Outcome::Optimal => {}
        Outcome::Unbounded => return failed(LpStatus::Unbounded, tab.iterations),
        Outcome::Limit => {
            tab.refresh_basics();
            let primal = tab.x[..n].to_vec();
            let mut sol = failed(LpStatus::TimeLimit, tab.iterations);
            sol.objective = lp.objective_value(&primal);
            sol.primal = primal;
            return sol;
        }
    }

    // Phase III: lexicographic tie-break.
    let mut status = LpStatus::Optimal;
    if !lp.secondary_objective().is_empty() {
        let mut c2 = vec![0.0; ncol];
        for &(j, w) in lp.secondary_objective() {
            c2[j] += w;
        }
        let mut d2 = tab.reduced_costs(&c2);
        let on_face = |j: usize, tracked: &[&mut Vec<f64>]| tracked[1][j].abs() <= TIE_TOL;
        if let Outcome::Limit = tab.optimize(&mut [&mut d2, &mut d], &on_face, &deadline) {
            status = LpStatus::TimeLimit;
        }
    }
    tab.refresh_basics();

    // Row duals: y_i = -sum_k c_B(k) T[k, slack_i].
    let mut y = vec![0.0; m];
    for k in 0..m {
        let cb = cost[tab.basis[k]];
        if cb != 0.0 {
            let row = &tab.t[k * ncol..(k + 1) * ncol];
            for i in 0..m {
                let v = row[n + i];
                if v != 0.0 {
                    y[i] -= cb * v;
                }
            }
        }
    }

    let primal = tab.x[..n].to_vec();
    let mut duals = vec![0.0; nrows];
    for (i, row) in pre.rows.iter().enumerate() {
        if y[i] == 0.0 || tab.row_of[n + i].is_some() {
            continue;
        }
        let s = tab.x[n + i];
        let at_hi = if row.lo == row.hi { y[i] < 0.0 } else { s >= row.hi };
        let src = if at_hi { row.hi_src } else { row.lo_src };
        if let Some((con, sigma)) = src {
            duals[con] = y[i] * sigma;
        }
    }
    // Reduced costs against the merged rows decide singleton-row duals.
    let mut d_int = lp.objective().to_vec();
    for (i, row) in pre.rows.iter().enumerate() {
        if y[i] != 0.0 {
            for &(j, a) in &row.coeffs {
                d_int[j] -= y[i] * a;
            }
        }
    }
    for j in 0..n {
        if tab.row_of[j].is_some() || d_int[j] == 0.0 {
            continue;
        }
        let at_lo = primal[j] <= pre.lower[j];
        let at_hi = primal[j] >= pre.upper[j];
        let src = if d_int[j] < 0.0 && at_hi {
            pre.upper_src[j]
        } else if d_int[j] > 0.0 && at_lo {
            pre.lower_src[j]
        } else {
            BoundSource::Declared
        };
        if let BoundSource::Row { con, coef } = src {
            duals[con] += d_int[j] / coef;
        }
    }
    let reduced_costs = lp.reduced_costs(&duals);

    LpSolution {
        status,
        objective: lp.objective_value(&primal),
        primal,
        duals,
        reduced_costs,
        iterations: tab.iterations,
        wall_time: start.elapsed(),
    }
}
