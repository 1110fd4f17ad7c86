//! Linear programs with named, tagged constraints and a simplex backend that
//! always reports dual values.
//!
//! Everything downstream (clearing, pricing, profit maximisation, opportunity
//! cost analysis) builds a [`LinearProgram`] and calls [`solve`]. Duals follow
//! the sensitivity convention `dual = d(objective) / d(rhs)`, so a binding `<=`
//! row of a minimisation has a non-positive dual and a binding `>=` row a
//! non-negative one. Equality rows carry free-signed duals.

mod simplex;
mod write;

use std::collections::HashMap;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use write::write_lp_format;

/// Tolerance used when checking feasibility of a returned point.
pub const FEAS_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("duplicate variable name `{0}`")]
    DuplicateVariable(String),
    #[error("duplicate constraint name `{0}`")]
    DuplicateConstraint(String),
    #[error("variable `{name}` has lower bound {lower} above upper bound {upper}")]
    InvertedBounds { name: String, lower: f64, upper: f64 },
    #[error("constraint `{constraint}` references undeclared variable index {index}")]
    UnknownVariable { constraint: String, index: usize },
    #[error("non-finite coefficient in `{0}`")]
    NonFinite(String),
}

/// Identifies which block of a clearing problem a constraint belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintTag {
    /// Couples two adjacent periods (ramp limits, state-of-charge recursion).
    Intertemporal,
    /// System-wide, one period (energy balance).
    System,
    /// One resource, one period (capacity, SOC limits, terminal targets).
    Resource,
    /// Artificial rows introduced when fixing boundary values.
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub tag: ConstraintTag,
    /// Sparse row as (variable index, coefficient).
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates this row (zero when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }

    /// Distance from the row's bound (always >= 0 for a feasible point).
    pub fn slack(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.sense {
            Sense::Le => self.rhs - lhs,
            Sense::Ge => lhs - self.rhs,
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// A minimisation LP. Immutable once handed to [`solve`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LinearProgram {
    variables: Vec<Variable>,
    objective: Vec<f64>,
    /// Optional lexicographic secondary objective, minimised over the optimal
    /// face of the primary one. Duals are always those of the primary problem.
    secondary: Vec<(usize, f64)>,
    constraints: Vec<Constraint>,
    #[serde(skip)]
    var_index: HashMap<String, usize>,
    #[serde(skip)]
    con_index: HashMap<String, usize>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        cost: f64,
    ) -> Result<usize, LpError> {
        let name = name.into();
        if lower > upper {
            return Err(LpError::InvertedBounds { name, lower, upper });
        }
        if !cost.is_finite() || lower.is_nan() || upper.is_nan() {
            return Err(LpError::NonFinite(name));
        }
        if self.var_index.contains_key(&name) {
            return Err(LpError::DuplicateVariable(name));
        }
        let id = self.variables.len();
        self.var_index.insert(name.clone(), id);
        self.variables.push(Variable { name, lower, upper });
        self.objective.push(cost);
        Ok(id)
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        tag: ConstraintTag,
        coeffs: Vec<(usize, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> Result<usize, LpError> {
        let name = name.into();
        if self.con_index.contains_key(&name) {
            return Err(LpError::DuplicateConstraint(name));
        }
        if !rhs.is_finite() {
            return Err(LpError::NonFinite(name));
        }
        for &(j, a) in &coeffs {
            if j >= self.variables.len() {
                return Err(LpError::UnknownVariable { constraint: name, index: j });
            }
            if !a.is_finite() {
                return Err(LpError::NonFinite(name));
            }
        }
        let id = self.constraints.len();
        self.con_index.insert(name.clone(), id);
        self.constraints.push(Constraint { name, tag, coeffs, sense, rhs });
        Ok(id)
    }

    /// Adds `delta` to the primary cost of variable `j`.
    pub fn add_cost(&mut self, j: usize, delta: f64) {
        self.objective[j] += delta;
    }

    pub fn set_secondary_objective(&mut self, coeffs: Vec<(usize, f64)>) {
        self.secondary = coeffs;
    }

    pub fn clear_secondary_objective(&mut self) {
        self.secondary.clear();
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn secondary_objective(&self) -> &[(usize, f64)] {
        &self.secondary
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn variable_id(&self, name: &str) -> Option<usize> {
        self.var_index.get(name).copied()
    }

    pub fn constraint_id(&self, name: &str) -> Option<usize> {
        self.con_index.get(name).copied()
    }

    pub fn constraint(&self, name: &str) -> Option<&Constraint> {
        self.constraint_id(name).map(|i| &self.constraints[i])
    }

    /// Rebuilds the name lookup tables (needed after deserialisation).
    pub fn reindex(&mut self) {
        self.var_index = self
            .variables
            .iter()
            .enumerate()
            .map(|(i, v)| (v.name.clone(), i))
            .collect();
        self.con_index = self
            .constraints
            .iter()
            .enumerate()
            .map(|(i, c)| (c.name.clone(), i))
            .collect();
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest constraint or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .constraints
            .iter()
            .map(|c| c.violation(x))
            .fold(0.0, f64::max);
        let bounds = self
            .variables
            .iter()
            .zip(x)
            .map(|(v, &xi)| (v.lower - xi).max(xi - v.upper).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    /// Reduced cost of every variable against the supplied row multipliers.
    pub fn reduced_costs(&self, duals: &[f64]) -> Vec<f64> {
        let mut d = self.objective.clone();
        for (row, &y) in self.constraints.iter().zip(duals) {
            if y != 0.0 {
                for &(j, a) in &row.coeffs {
                    d[j] -= y * a;
                }
            }
        }
        d
    }

    /// Lagrangian dual objective at row multipliers `duals`, with the variable
    /// bound multipliers chosen optimally (they equal the reduced costs).
    ///
    /// Any multiplier vector of the right signs gives a lower bound on the
    /// optimal value. Returns `-inf` when a reduced cost pushes against an
    /// infinite bound or a row multiplier has the wrong sign.
    pub fn dual_objective(&self, duals: &[f64]) -> f64 {
        const SIGN_TOL: f64 = 1e-9;
        let mut value = 0.0;
        for (row, &y) in self.constraints.iter().zip(duals) {
            let wrong_sign = match row.sense {
                Sense::Le => y > SIGN_TOL,
                Sense::Ge => y < -SIGN_TOL,
                Sense::Eq => false,
            };
            if wrong_sign {
                return f64::NEG_INFINITY;
            }
            value += y * row.rhs;
        }
        for (v, d) in self.variables.iter().zip(self.reduced_costs(duals)) {
            if d > SIGN_TOL {
                if v.lower == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                value += d * v.lower;
            } else if d < -SIGN_TOL {
                if v.upper == f64::INFINITY {
                    return f64::NEG_INFINITY;
                }
                value += d * v.upper;
            } else if d != 0.0 {
                // Tiny reduced costs: pick whichever finite bound exists.
                let bound = if v.lower.is_finite() { v.lower } else if v.upper.is_finite() { v.upper } else { 0.0 };
                value += d * bound;
            }
        }
        value
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    TimeLimit,
}

/// Result of one solve. Vectors are indexed like the program's variables and
/// constraints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub primal: Vec<f64>,
    pub duals: Vec<f64>,
    /// Multipliers of the declared variable bounds (`c - A^T y`).
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
    pub wall_time: Duration,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub fn value(&self, program: &LinearProgram, var: &str) -> Option<f64> {
        program.variable_id(var).map(|j| self.primal[j])
    }

    pub fn dual(&self, program: &LinearProgram, con: &str) -> Option<f64> {
        program.constraint_id(con).map(|i| self.duals[i])
    }

    /// Relative duality gap between the reported objective and the dual
    /// objective evaluated at the returned multipliers.
    pub fn duality_gap(&self, program: &LinearProgram) -> f64 {
        (self.objective - program.dual_objective(&self.duals)).abs()
    }
}

/// Solver knobs. The defaults suit every problem this crate builds.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub time_limit: Duration,
    pub max_iterations: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { time_limit: Duration::from_secs(300), max_iterations: None }
    }
}

/// Solves `program` to optimality (or reports why it could not).
///
/// Infeasibility, unboundedness and the time limit are reported through
/// [`LpSolution::status`]; the function itself never fails.
pub fn solve(program: &LinearProgram, time_limit: Duration) -> LpSolution {
    solve_with(program, &SolveOptions { time_limit, ..SolveOptions::default() })
}

pub fn solve_with(program: &LinearProgram, options: &SolveOptions) -> LpSolution {
    simplex::solve(program, options)
}
