//! Linear and mixed-binary optimization.
//!
//! A dense bounded-variable simplex (two phases, Dantzig pricing with a
//! Bland fallback) drives both the LP entry point and a best-first
//! branch-and-bound over binary variables. Instances produced by the
//! planner have a few hundred columns at most, which is the scale this
//! module is written for.

mod branch;
pub mod lp_format;
mod simplex;

use serde::{Deserialize, Serialize};
use std::time::Duration;
use thiserror::Error;

pub use branch::{enumerate_oracle, solve_mip, ORACLE_MAX_BINARIES};
pub use simplex::solve_lp;

pub type VarId = usize;

/// Numerical tolerances shared by the simplex, branch-and-bound and the
/// acceptance checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Absolute primal feasibility (row residuals, bound violations).
    pub feasibility: f64,
    /// Distance from 0/1 under which a binary counts as integral.
    pub integrality: f64,
    /// Relative optimality gap at which branch-and-bound stops.
    pub gap: f64,
    /// Smallest tableau entry accepted as a pivot.
    pub pivot: f64,
    /// Reduced-cost threshold for optimality.
    pub optimality: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    feasibility: 1e-7,
    integrality: 1e-6,
    gap: 1e-6,
    pivot: 1e-9,
    optimality: 1e-9,
};

impl Default for Tolerances {
    fn default() -> Self {
        TOLERANCES
    }
}

/// Search budget for [`solve_mip`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverLimits {
    pub node_limit: usize,
    /// Wall-clock budget. Leave unset when runs must be reproducible.
    pub time_limit: Option<Duration>,
}

impl Default for SolverLimits {
    fn default() -> Self {
        SolverLimits {
            node_limit: 200_000,
            time_limit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub objective: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("variable {0} is out of range ({1} variables)")]
    UnknownVariable(VarId, usize),
    #[error("non-finite coefficient in {0}")]
    NonFinite(String),
    #[error("variable {name}: lower bound {lower} exceeds upper bound {upper}")]
    InvertedBounds { name: String, lower: f64, upper: f64 },
    #[error("binary variable {0} has bounds outside [0, 1]")]
    BinaryBounds(String),
    #[error("enumeration refused: {0} binaries exceed the limit of {1}")]
    TooManyBinaries(usize, usize),
    #[error("simplex iteration limit reached ({0} pivots)")]
    IterationLimit(usize),
    #[error("basis matrix became singular during reinversion")]
    SingularBasis,
}

/// A linear program: optimize `offset + c·x` subject to row constraints and
/// per-variable bounds (`upper` may be `+inf`, `lower` may be `-inf`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective_offset: f64,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(sense: Sense) -> Self {
        LinearProgram {
            sense,
            objective_offset: 0.0,
            variables: Vec::new(),
            constraints: Vec::new(),
        }
    }

    pub fn add_variable(
        &mut self,
        name: impl Into<String>,
        objective: f64,
        lower: f64,
        upper: f64,
    ) -> VarId {
        self.variables.push(Variable {
            name: name.into(),
            objective,
            lower,
            upper,
        });
        self.variables.len() - 1
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(VarId, f64)>,
        relation: Relation,
        rhs: f64,
    ) {
        self.constraints.push(Constraint {
            name: name.into(),
            terms,
            relation,
            rhs,
        });
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        let v = &mut self.variables[var];
        v.lower = lower;
        v.upper = upper;
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let n = self.variables.len();
        if !self.objective_offset.is_finite() {
            return Err(SolverError::NonFinite("objective offset".into()));
        }
        for v in &self.variables {
            if !v.objective.is_finite() || v.lower.is_nan() || v.upper.is_nan() {
                return Err(SolverError::NonFinite(format!("variable {}", v.name)));
            }
            if v.lower > v.upper || v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return Err(SolverError::InvertedBounds {
                    name: v.name.clone(),
                    lower: v.lower,
                    upper: v.upper,
                });
            }
        }
        for c in &self.constraints {
            if !c.rhs.is_finite() {
                return Err(SolverError::NonFinite(format!("constraint {}", c.name)));
            }
            for &(j, a) in &c.terms {
                if j >= n {
                    return Err(SolverError::UnknownVariable(j, n));
                }
                if !a.is_finite() {
                    return Err(SolverError::NonFinite(format!("constraint {}", c.name)));
                }
            }
        }
        Ok(())
    }

    /// Objective value of `values`, offset included.
    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective_offset
            + self
                .variables
                .iter()
                .zip(values)
                .map(|(v, x)| v.objective * x)
                .sum::<f64>()
    }

    pub fn row_activity(&self, row: usize, values: &[f64]) -> f64 {
        self.constraints[row]
            .terms
            .iter()
            .map(|&(j, a)| a * values[j])
            .sum()
    }

    /// Largest absolute violation of any row or bound by `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &x) in self.variables.iter().zip(values) {
            worst = worst.max(v.lower - x).max(x - v.upper);
        }
        for (i, c) in self.constraints.iter().enumerate() {
            let act = self.row_activity(i, values);
            let viol = match c.relation {
                Relation::Le => act - c.rhs,
                Relation::Ge => c.rhs - act,
                Relation::Eq => (act - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }
}

/// A linear program in which a subset of the variables must take 0/1 values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedIntegerProgram {
    pub lp: LinearProgram,
    pub binaries: Vec<VarId>,
}

impl MixedIntegerProgram {
    pub fn new(lp: LinearProgram, binaries: Vec<VarId>) -> Self {
        MixedIntegerProgram { lp, binaries }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        self.lp.validate()?;
        let n = self.lp.num_variables();
        for &b in &self.binaries {
            if b >= n {
                return Err(SolverError::UnknownVariable(b, n));
            }
            let v = &self.lp.variables[b];
            if v.lower < 0.0 || v.upper > 1.0 {
                return Err(SolverError::BinaryBounds(v.name.clone()));
            }
        }
        Ok(())
    }

    pub fn to_lp_string(&self) -> String {
        lp_format::write(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    /// Budget exhausted; `values` hold the best integral solution found.
    IncumbentAtLimit,
    /// Budget exhausted before any integral solution was found. Not a proof
    /// of infeasibility.
    LimitWithoutIncumbent,
}

impl Status {
    pub fn has_values(self) -> bool {
        matches!(self, Status::Optimal | Status::IncumbentAtLimit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: Status,
    /// Objective of `values` in the program's own sense, offset included.
    /// NaN when no values are available.
    pub objective: f64,
    pub values: Vec<f64>,
    /// Best proven bound on the optimum (upper for maximization).
    pub best_bound: f64,
    /// LP relaxations solved.
    pub nodes: usize,
}

impl Solution {
    pub(crate) fn without_values(status: Status, best_bound: f64, nodes: usize) -> Self {
        Solution {
            status,
            objective: f64::NAN,
            values: Vec::new(),
            best_bound,
            nodes,
        }
    }
}
