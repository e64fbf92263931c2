//! Dense bounded-variable linear programming.
//!
//! [`solve`] runs a two-phase primal simplex; [`solve_warm`] restarts from a
//! previous basis with a dual simplex when rows or bounds changed.
//! [`solve_box_knapsack`] is the greedy special case used for cut
//! coefficients.

mod knapsack;
mod lpfile;
mod simplex;

pub use knapsack::{solve_box_knapsack, KnapsackSense};
pub use lpfile::write_lp_format;

use serde::Serialize;

use crate::error::{Error, Result};

/// Bound magnitude treated as infinite.
pub const INF: f64 = 1e30;
/// Smallest pivot magnitude accepted by the simplex.
pub const PIVOT_TOL: f64 = 1e-9;
/// Primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-7;
/// Reduced-cost (dual feasibility) tolerance.
pub const OPT_TOL: f64 = 1e-9;

pub(crate) fn is_finite_bound(v: f64) -> bool {
    v.abs() < INF
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ObjSense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coefs: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coefs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.sense {
            RowSense::Le => (act - self.rhs).max(0.0),
            RowSense::Ge => (self.rhs - act).max(0.0),
            RowSense::Eq => (act - self.rhs).abs(),
        }
    }
}

/// `opt c.x  s.t.  rows,  lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub sense: ObjSense,
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<Row>,
    pub names: Vec<String>,
}

impl LinearProgram {
    pub fn new(sense: ObjSense) -> Self {
        Self { sense, objective: Vec::new(), lower: Vec::new(), upper: Vec::new(), rows: Vec::new(), names: Vec::new() }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        let j = self.objective.len();
        self.objective.push(cost);
        self.lower.push(lower.max(-INF));
        self.upper.push(upper.min(INF));
        self.names.push(format!("x{j}"));
        j
    }

    pub fn add_named_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> usize {
        let j = self.add_var(lower, upper, cost);
        self.names[j] = name.into();
        j
    }

    pub fn add_row(&mut self, coefs: Vec<(usize, f64)>, sense: RowSense, rhs: f64) -> usize {
        self.rows.push(Row { coefs, sense, rhs });
        self.rows.len() - 1
    }

    /// `lo <= a.x <= hi` as up to two rows (one if either side is infinite).
    pub fn add_range(&mut self, coefs: Vec<(usize, f64)>, lo: f64, hi: f64) {
        if (hi - lo).abs() <= 0.0 {
            self.add_row(coefs, RowSense::Eq, lo);
            return;
        }
        if is_finite_bound(lo) {
            self.add_row(coefs.clone(), RowSense::Ge, lo);
        }
        if is_finite_bound(hi) {
            self.add_row(coefs, RowSense::Le, hi);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Input("bound vectors do not match the objective length".into()));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::Input("non-finite objective coefficient".into()));
        }
        for (j, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u {
                return Err(Error::Input(format!("variable {j} has inconsistent bounds [{l}, {u}]")));
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(Error::Input(format!("row {r} has a non-finite right-hand side")));
            }
            for &(j, a) in &row.coefs {
                if j >= n || !a.is_finite() {
                    return Err(Error::Input(format!("row {r} has an invalid entry ({j}, {a})")));
                }
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest bound or row violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for j in 0..self.num_vars() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        for row in &self.rows {
            worst = worst.max(row.violation(x));
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Position of a column relative to the basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable held at zero.
    Free,
}

/// Statuses of the structural columns followed by one slack per row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Basis {
    pub structural: Vec<VarStatus>,
    pub slack: Vec<VarStatus>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row multipliers `y` with `c - A'y` equal to the reduced costs, in the
    /// problem's own sense.
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub basis: Option<Basis>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Solves from scratch.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    simplex::Solver::new(lp).run_cold()
}

/// Solves starting from `basis`, which may describe fewer rows than `lp`
/// (new rows start with a basic slack). Falls back to a cold start whenever
/// the basis cannot be used.
pub fn solve_warm(lp: &LinearProgram, basis: &Basis) -> Result<LpSolution> {
    lp.validate()?;
    simplex::Solver::new(lp).run_warm(basis)
}
