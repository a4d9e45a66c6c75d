//! Convex quadratic programming with a small number of binary variables.
//!
//! Problems have the form
//!
//! ```text
//! minimize   ½ xᵀQx + cᵀx + constant
//! subject to aᵢᵀx {≤, ≥, =} bᵢ,   l ≤ x ≤ u,   x_j ∈ {0, 1} for j ∈ binaries
//! ```
//!
//! The continuous solver is a homogeneous self-dual interior point method
//! with Mehrotra predictor-corrector steps and a sparse quasidefinite KKT
//! factorization. Binaries are handled by depth-first branch and bound.

#[allow(unused_imports)]
use num_traits::Float;

mod branch;
mod ipm;
mod kkt;
mod presolve;
mod verify;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;


use crate::error::{invalid, Error, Result};
use crate::linalg::{min_eigenvalue, Matrix};

pub use branch::solve_with_binaries_using;
pub use verify::verify_kkt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the constraint (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let v = self.activity(x) - self.rhs;
        match self.sense {
            Sense::Le => v.max(0.0),
            Sense::Ge => (-v).max(0.0),
            Sense::Eq => v.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    /// Largest of primal infeasibility, stationarity and complementarity
    /// residuals at `x`, in the problem's own units.
    pub kkt_residual: f64,
    /// Constraint multipliers, one per constraint, for the constraint written
    /// in `≤` orientation (non-negative for inequalities, free for equalities).
    pub duals: Vec<f64>,
    pub iterations: usize,
    /// Branch-and-bound nodes explored (1 for continuous problems).
    pub nodes: usize,
}

impl SolveResult {
    fn without_solution(n: usize, m: usize, status: SolveStatus, iterations: usize) -> Self {
        SolveResult {
            x: vec![f64::NAN; n],
            objective: match status {
                SolveStatus::Unbounded => f64::NEG_INFINITY,
                _ => f64::INFINITY,
            },
            status,
            kkt_residual: f64::INFINITY,
            duals: vec![0.0; m],
            iterations,
            nodes: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub max_iter: usize,
    /// Relative tolerance for feasibility and duality gap.
    pub tol: f64,
    /// Tolerance accepted when the iteration stalls before reaching `tol`.
    pub tol_reduced: f64,
    /// Tolerance for infeasibility certificates.
    pub tol_infeasible: f64,
    pub static_reg: f64,
    pub max_binaries: usize,
    pub max_nodes: usize,
    pub integrality_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_iter: 100,
            tol: 1e-9,
            tol_reduced: 1e-6,
            tol_infeasible: 1e-8,
            static_reg: 1e-8,
            max_binaries: 64,
            max_nodes: 20_000,
            integrality_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuadraticProgram {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cost: Vec<f64>,
    /// Entries `(i, j, v)` with `i <= j` of the symmetric matrix `Q`;
    /// duplicates are summed.
    pub quad: Vec<(usize, usize, f64)>,
    pub constant: f64,
    pub constraints: Vec<LinearConstraint>,
    pub binaries: Vec<usize>,
    /// Big-M constant used by complementarity rows, kept for reference.
    pub big_m: f64,
}

impl QuadraticProgram {
    pub fn new() -> Self {
        QuadraticProgram::default()
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn add_variable(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        self.lower.push(lower);
        self.upper.push(upper);
        self.cost.push(cost);
        self.cost.len() - 1
    }

    pub fn add_binary(&mut self, cost: f64) -> usize {
        let j = self.add_variable(0.0, 1.0, cost);
        self.binaries.push(j);
        j
    }

    /// Adds `v` to `Q[i][j]` (and to `Q[j][i]`).
    pub fn add_quadratic(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.quad.push((i, j, v));
    }

    pub fn add_constraint(&mut self, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        self.constraints.push(LinearConstraint { terms, sense, rhs });
        self.constraints.len() - 1
    }

    /// `Qx`.
    pub fn q_times(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for &(i, j, v) in &self.quad {
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
        y
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let qx = self.q_times(x);
        let mut f = self.constant;
        for j in 0..x.len() {
            f += self.cost[j] * x[j] + 0.5 * qx[j] * x[j];
        }
        f
    }

    /// Largest bound or constraint violation at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..x.len() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        for c in &self.constraints {
            worst = worst.max(c.violation(x));
        }
        worst
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(invalid("bound vectors must match the number of variables"));
        }
        for j in 0..n {
            if self.lower[j].is_nan() || self.upper[j].is_nan() || !self.cost[j].is_finite() {
                return Err(invalid(format!("variable {j} has NaN bounds or cost")));
            }
        }
        for &(i, j, v) in &self.quad {
            if i >= n || j >= n || !v.is_finite() {
                return Err(invalid(format!("quadratic entry ({i}, {j}) invalid")));
            }
        }
        for (k, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() || c.terms.iter().any(|&(j, a)| j >= n || !a.is_finite()) {
                return Err(invalid(format!("constraint {k} is malformed")));
            }
        }
        for &b in &self.binaries {
            if b >= n {
                return Err(invalid(format!("binary index {b} out of range")));
            }
            if self.lower[b] < 0.0 || self.upper[b] > 1.0 {
                return Err(invalid(format!("binary {b} must have bounds within [0, 1]")));
            }
        }
        Ok(())
    }

    /// Rejects cost matrices with an eigenvalue below `-1e-9` (relative to
    /// the entry scale).
    pub fn check_convex(&self) -> Result<()> {
        if self.quad.is_empty() {
            return Ok(());
        }
        let n = self.num_vars();
        let mut support: Vec<usize> = Vec::new();
        let mut pos = vec![usize::MAX; n];
        let mut off_diagonal = false;
        for &(i, j, _) in &self.quad {
            off_diagonal |= i != j;
            for k in [i, j] {
                if pos[k] == usize::MAX {
                    pos[k] = support.len();
                    support.push(k);
                }
            }
        }
        let scale = self.quad.iter().fold(1.0f64, |m, e| m.max(e.2.abs()));
        let tol = 1e-9 * scale;
        if !off_diagonal {
            let mut diag = vec![0.0; n];
            for &(i, _, v) in &self.quad {
                diag[i] += v;
            }
            let worst = diag.iter().fold(0.0f64, |m, &v| m.min(v));
            return if worst < -tol { Err(Error::NotConvex(worst)) } else { Ok(()) };
        }
        let k = support.len();
        let mut m = Matrix::zeros(k, k);
        for &(i, j, v) in &self.quad {
            let (a, b) = (pos[i], pos[j]);
            m.data[a * k + b] += v;
            if a != b {
                m.data[b * k + a] += v;
            }
        }
        if k <= 80 {
            let ev = min_eigenvalue(&m);
            return if ev < -tol { Err(Error::NotConvex(ev)) } else { Ok(()) };
        }
        for i in 0..k {
            m.data[i * k + i] += tol;
        }
        match crate::linalg::cholesky(&m) {
            Some(_) => Ok(()),
            None => Err(Error::NotConvex(-tol)),
        }
    }
}

/// Solves the continuous relaxation: binaries are treated as variables in
/// their bounds. Fix binaries through their bounds to solve a fixed
/// assignment.
pub fn solve_continuous(qp: &QuadraticProgram) -> Result<SolveResult> {
    solve_continuous_with(qp, &SolverSettings::default())
}

pub fn solve_continuous_with(qp: &QuadraticProgram, settings: &SolverSettings) -> Result<SolveResult> {
    qp.validate()?;
    qp.check_convex()?;
    Ok(solve_relaxation(qp, &qp.lower, &qp.upper, settings))
}

/// Branch and bound over the binaries of `qp`.
pub fn solve_with_binaries(qp: &QuadraticProgram) -> Result<SolveResult> {
    solve_with_binaries_using(qp, &SolverSettings::default())
}

/// Continuous solve with overridden variable bounds; assumes `qp` has been
/// validated and checked for convexity.
pub(crate) fn solve_relaxation(
    qp: &QuadraticProgram,
    lower: &[f64],
    upper: &[f64],
    settings: &SolverSettings,
) -> SolveResult {
    let n = qp.num_vars();
    let m = qp.constraints.len();
    let reduced = match presolve::reduce(qp, lower, upper) {
        Ok(r) => r,
        Err(()) => return SolveResult::without_solution(n, m, SolveStatus::Infeasible, 0),
    };
    let out = ipm::solve(&reduced, settings);
    match out.status {
        SolveStatus::Optimal => {}
        status => return SolveResult::without_solution(n, m, status, out.iterations),
    }
    let x = reduced.expand(&out.x);
    let mut duals = vec![0.0; m];
    for (row, &y) in reduced.rows.iter().zip(&out.row_duals) {
        duals[row.origin] = y;
    }
    let mut viol = 0.0f64;
    for j in 0..n {
        viol = viol.max(lower[j] - x[j]).max(x[j] - upper[j]);
    }
    for c in &qp.constraints {
        viol = viol.max(c.violation(&x));
    }
    SolveResult {
        objective: qp.objective(&x),
        x,
        status: SolveStatus::Optimal,
        kkt_residual: viol.max(out.dual_residual).max(out.complementarity),
        duals,
        iterations: out.iterations,
        nodes: 1,
    }
}

#[cfg(test)]
mod tests;
