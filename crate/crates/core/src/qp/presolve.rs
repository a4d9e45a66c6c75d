//! Removes fixed variables and turns singleton rows into bounds.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::vec;
use alloc::vec::Vec;


use super::{QuadraticProgram, Sense};

/// Bounds with magnitude at or above this are treated as infinite.
pub(crate) const INF_BOUND: f64 = 1e19;

#[derive(Debug, Clone)]
pub(crate) struct Row {
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
    pub origin: usize,
}

/// Compressed sparse rows.
#[derive(Debug, Clone, Default)]
pub(crate) struct Csr {
    pub start: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl Csr {
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.start[i], self.start[i + 1]);
        (&self.col[a..b], &self.val[a..b])
    }

    pub fn nrows(&self) -> usize {
        self.start.len() - 1
    }

    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            *yi = c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum();
        }
    }

    /// `y += selfᵀ x`.
    pub fn mul_t_add(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.nrows() {
            let (c, v) = self.row(i);
            let xi = x[i];
            if xi != 0.0 {
                for (&j, &a) in c.iter().zip(v) {
                    y[j] += a * xi;
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Reduced {
    pub n: usize,
    /// Value of every original variable that was fixed (NaN otherwise).
    pub fixed: Vec<f64>,
    /// Original index of each reduced variable.
    pub orig_of: Vec<usize>,
    /// Full symmetric storage of the reduced cost matrix.
    pub p: Csr,
    pub q: Vec<f64>,
    pub rows: Vec<Row>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

impl Reduced {
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut full = self.fixed.clone();
        for (k, &j) in self.orig_of.iter().enumerate() {
            full[j] = x[k];
        }
        full
    }
}

fn feasible_constant(sense: Sense, rhs: f64) -> bool {
    let tol = 1e-9 * (1.0 + rhs.abs());
    match sense {
        Sense::Le => 0.0 <= rhs + tol,
        Sense::Ge => 0.0 >= rhs - tol,
        Sense::Eq => rhs.abs() <= tol,
    }
}

/// Returns `Err(())` when presolve proves infeasibility.
pub(crate) fn reduce(
    qp: &QuadraticProgram,
    lower: &[f64],
    upper: &[f64],
) -> core::result::Result<Reduced, ()> {
    let n = qp.num_vars();
    let mut lb = lower.to_vec();
    let mut ub = upper.to_vec();
    let mut fixed = vec![f64::NAN; n];
    let mut is_row = vec![true; qp.constraints.len()];

    let fix_check = |j: usize, lb: &mut [f64], ub: &mut [f64], fixed: &mut [f64]| -> core::result::Result<bool, ()> {
        if !fixed[j].is_nan() {
            return Ok(false);
        }
        let tol = 1e-9 * (1.0 + lb[j].abs().min(ub[j].abs()));
        if lb[j] > ub[j] + tol {
            return Err(());
        }
        if (lb[j].is_finite() && ub[j] - lb[j] <= 1e-12 * (1.0 + lb[j].abs())) || lb[j] > ub[j] {
            let v = if lb[j] > ub[j] { 0.5 * (lb[j] + ub[j]) } else { lb[j] };
            fixed[j] = v;
            lb[j] = v;
            ub[j] = v;
            return Ok(true);
        }
        Ok(false)
    };

    for j in 0..n {
        fix_check(j, &mut lb, &mut ub, &mut fixed)?;
    }

    let mut coef: Vec<f64> = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    for _pass in 0..20 {
        let mut changed = false;
        for (k, c) in qp.constraints.iter().enumerate() {
            if !is_row[k] {
                continue;
            }
            let mut rhs = c.rhs;
            touched.clear();
            for &(j, a) in &c.terms {
                if !fixed[j].is_nan() {
                    rhs -= a * fixed[j];
                } else {
                    if coef[j] == 0.0 {
                        touched.push(j);
                    }
                    coef[j] += a;
                }
            }
            let scale = touched.iter().fold(0.0f64, |m, &j| m.max(coef[j].abs()));
            let live: Vec<usize> = touched
                .iter()
                .copied()
                .filter(|&j| coef[j].abs() > 1e-14 * scale.max(1e-300))
                .collect();
            match live.len() {
                0 => {
                    for &j in &touched {
                        coef[j] = 0.0;
                    }
                    if !feasible_constant(c.sense, rhs) {
                        return Err(());
                    }
                    is_row[k] = false;
                    changed = true;
                }
                1 => {
                    let j = live[0];
                    let a = coef[j];
                    for &t in &touched {
                        coef[t] = 0.0;
                    }
                    let v = rhs / a;
                    let (tighten_upper, tighten_lower) = match c.sense {
                        Sense::Eq => (true, true),
                        Sense::Le => (a > 0.0, a < 0.0),
                        Sense::Ge => (a < 0.0, a > 0.0),
                    };
                    if tighten_upper && v < ub[j] {
                        ub[j] = v;
                    }
                    if tighten_lower && v > lb[j] {
                        lb[j] = v;
                    }
                    fix_check(j, &mut lb, &mut ub, &mut fixed)?;
                    is_row[k] = false;
                    changed = true;
                }
                _ => {
                    for &t in &touched {
                        coef[t] = 0.0;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut col_of = vec![usize::MAX; n];
    let mut orig_of = Vec::new();
    for j in 0..n {
        if fixed[j].is_nan() {
            col_of[j] = orig_of.len();
            orig_of.push(j);
        }
    }
    let nr = orig_of.len();

    let mut rows = Vec::new();
    for (k, c) in qp.constraints.iter().enumerate() {
        if !is_row[k] {
            continue;
        }
        let mut rhs = c.rhs;
        touched.clear();
        for &(j, a) in &c.terms {
            if !fixed[j].is_nan() {
                rhs -= a * fixed[j];
            } else {
                if coef[j] == 0.0 {
                    touched.push(j);
                }
                coef[j] += a;
            }
        }
        let mut cols = Vec::with_capacity(touched.len());
        let mut vals = Vec::with_capacity(touched.len());
        touched.sort_unstable();
        for &j in &touched {
            if coef[j] != 0.0 {
                cols.push(col_of[j]);
                vals.push(coef[j]);
            }
            coef[j] = 0.0;
        }
        rows.push(Row { cols, vals, sense: c.sense, rhs, origin: k });
    }

    // Objective.
    let mut q = vec![0.0; nr];
    for (k, &j) in orig_of.iter().enumerate() {
        q[k] = qp.cost[j];
    }
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    for &(i, j, v) in &qp.quad {
        match (fixed[i].is_nan(), fixed[j].is_nan()) {
            (true, true) => {
                let (a, b) = (col_of[i], col_of[j]);
                entries.push((a, b, v));
                if a != b {
                    entries.push((b, a, v));
                }
            }
            (true, false) => q[col_of[i]] += v * fixed[j],
            (false, true) => q[col_of[j]] += v * fixed[i],
            (false, false) => {}
        }
    }
    entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let mut p = Csr { start: vec![0; nr + 1], col: Vec::new(), val: Vec::new() };
    let mut e = 0;
    for r in 0..nr {
        while e < entries.len() && entries[e].0 == r {
            let c = entries[e].1;
            let mut v = 0.0;
            while e < entries.len() && entries[e].0 == r && entries[e].1 == c {
                v += entries[e].2;
                e += 1;
            }
            if v != 0.0 {
                p.col.push(c);
                p.val.push(v);
            }
        }
        p.start[r + 1] = p.col.len();
    }

    let lbr = orig_of.iter().map(|&j| if lb[j] <= -INF_BOUND { f64::NEG_INFINITY } else { lb[j] }).collect();
    let ubr = orig_of.iter().map(|&j| if ub[j] >= INF_BOUND { f64::INFINITY } else { ub[j] }).collect();

    Ok(Reduced { n: nr, fixed, orig_of, p, q, rows, lb: lbr, ub: ubr })
}
