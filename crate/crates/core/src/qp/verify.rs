//! Independent KKT check: primal feasibility plus the smallest stationarity
//! residual achievable with sign-constrained multipliers on active rows.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::vec;
use alloc::vec::Vec;


use super::{QuadraticProgram, Sense};

/// Largest violation of feasibility and stationarity at `x`. Binaries are
/// treated as fixed at their values in `x` (their distance to the nearest
/// integer counts as a violation).
pub fn verify_kkt(qp: &QuadraticProgram, x: &[f64]) -> f64 {
    let n = qp.num_vars();
    if x.len() != n {
        return f64::INFINITY;
    }
    let mut primal = qp.max_violation(x);
    let mut is_binary = vec![false; n];
    for &b in &qp.binaries {
        is_binary[b] = true;
        primal = primal.max((x[b] - x[b].round()).abs());
    }
    let qx = qp.q_times(x);
    let grad: Vec<f64> = (0..n).map(|j| qx[j] + qp.cost[j]).collect();

    let rows: Vec<usize> = (0..n).filter(|&j| !is_binary[j]).collect();
    let mut pos = vec![usize::MAX; n];
    for (k, &j) in rows.iter().enumerate() {
        pos[j] = k;
    }
    // Columns of the multiplier matrix, each with a non-negative multiplier.
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let active = |slack: f64, rhs: f64| slack.abs() <= 1e-6 * (1.0 + rhs.abs());
    for c in &qp.constraints {
        let mut col = vec![0.0; rows.len()];
        let mut any = false;
        for &(j, a) in &c.terms {
            if pos[j] != usize::MAX {
                col[pos[j]] += a;
                any = true;
            }
        }
        if !any {
            continue;
        }
        let slack = c.activity(x) - c.rhs;
        match c.sense {
            Sense::Eq => {
                let neg = col.iter().map(|v| -v).collect();
                cols.push(col);
                cols.push(neg);
            }
            Sense::Le if active(slack, c.rhs) => cols.push(col),
            Sense::Ge if active(slack, c.rhs) => cols.push(col.iter().map(|v| -v).collect()),
            _ => {}
        }
    }
    for (k, &j) in rows.iter().enumerate() {
        if qp.upper[j].is_finite() && active(x[j] - qp.upper[j], qp.upper[j]) {
            let mut col = vec![0.0; rows.len()];
            col[k] = 1.0;
            cols.push(col);
        }
        if qp.lower[j].is_finite() && active(x[j] - qp.lower[j], qp.lower[j]) {
            let mut col = vec![0.0; rows.len()];
            col[k] = -1.0;
            cols.push(col);
        }
    }
    let target: Vec<f64> = rows.iter().map(|&j| -grad[j]).collect();
    let lambda = nnls(&cols, &target);
    let mut resid = target.iter().map(|v| -v).collect::<Vec<f64>>();
    for (col, &l) in cols.iter().zip(&lambda) {
        for (r, v) in resid.iter_mut().zip(col) {
            *r += l * v;
        }
    }
    let stationarity = resid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    primal.max(stationarity)
}

/// Lawson-Hanson non-negative least squares: `min ‖Σ λ_k cols[k] - b‖₂, λ ≥ 0`.
fn nnls(cols: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let k = cols.len();
    let mut lambda = vec![0.0; k];
    if k == 0 {
        return lambda;
    }
    let mut passive = vec![false; k];
    let residual = |lambda: &[f64]| {
        let mut r = b.to_vec();
        for (col, &l) in cols.iter().zip(lambda) {
            if l != 0.0 {
                for (ri, v) in r.iter_mut().zip(col) {
                    *ri -= l * v;
                }
            }
        }
        r
    };
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale * (k as f64);
    for _outer in 0..3 * k + 10 {
        let r = residual(&lambda);
        let mut best: Option<(usize, f64)> = None;
        for j in 0..k {
            if !passive[j] {
                let w: f64 = cols[j].iter().zip(&r).map(|(a, b)| a * b).sum();
                if w > tol && best.map_or(true, |(_, bw)| w > bw) {
                    best = Some((j, w));
                }
            }
        }
        let Some((t, _)) = best else { break };
        passive[t] = true;
        for _inner in 0..3 * k + 10 {
            let idx: Vec<usize> = (0..k).filter(|&j| passive[j]).collect();
            let sub: Vec<&Vec<f64>> = idx.iter().map(|&j| &cols[j]).collect();
            let sol = least_squares(&sub, b);
            if sol.iter().all(|&v| v > 0.0) {
                lambda.iter_mut().for_each(|v| *v = 0.0);
                for (&j, &v) in idx.iter().zip(&sol) {
                    lambda[j] = v;
                }
                break;
            }
            let mut alpha = 1.0f64;
            for (&j, &v) in idx.iter().zip(&sol) {
                if v <= 0.0 {
                    let denom = lambda[j] - v;
                    if denom > 0.0 {
                        alpha = alpha.min(lambda[j] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            for (&j, &v) in idx.iter().zip(&sol) {
                lambda[j] += alpha * (v - lambda[j]);
                if lambda[j] <= 1e-15 * scale {
                    lambda[j] = 0.0;
                    passive[j] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    lambda
}

/// Least squares by Householder QR; rank-deficient columns get zero weight.
fn least_squares(cols: &[&Vec<f64>], b: &[f64]) -> Vec<f64> {
    let m = b.len();
    let k = cols.len();
    let mut a: Vec<Vec<f64>> = cols.iter().map(|c| (*c).clone()).collect();
    let mut rhs = b.to_vec();
    let mut diag = vec![0.0; k];
    let rank = k.min(m);
    for j in 0..rank {
        let norm = a[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            diag[j] = 0.0;
            continue;
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            diag[j] = alpha;
            continue;
        }
        for col in a.iter_mut().skip(j) {
            let d: f64 = col[j..].iter().zip(&v).map(|(x, y)| x * y).sum();
            let f = 2.0 * d / vnorm2;
            for (x, y) in col[j..].iter_mut().zip(&v) {
                *x -= f * y;
            }
        }
        let d: f64 = rhs[j..].iter().zip(&v).map(|(x, y)| x * y).sum();
        let f = 2.0 * d / vnorm2;
        for (x, y) in rhs[j..].iter_mut().zip(&v) {
            *x -= f * y;
        }
        diag[j] = a[j][j];
    }
    let dmax = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut sol = vec![0.0; k];
    for j in (0..rank).rev() {
        if diag[j].abs() <= 1e-12 * dmax {
            continue;
        }
        let mut s = rhs[j];
        for i in j + 1..rank {
            s -= a[i][j] * sol[i];
        }
        sol[j] = s / diag[j];
    }
    sol
}
