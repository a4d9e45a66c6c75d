//! Dense active-set enumeration for tiny QPs, built on nalgebra.

use commbatt_core::qp::{QuadraticProgram, Sense};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub const INF: f64 = f64::INFINITY;

/// A row `a x (<=|=) b` of the oracle's internal form.
struct Row {
    a: Vec<f64>,
    b: f64,
    eq: bool,
}

fn rows_of(qp: &QuadraticProgram) -> Vec<Row> {
    let n = qp.num_vars();
    let mut rows = Vec::new();
    for c in &qp.constraints {
        let mut a = vec![0.0; n];
        for &(j, v) in &c.terms {
            a[j] += v;
        }
        match c.sense {
            Sense::Le => rows.push(Row { a, b: c.rhs, eq: false }),
            Sense::Ge => rows.push(Row { a: a.iter().map(|v| -v).collect(), b: -c.rhs, eq: false }),
            Sense::Eq => rows.push(Row { a, b: c.rhs, eq: true }),
        }
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        if qp.lower[j] == qp.upper[j] {
            rows.push(Row { a: e, b: qp.upper[j], eq: true });
            continue;
        }
        if qp.upper[j].is_finite() {
            rows.push(Row { a: e.clone(), b: qp.upper[j], eq: false });
        }
        if qp.lower[j].is_finite() {
            rows.push(Row { a: e.iter().map(|v| -v).collect(), b: -qp.lower[j], eq: false });
        }
    }
    rows
}

/// Optimal objective of a convex QP (binaries relaxed) by enumerating
/// active sets; `None` when no KKT point exists (infeasible or unbounded).
pub fn continuous_optimum(qp: &QuadraticProgram) -> Option<f64> {
    let n = qp.num_vars();
    let rows = rows_of(qp);
    let eqs: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].eq).collect();
    let ineqs: Vec<usize> = (0..rows.len()).filter(|&i| !rows[i].eq).collect();
    let mut qm = DMatrix::<f64>::zeros(n, n);
    for &(i, j, v) in &qp.quad {
        qm[(i, j)] += v;
        if i != j {
            qm[(j, i)] += v;
        }
    }
    let mut best: Option<f64> = None;
    let max_active = n.saturating_sub(0).min(ineqs.len());
    let mut subset: Vec<usize> = Vec::new();
    enumerate(&ineqs, 0, max_active, &mut subset, &mut |active| {
        let set: Vec<usize> = eqs.iter().chain(active.iter()).copied().collect();
        let k = set.len();
        let dim = n + k;
        let mut kkt = DMatrix::<f64>::zeros(dim, dim);
        let mut rhs = DVector::<f64>::zeros(dim);
        for i in 0..n {
            for j in 0..n {
                kkt[(i, j)] = qm[(i, j)];
            }
            rhs[i] = -qp.cost[i];
        }
        for (r, &ri) in set.iter().enumerate() {
            for j in 0..n {
                kkt[(n + r, j)] = rows[ri].a[j];
                kkt[(j, n + r)] = rows[ri].a[j];
            }
            rhs[n + r] = rows[ri].b;
        }
        let svd = kkt.clone().svd(true, true);
        let Ok(sol) = svd.solve(&rhs, 1e-11) else { return };
        let resid = (&kkt * &sol - &rhs).amax();
        if resid > 1e-8 * (1.0 + rhs.amax()) {
            return;
        }
        let x: Vec<f64> = (0..n).map(|j| sol[j]).collect();
        for (r, &ri) in set.iter().enumerate() {
            if !rows[ri].eq && sol[n + r] < -1e-9 {
                return;
            }
        }
        for row in &rows {
            let act: f64 = row.a.iter().zip(&x).map(|(a, b)| a * b).sum();
            let tol = 1e-8 * (1.0 + row.b.abs());
            if act > row.b + tol || (row.eq && act < row.b - tol) {
                return;
            }
        }
        let f = qp.objective(&x);
        best = Some(best.map_or(f, |b: f64| b.min(f)));
    });
    best
}

fn enumerate(
    items: &[usize],
    start: usize,
    max: usize,
    subset: &mut Vec<usize>,
    visit: &mut dyn FnMut(&[usize]),
) {
    visit(subset);
    if subset.len() == max {
        return;
    }
    for i in start..items.len() {
        subset.push(items[i]);
        enumerate(items, i + 1, max, subset, visit);
        subset.pop();
    }
}

/// Best objective over every assignment of the binaries.
pub fn mixed_optimum(qp: &QuadraticProgram) -> Option<f64> {
    let nb = qp.binaries.len();
    let mut best: Option<f64> = None;
    for mask in 0..(1u32 << nb) {
        let mut fixed = qp.clone();
        for (k, &b) in qp.binaries.iter().enumerate() {
            let v = ((mask >> k) & 1) as f64;
            fixed.lower[b] = v;
            fixed.upper[b] = v;
        }
        if let Some(f) = continuous_optimum(&fixed) {
            best = Some(best.map_or(f, |b: f64| b.min(f)));
        }
    }
    best
}

/// Random feasible, bounded instance: either a strictly convex QP with free
/// variables, or a small PSD/linear problem inside a box. Up to
/// `max_binaries` binaries are coupled into the rows.
pub fn random_instance<R: Rng>(rng: &mut R, max_binaries: usize) -> QuadraticProgram {
    let strictly_convex = rng.random_bool(0.5);
    let n = if strictly_convex { rng.random_range(1..=10) } else { rng.random_range(1..=4) };
    let nb = if max_binaries == 0 { 0 } else { rng.random_range(0..=max_binaries) };
    let mut qp = QuadraticProgram::new();
    let bound = if strictly_convex { INF } else { 3.0 };
    for _ in 0..n {
        qp.add_variable(-bound, bound, rng.random_range(-2.0..2.0));
    }
    let bins: Vec<usize> = (0..nb).map(|_| qp.add_binary(rng.random_range(-1.0..1.0))).collect();
    let rank = if strictly_convex { n } else { rng.random_range(0..=n) };
    let b: Vec<Vec<f64>> = (0..rank).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    for i in 0..n {
        for j in i..n {
            let mut v: f64 = b.iter().map(|row| row[i] * row[j]).sum();
            if strictly_convex && i == j {
                v += 0.1;
            }
            if v != 0.0 {
                qp.add_quadratic(i, j, v);
            }
        }
    }
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b0: Vec<f64> = (0..nb).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
    let m = rng.random_range(1..=if strictly_convex { 8 } else { 6 });
    let n_eq = if n > 1 { rng.random_range(0..=2.min(n - 1)) } else { 0 };
    for r in 0..m + n_eq {
        let mut terms: Vec<(usize, f64)> = (0..n).map(|j| (j, rng.random_range(-1.0..1.0))).collect();
        for (k, &bj) in bins.iter().enumerate() {
            if rng.random_bool(0.5) {
                terms.push((bj, rng.random_range(-2.0..2.0)));
            }
            let _ = k;
        }
        let mut act: f64 = terms.iter().filter(|t| t.0 < n).map(|t| t.1 * x0[t.0]).sum();
        for &(j, a) in terms.iter().filter(|t| t.0 >= n) {
            act += a * b0[j - n];
        }
        if r < m {
            qp.add_constraint(terms, Sense::Le, act + rng.random_range(0.0..1.0));
        } else {
            qp.add_constraint(terms, Sense::Eq, act);
        }
    }
    qp
}
