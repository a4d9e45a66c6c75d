//! Homogeneous self-dual interior point method for
//! `min ½xᵀPx + qᵀx  s.t.  Ax + s = b,  s ∈ {0}ᵐᵉ × ℝ₊ᵐⁱ`.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::vec;
use alloc::vec::Vec;


use super::kkt::EnvelopeLdl;
use super::presolve::{Csr, Reduced};
use super::{Sense, SolveStatus, SolverSettings};
use crate::linalg::{dot, norm_inf};

pub(crate) struct IpmOutput {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    /// Multipliers of the reduced rows in `≤` orientation, original units.
    pub row_duals: Vec<f64>,
    pub iterations: usize,
    pub dual_residual: f64,
    pub complementarity: f64,
}

/// Problem data in conic form after row and cost scaling.
struct Conic {
    n: usize,
    /// General rows (two or more entries).
    a: Csr,
    b: Vec<f64>,
    zero: Vec<bool>,
    /// Factor mapping a scaled multiplier back to original units.
    dual_unscale: Vec<f64>,
    bnd_col: Vec<usize>,
    bnd_sign: Vec<f64>,
    bnd_b: Vec<f64>,
    p: Csr,
    q: Vec<f64>,
    cost_scale: f64,
}

impl Conic {
    fn new(red: &Reduced) -> Conic {
        let n = red.n;
        let mut a = Csr { start: vec![0], col: Vec::new(), val: Vec::new() };
        let mut b = Vec::new();
        let mut zero = Vec::new();
        let mut row_scale = Vec::new();
        for row in &red.rows {
            let r = row.vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            let orient = if row.sense == Sense::Ge { -1.0 } else { 1.0 };
            for (&c, &v) in row.cols.iter().zip(&row.vals) {
                a.col.push(c);
                a.val.push(orient * v / r);
            }
            a.start.push(a.col.len());
            b.push(orient * row.rhs / r);
            zero.push(row.sense == Sense::Eq);
            row_scale.push(r);
        }
        let mut bnd_col = Vec::new();
        let mut bnd_sign = Vec::new();
        let mut bnd_b = Vec::new();
        for j in 0..n {
            if red.ub[j].is_finite() {
                bnd_col.push(j);
                bnd_sign.push(1.0);
                bnd_b.push(red.ub[j]);
            }
            if red.lb[j].is_finite() {
                bnd_col.push(j);
                bnd_sign.push(-1.0);
                bnd_b.push(-red.lb[j]);
            }
        }
        let pmax = red.p.val.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = pmax.max(norm_inf(&red.q));
        let cost_scale = if scale > 0.0 { (1.0 / scale).clamp(1e-6, 1e6) } else { 1.0 };
        let mut p = red.p.clone();
        p.val.iter_mut().for_each(|v| *v *= cost_scale);
        let q = red.q.iter().map(|v| v * cost_scale).collect();
        let dual_unscale = row_scale
            .iter()
            .zip(&red.rows)
            .map(|(&r, row)| {
                let orient = if row.sense == Sense::Ge { -1.0 } else { 1.0 };
                orient / (r * cost_scale)
            })
            .collect();
        Conic { n, a, b, zero, dual_unscale, bnd_col, bnd_sign, bnd_b, p, q, cost_scale }
    }

    fn m_g(&self) -> usize {
        self.b.len()
    }

    fn m(&self) -> usize {
        self.b.len() + self.bnd_b.len()
    }

    /// `Ax` over all rows.
    fn a_mul(&self, x: &[f64], out: &mut [f64]) {
        let mg = self.m_g();
        self.a.mul(x, &mut out[..mg]);
        for k in 0..self.bnd_col.len() {
            out[mg + k] = self.bnd_sign[k] * x[self.bnd_col[k]];
        }
    }

    /// `Aᵀz`.
    fn at_mul(&self, z: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mg = self.m_g();
        self.a.mul_t_add(&z[..mg], out);
        for k in 0..self.bnd_col.len() {
            out[self.bnd_col[k]] += self.bnd_sign[k] * z[mg + k];
        }
    }

    fn b_all(&self) -> Vec<f64> {
        let mut b = self.b.clone();
        b.extend_from_slice(&self.bnd_b);
        b
    }

    fn is_zero_row(&self, i: usize) -> bool {
        i < self.m_g() && self.zero[i]
    }
}

/// Reduced KKT system `[P + D, Aᵀ; A, -H]` with bound rows folded into `D`.
struct Kkt {
    ldl: EnvelopeLdl,
    values: Vec<f64>,
    /// Pattern index of the first z diagonal.
    zdiag_begin: usize,
    p_diag: Vec<f64>,
    fold: Vec<f64>,
    h: Vec<f64>,
    reg: f64,
}

impl Kkt {
    fn new(c: &Conic, reg: f64) -> Kkt {
        let n = c.n;
        let mg = c.m_g();
        let mut pattern: Vec<(usize, usize)> = (0..n).map(|j| (j, j)).collect();
        let mut values = vec![0.0; n];
        let mut p_diag = vec![0.0; n];
        for i in 0..n {
            let (cols, vals) = c.p.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j == i {
                    p_diag[i] += v;
                } else if j < i {
                    pattern.push((i, j));
                    values.push(v);
                }
            }
        }
        for r in 0..mg {
            let (cols, vals) = c.a.row(r);
            for (&j, &v) in cols.iter().zip(vals) {
                pattern.push((n + r, j));
                values.push(v);
            }
        }
        let zdiag_begin = pattern.len();
        for r in 0..mg {
            pattern.push((n + r, n + r));
            values.push(0.0);
        }
        let mut signs = vec![1.0; n];
        signs.extend(core::iter::repeat(-1.0).take(mg));
        let ldl = EnvelopeLdl::new(n + mg, &pattern, &signs);
        Kkt {
            ldl,
            values,
            zdiag_begin,
            p_diag,
            fold: vec![0.0; n],
            h: vec![0.0; c.m()],
            reg,
        }
    }

    /// Sets the scaling `h` (length m, zero for equality rows) and factors.
    fn factor(&mut self, c: &Conic, h: &[f64]) {
        let n = c.n;
        let mg = c.m_g();
        self.h.copy_from_slice(h);
        self.fold.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..c.bnd_col.len() {
            self.fold[c.bnd_col[k]] += 1.0 / h[mg + k];
        }
        for j in 0..n {
            self.values[j] = self.p_diag[j] + self.fold[j] + self.reg;
        }
        for r in 0..mg {
            self.values[self.zdiag_begin + r] = -h[r] - self.reg;
        }
        self.ldl.factor(&self.values);
    }

    /// Unregularized product with the reduced matrix.
    fn mul_reduced(&self, c: &Conic, v: &[f64], out: &mut [f64]) {
        let n = c.n;
        let mg = c.m_g();
        let (vx, vz) = v.split_at(n);
        let (ox, oz) = out.split_at_mut(n);
        c.p.mul(vx, ox);
        for j in 0..n {
            ox[j] += self.fold[j] * vx[j];
        }
        c.a.mul_t_add(vz, ox);
        c.a.mul(vx, oz);
        for r in 0..mg {
            oz[r] -= self.h[r] * vz[r];
        }
    }

    fn residual(&self, c: &Conic, r: &[f64], y: &[f64], out: &mut [f64]) {
        self.mul_reduced(c, y, out);
        for (o, ri) in out.iter_mut().zip(r) {
            *o = ri - *o;
        }
    }

    /// Solves the full system for right-hand sides on x and on every row.
    fn solve(&mut self, c: &Conic, rx: &[f64], rz: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = c.n;
        let mg = c.m_g();
        let mut r = Vec::with_capacity(n + mg);
        r.extend_from_slice(rx);
        for k in 0..c.bnd_col.len() {
            let j = c.bnd_col[k];
            r[j] += c.bnd_sign[k] * rz[mg + k] / self.h[mg + k];
        }
        r.extend_from_slice(&rz[..mg]);

        let mut y = r.clone();
        self.ldl.solve(&mut y);
        let rnorm = norm_inf(&r);
        let mut e = vec![0.0; n + mg];
        let mut trial = vec![0.0; n + mg];
        self.residual(c, &r, &y, &mut e);
        let mut enorm = norm_inf(&e);
        for _ in 0..8 {
            if enorm <= 1e-14 * (1.0 + rnorm) {
                break;
            }
            self.ldl.solve(&mut e);
            for i in 0..n + mg {
                trial[i] = y[i] + e[i];
            }
            self.residual(c, &r, &trial, &mut e);
            let tnorm = norm_inf(&e);
            // Refinement against a singular matrix can diverge; keep the
            // best iterate.
            if !(tnorm < enorm) {
                break;
            }
            y.copy_from_slice(&trial);
            enorm = tnorm;
        }
        let mut dz = vec![0.0; c.m()];
        dz[..mg].copy_from_slice(&y[n..]);
        for k in 0..c.bnd_col.len() {
            let j = c.bnd_col[k];
            dz[mg + k] = (c.bnd_sign[k] * y[j] - rz[mg + k]) / self.h[mg + k];
        }
        y.truncate(n);
        (y, dz)
    }
}

fn shift_into_cone(v: &mut [f64], c: &Conic) {
    let mut lo = f64::INFINITY;
    for i in 0..v.len() {
        if !c.is_zero_row(i) {
            lo = lo.min(v[i]);
        }
    }
    if lo < 1e-8 {
        let shift = 1.0 - lo;
        for i in 0..v.len() {
            if !c.is_zero_row(i) {
                v[i] += shift;
            }
        }
    }
}

fn max_step(v: &[f64], dv: &[f64], c: &Conic) -> f64 {
    let mut a = f64::INFINITY;
    for i in 0..v.len() {
        if !c.is_zero_row(i) && dv[i] < 0.0 {
            a = a.min(-v[i] / dv[i]);
        }
    }
    a
}

struct Direction {
    dx: Vec<f64>,
    dz: Vec<f64>,
    ds: Vec<f64>,
    dtau: f64,
    dkappa: f64,
}

pub(crate) fn solve(red: &Reduced, settings: &SolverSettings) -> IpmOutput {
    let c = Conic::new(red);
    let n = c.n;
    let m = c.m();
    let mg = c.m_g();
    let b = c.b_all();
    let n_cone = (0..m).filter(|&i| !c.is_zero_row(i)).count();

    let mut kkt = Kkt::new(&c, settings.static_reg);

    // Starting point from a regularized least-squares solve.
    let ones = vec![1.0; m];
    kkt.factor(&c, &ones);
    let neg_q: Vec<f64> = c.q.iter().map(|v| -v).collect();
    let (mut x, mut z) = kkt.solve(&c, &neg_q, &b);
    let mut s: Vec<f64> = (0..m).map(|i| if c.is_zero_row(i) { 0.0 } else { -z[i] }).collect();
    shift_into_cone(&mut s, &c);
    shift_into_cone(&mut z, &c);
    let mut tau = 1.0f64;
    let mut kappa = 1.0f64;

    let bnorm = norm_inf(&b);
    let qnorm = norm_inf(&c.q);
    let mut px = vec![0.0; n];
    let mut ax = vec![0.0; m];
    let mut atz = vec![0.0; n];
    let mut rx = vec![0.0; n];
    let mut rz = vec![0.0; m];
    let mut h = vec![0.0; m];
    let mut stalls = 0;
    let mut status = SolveStatus::IterationLimit;
    let mut iterations = 0;
    let mut last = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut best = (f64::INFINITY, x.clone(), z.clone(), s.clone(), tau);

    for iter in 0..=settings.max_iter {
        iterations = iter;
        c.p.mul(&x, &mut px);
        c.a_mul(&x, &mut ax);
        c.at_mul(&z, &mut atz);
        for j in 0..n {
            rx[j] = px[j] + atz[j] + c.q[j] * tau;
        }
        for i in 0..m {
            rz[i] = ax[i] + s[i] - b[i] * tau;
        }
        let xpx = dot(&x, &px);
        let qx = dot(&c.q, &x);
        let bz = dot(&b, &z);
        let rtau = qx + bz + kappa + xpx / tau;

        let pres = norm_inf(&rz) / tau;
        let dres = norm_inf(&rx) / tau;
        let pobj = (0.5 * xpx / tau + qx) / tau;
        let dobj = (-0.5 * xpx / tau - bz) / tau;
        let gap = (pobj - dobj).abs();
        let p_scale = 1.0 + (norm_inf(&ax) / tau).max(norm_inf(&s) / tau).max(bnorm);
        let d_scale = 1.0 + (norm_inf(&px) / tau).max(norm_inf(&atz) / tau).max(qnorm);
        let g_scale = 1.0 + pobj.abs().min(dobj.abs());
        last = (pres / p_scale, dres / d_scale, gap / g_scale);
        let merit = last.0.max(last.1).max(last.2);
        log::trace!("ipm {iter}: res {:.2e} {:.2e} {:.2e} tau {tau:.2e} kappa {kappa:.2e} bz {bz:.2e} atz {:.2e} qx {qx:.2e} px {:.2e} z {:.2e}", last.0, last.1, last.2, norm_inf(&atz), norm_inf(&px), norm_inf(&z));
        if merit < best.0 {
            best = (merit, x.clone(), z.clone(), s.clone(), tau);
        } else if best.0 <= settings.tol_reduced && merit > 1e3 * best.0 {
            // Accuracy is being lost; fall back to the best iterate.
            break;
        }
        if last.0 <= settings.tol && last.1 <= settings.tol && last.2 <= settings.tol {
            status = SolveStatus::Optimal;
            break;
        }
        if tau <= kappa {
            // Once the embedding has collapsed onto tau = 0 the iterate is a
            // certificate up to round-off, so a looser ratio is accepted.
            let eps = if tau <= 1e-10 * kappa.max(1.0) { 1e-5 } else { settings.tol_infeasible };
            if bz < 0.0 && norm_inf(&atz) <= eps * (-bz) {
                status = SolveStatus::Infeasible;
                break;
            }
            if qx < 0.0 && norm_inf(&px) <= eps * (-qx) && {
                let mut r = 0.0f64;
                for i in 0..m {
                    r = r.max((ax[i] + s[i]).abs());
                }
                r <= eps * (-qx)
            } {
                status = SolveStatus::Unbounded;
                break;
            }
        }
        if iter == settings.max_iter || stalls >= 3 {
            break;
        }

        for i in 0..m {
            h[i] = if c.is_zero_row(i) { 0.0 } else { s[i] / z[i] };
        }
        kkt.factor(&c, &h);

        let neg_q: Vec<f64> = c.q.iter().map(|v| -v).collect();
        let (x1, z1) = kkt.solve(&c, &neg_q, &b);
        let mut w = x1.clone();
        for j in 0..n {
            w[j] -= x[j] / tau;
        }
        let mut pw = vec![0.0; n];
        c.p.mul(&w, &mut pw);
        let mut denom = -dot(&w, &pw) - kappa / tau;
        for i in 0..m {
            denom -= z1[i] * h[i] * z1[i];
        }
        let q2: Vec<f64> = (0..n).map(|j| c.q[j] + 2.0 * px[j] / tau).collect();

        let mu = (dot(&s, &z) + tau * kappa) / (n_cone as f64 + 1.0);

        let direction = |kkt: &mut Kkt, eta: f64, ds: &[f64], dk: f64| -> Direction {
            let rhs_x: Vec<f64> = rx.iter().map(|v| -eta * v).collect();
            let rhs_z: Vec<f64> = (0..m)
                .map(|i| {
                    if c.is_zero_row(i) {
                        -eta * rz[i]
                    } else {
                        -eta * rz[i] + ds[i] / z[i]
                    }
                })
                .collect();
            let (x2, z2) = kkt.solve(&c, &rhs_x, &rhs_z);
            let num = -eta * rtau + dk / tau - dot(&q2, &x2) - dot(&b, &z2);
            let dtau = num / denom;
            let dx: Vec<f64> = (0..n).map(|j| x2[j] + dtau * x1[j]).collect();
            let dz: Vec<f64> = (0..m).map(|i| z2[i] + dtau * z1[i]).collect();
            let dsv: Vec<f64> = (0..m)
                .map(|i| if c.is_zero_row(i) { 0.0 } else { -(ds[i] + s[i] * dz[i]) / z[i] })
                .collect();
            let dkappa = -(dk + kappa * dtau) / tau;
            Direction { dx, dz, ds: dsv, dtau, dkappa }
        };
        let step = |d: &Direction| -> f64 {
            let mut a = max_step(&s, &d.ds, &c).min(max_step(&z, &d.dz, &c));
            if d.dtau < 0.0 {
                a = a.min(-tau / d.dtau);
            }
            if d.dkappa < 0.0 {
                a = a.min(-kappa / d.dkappa);
            }
            a
        };

        // Predictor.
        let ds_aff: Vec<f64> = (0..m).map(|i| s[i] * z[i]).collect();
        let aff = direction(&mut kkt, 1.0, &ds_aff, tau * kappa);
        let alpha_aff = step(&aff).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3);

        // Corrector.
        let ds_cc: Vec<f64> = (0..m)
            .map(|i| {
                if c.is_zero_row(i) {
                    0.0
                } else {
                    s[i] * z[i] - sigma * mu + aff.ds[i] * aff.dz[i]
                }
            })
            .collect();
        let dk_cc = tau * kappa - sigma * mu + aff.dtau * aff.dkappa;
        let d = direction(&mut kkt, 1.0 - sigma, &ds_cc, dk_cc);
        let alpha = (0.99 * step(&d)).min(1.0);
        if alpha < 1e-10 {
            stalls += 1;
        }
        for j in 0..n {
            x[j] += alpha * d.dx[j];
        }
        for i in 0..m {
            z[i] += alpha * d.dz[i];
            s[i] += alpha * d.ds[i];
        }
        tau += alpha * d.dtau;
        kappa += alpha * d.dkappa;
        if !(tau > 0.0) || !tau.is_finite() || x.iter().any(|v| !v.is_finite()) {
            break;
        }
    }

    if status == SolveStatus::IterationLimit {
        if best.0 <= settings.tol_reduced {
            status = SolveStatus::Optimal;
            x = best.1;
            z = best.2;
            s = best.3;
            tau = best.4;
        } else {
            log::debug!(
                "interior point stopped after {iterations} iterations with residuals {:.2e} {:.2e} {:.2e}",
                last.0,
                last.1,
                last.2
            );
        }
    }

    let mut xs: Vec<f64> = x.iter().map(|v| v / tau).collect();
    let mut zs: Vec<f64> = z.iter().map(|v| v / tau).collect();
    let mut ss: Vec<f64> = s.iter().map(|v| v / tau).collect();
    if status == SolveStatus::Optimal {
        if let Some((xp, zp, sp)) = polish(&c, &mut kkt, &xs, &zs, &ss, &b) {
            xs = xp;
            zs = zp;
            ss = sp;
        }
    }
    c.p.mul(&xs, &mut px);
    c.at_mul(&zs, &mut atz);
    let mut dres = 0.0f64;
    for j in 0..n {
        dres = dres.max((px[j] + atz[j] + c.q[j]).abs());
    }
    let mut comp = 0.0f64;
    for i in 0..m {
        comp = comp.max((ss[i] * zs[i]).abs());
    }
    let row_duals = (0..mg).map(|i| zs[i] * c.dual_unscale[i]).collect();
    IpmOutput {
        status,
        x: xs,
        row_duals,
        iterations,
        dual_residual: dres / c.cost_scale,
        complementarity: comp / c.cost_scale,
    }
}

fn objective(c: &Conic, x: &[f64]) -> f64 {
    let mut px = vec![0.0; x.len()];
    c.p.mul(x, &mut px);
    0.5 * dot(x, &px) + dot(&c.q, x)
}

/// Re-solves the KKT system with the active set guessed from the interior
/// point (`z > s`), which recovers exact solutions on degenerate problems.
/// Returns `None` when the guess is not primal-dual feasible.
fn polish(
    c: &Conic,
    kkt: &mut Kkt,
    x: &[f64],
    z: &[f64],
    s: &[f64],
    b: &[f64],
) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let m = c.m();
    let n = c.n;
    let h: Vec<f64> = (0..m)
        .map(|i| {
            if c.is_zero_row(i) {
                0.0
            } else if z[i] > s[i] {
                1e-13
            } else {
                1e13
            }
        })
        .collect();
    kkt.factor(c, &h);
    let neg_q: Vec<f64> = c.q.iter().map(|v| -v).collect();
    let (xp, mut zp) = kkt.solve(c, &neg_q, b);
    if xp.iter().chain(&zp).any(|v| !v.is_finite()) {
        return None;
    }
    let mut ax = vec![0.0; m];
    c.a_mul(&xp, &mut ax);
    let zmax = norm_inf(z).max(1.0);
    let mut sp = vec![0.0; m];
    for i in 0..m {
        let slack = b[i] - ax[i];
        let tol = 1e-9 * (1.0 + b[i].abs());
        if c.is_zero_row(i) {
            if slack.abs() > tol {
                return None;
            }
        } else {
            if slack < -tol {
                return None;
            }
            sp[i] = slack.max(0.0);
            if h[i] > 1.0 {
                zp[i] = 0.0;
            } else {
                if zp[i] < -1e-9 * zmax {
                    return None;
                }
                zp[i] = zp[i].max(0.0);
                sp[i] = 0.0;
            }
        }
    }
    let mut px = vec![0.0; n];
    let mut atz = vec![0.0; n];
    c.p.mul(&xp, &mut px);
    c.at_mul(&zp, &mut atz);
    let mut dres = 0.0f64;
    let mut dres_old = 0.0f64;
    let mut px_old = vec![0.0; n];
    let mut atz_old = vec![0.0; n];
    c.p.mul(x, &mut px_old);
    c.at_mul(z, &mut atz_old);
    for j in 0..n {
        dres = dres.max((px[j] + atz[j] + c.q[j]).abs());
        dres_old = dres_old.max((px_old[j] + atz_old[j] + c.q[j]).abs());
    }
    if dres > dres_old.max(1e-10 * (1.0 + norm_inf(&c.q))) {
        return None;
    }
    let f_new = objective(c, &xp);
    let f_old = objective(c, x);
    if f_new > f_old + 1e-9 * (1.0 + f_old.abs()) {
        return None;
    }
    Some((xp, zp, sp))
}
