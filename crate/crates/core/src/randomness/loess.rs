//! Local regression on equally spaced abscissae `0, 1, …, n−1` with tricube
//! weights, as used inside STL.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::vec::Vec;

/// Fitted value at position `x0` (which may lie outside `0..n`) from the
/// `q` nearest points of `y`, with local polynomial degree 0 or 1.
/// `rho` holds optional robustness weights.
pub fn loess_at(y: &[f64], q: usize, degree: u8, x0: f64, rho: Option<&[f64]>) -> f64 {
    let n = y.len();
    debug_assert!(n > 0 && q > 0);
    let q_eff = q.min(n);
    // Window of the q_eff nearest neighbours of x0.
    let mut left = if x0 <= 0.0 {
        0
    } else {
        let centre = x0.round() as isize;
        (centre - (q_eff as isize - 1) / 2).max(0) as usize
    };
    if left + q_eff > n {
        left = n - q_eff;
    }
    let right = left + q_eff;
    let mut max_dist = (x0 - left as f64).abs().max((x0 - (right - 1) as f64).abs());
    if q > n {
        max_dist += ((q - n) / 2) as f64;
    }
    let h = max_dist.max(1e-12);
    let (h_lo, h_hi) = (0.001 * h, 0.999 * h);

    let mut w = Vec::with_capacity(q_eff);
    let mut sw = 0.0;
    for j in left..right {
        let r = (j as f64 - x0).abs();
        let mut wj = if r <= h_lo {
            1.0
        } else if r > h_hi {
            0.0
        } else {
            let u = r / h;
            let t = 1.0 - u * u * u;
            t * t * t
        };
        if let Some(rho) = rho {
            wj *= rho[j];
        }
        sw += wj;
        w.push(wj);
    }
    if sw <= 0.0 {
        // Degenerate weights: fall back to the nearest observation.
        let j = (x0.round().max(0.0) as usize).min(n - 1);
        return y[j];
    }
    for v in w.iter_mut() {
        *v /= sw;
    }
    if degree >= 1 {
        let mut mean_x = 0.0;
        for (k, j) in (left..right).enumerate() {
            mean_x += w[k] * j as f64;
        }
        let mut c = 0.0;
        for (k, j) in (left..right).enumerate() {
            let d = j as f64 - mean_x;
            c += w[k] * d * d;
        }
        let range = (n - 1) as f64;
        if c.sqrt() > 0.001 * range {
            let b = (x0 - mean_x) / c;
            for (k, j) in (left..right).enumerate() {
                w[k] *= b * (j as f64 - mean_x) + 1.0;
            }
        }
    }
    let mut fit = 0.0;
    for (k, j) in (left..right).enumerate() {
        fit += w[k] * y[j];
    }
    fit
}

/// Smooths `y` at every position.
pub fn loess(y: &[f64], q: usize, degree: u8, rho: Option<&[f64]>) -> Vec<f64> {
    (0..y.len()).map(|i| loess_at(y, q, degree, i as f64, rho)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_data_is_reproduced_by_local_linear_fit() {
        let y: Vec<f64> = (0..30).map(|i| 2.0 + 0.5 * i as f64).collect();
        for q in [3, 7, 15, 31, 61] {
            for x0 in [-1.0, 0.0, 4.0, 29.0, 30.0] {
                let f = loess_at(&y, q, 1, x0, None);
                assert!((f - (2.0 + 0.5 * x0)).abs() < 1e-9, "q {q} x0 {x0}: {f}");
            }
        }
    }

    #[test]
    fn constant_data_is_fixed_point() {
        let y = [3.5; 12];
        assert!(loess(&y, 5, 0, None).iter().all(|v| (v - 3.5).abs() < 1e-12));
    }
}
