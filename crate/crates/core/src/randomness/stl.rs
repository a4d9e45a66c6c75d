//! Seasonal-trend decomposition by loess, and its multi-seasonal extension
//! applying STL once per period in ascending order over repeated passes.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::vec;
use alloc::vec::Vec;

use super::loess::{loess, loess_at};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StlParams {
    /// Seasonal smoother span in cycles (odd, >= 7 recommended).
    pub seasonal_window: usize,
    /// Trend smoother span in points; `None` picks the next odd number
    /// at or above 1.5 times the longest period.
    pub trend_window: Option<usize>,
    /// Inner-loop iterations per STL fit.
    pub inner_iterations: usize,
    /// Passes over all periods in the multi-seasonal fit.
    pub passes: usize,
}

impl Default for StlParams {
    fn default() -> Self {
        StlParams { seasonal_window: 11, trend_window: None, inner_iterations: 2, passes: 2 }
    }
}

fn next_odd(v: f64) -> usize {
    let mut k = v.ceil() as usize;
    if k % 2 == 0 {
        k += 1;
    }
    k.max(3)
}

/// One STL fit of `y` with period `period`; returns `(seasonal, trend)`.
pub fn stl(y: &[f64], period: usize, seasonal_window: usize, trend_window: usize, inner: usize) -> (Vec<f64>, Vec<f64>) {
    let n = y.len();
    let np = period;
    let low_pass = next_odd(np as f64);
    let mut seasonal = vec![0.0; n];
    let mut trend = vec![0.0; n];
    let mut detrended = vec![0.0; n];
    let mut cycle = vec![0.0; n + 2 * np];
    let mut sub = Vec::with_capacity(n / np + 1);
    for _ in 0..inner.max(1) {
        for i in 0..n {
            detrended[i] = y[i] - trend[i];
        }
        // Smooth each cycle-subseries and extend it one period either side.
        for k in 0..np {
            sub.clear();
            sub.extend((k..n).step_by(np).map(|i| detrended[i]));
            let m = sub.len();
            if m == 0 {
                continue;
            }
            cycle[k] = loess_at(&sub, seasonal_window, 1, -1.0, None);
            for (j, v) in loess(&sub, seasonal_window, 1, None).into_iter().enumerate() {
                cycle[np + k + j * np] = v;
            }
            let after = np + k + m * np;
            if after < cycle.len() {
                cycle[after] = loess_at(&sub, seasonal_window, 1, m as f64, None);
            }
        }
        // Low-pass filter of the cycle-subseries.
        let a = moving_average(&cycle, np);
        let b = moving_average(&a, np);
        let c = moving_average(&b, 3);
        let low = loess(&c, low_pass, 1, None);
        for i in 0..n {
            seasonal[i] = cycle[np + i] - low[i];
        }
        let deseason: Vec<f64> = (0..n).map(|i| y[i] - seasonal[i]).collect();
        trend = loess(&deseason, trend_window, 1, None);
    }
    (seasonal, trend)
}

fn moving_average(x: &[f64], w: usize) -> Vec<f64> {
    if x.len() < w {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(x.len() - w + 1);
    let mut s: f64 = x[..w].iter().sum();
    out.push(s / w as f64);
    for i in w..x.len() {
        s += x[i] - x[i - w];
        out.push(s / w as f64);
    }
    out
}

/// Additive decomposition into one seasonal series per period, a trend and
/// a residual. `residual` is defined as the exact remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionResult {
    pub periods: Vec<usize>,
    pub seasonals: Vec<Vec<f64>>,
    pub trend: Vec<f64>,
    pub residual: Vec<f64>,
}

impl DecompositionResult {
    /// Seasonal component of the shortest period.
    pub fn daily_seasonal(&self) -> &[f64] {
        &self.seasonals[0]
    }

    /// Seasonal component of the longest period.
    pub fn weekly_seasonal(&self) -> &[f64] {
        &self.seasonals[self.seasonals.len() - 1]
    }

    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = self.trend.clone();
        for s in &self.seasonals {
            for (o, v) in out.iter_mut().zip(s) {
                *o += v;
            }
        }
        for (o, v) in out.iter_mut().zip(&self.residual) {
            *o += v;
        }
        out
    }
}

/// Multi-seasonal decomposition of `series` with the given periods.
pub fn mstl_decompose(series: &[f64], periods: &[usize], params: &StlParams) -> Result<DecompositionResult> {
    if periods.is_empty() || periods.contains(&0) || periods.contains(&1) {
        return Err(invalid("periods must all exceed one"));
    }
    let mut periods = periods.to_vec();
    periods.sort_unstable();
    periods.dedup();
    let longest = *periods.last().unwrap();
    let needed = 2 * longest;
    if series.len() < needed {
        return Err(Error::SeriesTooShort { needed, got: series.len() });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(invalid("series contains non-finite values"));
    }
    if params.seasonal_window < 3 {
        return Err(invalid("seasonal window must be at least 3"));
    }
    let trend_window = params.trend_window.unwrap_or_else(|| next_odd(1.5 * longest as f64));
    let n = series.len();
    let mut seasonals = vec![vec![0.0; n]; periods.len()];
    let mut deseason = series.to_vec();
    let mut trend = vec![0.0; n];
    for _ in 0..params.passes.max(1) {
        for (k, &p) in periods.iter().enumerate() {
            for i in 0..n {
                deseason[i] += seasonals[k][i];
            }
            let (s, t) = stl(&deseason, p, params.seasonal_window, trend_window, params.inner_iterations);
            for i in 0..n {
                deseason[i] -= s[i];
            }
            seasonals[k] = s;
            trend = t;
        }
    }
    let residual = (0..n)
        .map(|i| {
            let mut r = series[i] - trend[i];
            for s in &seasonals {
                r -= s[i];
            }
            r
        })
        .collect();
    Ok(DecompositionResult { periods, seasonals, trend, residual })
}
