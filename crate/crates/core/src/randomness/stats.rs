//! Outlier filtering, normality testing, per-interval statistics and
//! autocorrelation of residual series.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::normal;

/// Quantile with linear interpolation between order statistics
/// (`p·(n−1)` positioning). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct IqrFiltered {
    pub kept: Vec<f64>,
    pub removed: usize,
}

/// Drops values outside `[Q1 − k·IQR, Q3 + k·IQR]`. Fewer than four values
/// pass through untouched.
pub fn iqr_filter(values: &[f64], k: f64) -> IqrFiltered {
    if values.len() < 4 {
        log::warn!("IQR filter needs at least 4 values, got {}; passing through", values.len());
        return IqrFiltered { kept: values.to_vec(), removed: 0 };
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let (lo, hi) = (q1 - k * (q3 - q1), q3 + k * (q3 - q1));
    let kept: Vec<f64> = values.iter().copied().filter(|&v| v >= lo && v <= hi).collect();
    IqrFiltered { removed: values.len() - kept.len(), kept }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (`n − 1` denominator).
pub fn std_dev(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() as f64 - 1.0)).sqrt()
}

/// Normal distribution the sample is compared against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KsReference {
    /// Sample mean and standard deviation.
    Estimated,
    Known { mean: f64, sd: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsOutcome {
    pub pass: bool,
    pub statistic: f64,
    /// Critical value of `statistic` at the requested significance.
    pub critical: f64,
}

/// Asymptotic Kolmogorov critical value `c(α)` of `√n·D`.
pub fn ks_critical_asymptotic(alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt()
}

/// One-sample Kolmogorov–Smirnov test of normality at significance `alpha`.
/// The critical value is `c(α)/(√n + 0.12 + 0.11/√n)`.
pub fn ks_normality(values: &[f64], alpha: f64, reference: KsReference) -> Result<KsOutcome> {
    let n = values.len();
    if n < 8 {
        return Err(invalid("KS test needs at least 8 values"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha must lie in (0, 1)"));
    }
    let (m, sd) = match reference {
        KsReference::Estimated => (mean(values), std_dev(values)),
        KsReference::Known { mean, sd } => (mean, sd),
    };
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::Degenerate("zero variance sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d = 0.0f64;
    for (i, &v) in sorted.iter().enumerate() {
        let f = normal::cdf((v - m) / sd);
        d = d.max((i as f64 + 1.0) / nf - f).max(f - i as f64 / nf);
    }
    let sqn = nf.sqrt();
    let critical = ks_critical_asymptotic(alpha) / (sqn + 0.12 + 0.11 / sqn);
    Ok(KsOutcome { pass: d < critical, statistic: d, critical })
}

/// Sample autocorrelation for lags `0..=max_lag`.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n <= max_lag {
        return Err(Error::SeriesTooShort { needed: max_lag + 1, got: n });
    }
    let m = mean(series);
    let denom: f64 = series.iter().map(|v| (v - m) * (v - m)).sum();
    if denom == 0.0 {
        return Err(Error::Degenerate("constant series has no autocorrelation".into()));
    }
    Ok((0..=max_lag)
        .map(|k| {
            if k == 0 {
                return 1.0;
            }
            (0..n - k).map(|t| (series[t] - m) * (series[t + k] - m)).sum::<f64>() / denom
        })
        .collect())
}

/// Length-scale from the run of significant lags starting at lag 1: the
/// last lag of that run times `factor` (default `1/√2`), at least 1.
pub fn select_length_scale(acf: &[f64], threshold: f64, factor: f64) -> f64 {
    let mut last = 0usize;
    for (k, &r) in acf.iter().enumerate().skip(1) {
        if r > threshold {
            last = k;
        } else {
            break;
        }
    }
    (last as f64 * factor).max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn iqr_examples() {
        let mut v: Vec<f64> = (1..=9).map(|i| i as f64).collect();
        v.push(100.0);
        let f = iqr_filter(&v, 1.5);
        assert_eq!(f.removed, 1);
        assert_eq!(f.kept.len(), 9);
        let sym = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0];
        assert_eq!(iqr_filter(&sym, 1.5).removed, 0);
        assert_eq!(iqr_filter(&[1.0, 50.0], 1.5).removed, 0);
    }

    #[test]
    fn ks_degenerate_sample_fails_explicitly() {
        assert!(matches!(ks_normality(&[1.0; 10], 0.05, KsReference::Estimated), Err(Error::Degenerate(_))));
        assert!(ks_normality(&[1.0; 5], 0.05, KsReference::Estimated).is_err());
    }

    #[test]
    fn critical_value_at_five_percent() {
        assert!((ks_critical_asymptotic(0.05) - 1.3581).abs() < 1e-4);
    }

    #[test]
    fn acf_lag_zero_and_length_scale_rule() {
        let s: Vec<f64> = (0..50).map(|i| ((i * 7919) % 13) as f64).collect();
        assert_eq!(acf(&s, 5).unwrap()[0], 1.0);
        assert_eq!(select_length_scale(&[1.0, 0.01, -0.02], 0.1, core::f64::consts::FRAC_1_SQRT_2), 1.0);
        let l = select_length_scale(&[1.0, 0.7, 0.4, 0.2, 0.05, 0.3], 0.1, core::f64::consts::FRAC_1_SQRT_2);
        assert!((l - 3.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!(acf(&vec![2.0; 10], 3).is_err());
    }
}
