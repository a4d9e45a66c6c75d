//! Extraction and characterization of consumption randomness: multi-seasonal
//! decomposition, IQR outlier filtering, per-interval normal fits, KS
//! normality checks and autocorrelation.

pub mod loess;
pub mod stats;
pub mod stl;

#[allow(unused_imports)]
use num_traits::Float;

use alloc::vec;
use alloc::vec::Vec;

pub use stats::{acf, iqr_filter, ks_normality, select_length_scale, IqrFiltered, KsOutcome, KsReference};
pub use stl::{mstl_decompose, DecompositionResult, StlParams};

use crate::error::{invalid, Error, Result};

/// Per-user randomness statistics defining the non-stationary GP.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomnessModel {
    /// Standard deviation of each interval of the day, kWh.
    pub interval_sigma: Vec<f64>,
    pub interval_mu: Vec<f64>,
    /// Independent noise scale of each interval of the day, kWh.
    pub noise_sigma: Vec<f64>,
    pub normality_pass: Vec<bool>,
    pub outlier_fraction: f64,
    /// Squared-exponential length-scale, in intervals.
    pub length_scale: f64,
    pub signal_sigma: f64,
}

impl RandomnessModel {
    /// Model with the given per-interval deviations and default kernel
    /// settings, for tests and synthetic runs.
    pub fn from_sigmas(sigmas: Vec<f64>, length_scale: f64, noise_ratio: f64) -> Self {
        let n = sigmas.len();
        RandomnessModel {
            noise_sigma: sigmas.iter().map(|s| noise_ratio * s).collect(),
            interval_sigma: sigmas,
            interval_mu: vec![0.0; n],
            normality_pass: vec![true; n],
            outlier_fraction: 0.0,
            length_scale,
            signal_sigma: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.interval_sigma.len();
        if n == 0 || self.noise_sigma.len() != n {
            return Err(invalid("randomness model needs one sigma per interval"));
        }
        if self.interval_sigma.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(invalid("interval sigmas must be positive"));
        }
        if !(self.length_scale > 0.0) || !(self.signal_sigma > 0.0) {
            return Err(invalid("kernel length-scale and signal sigma must be positive"));
        }
        Ok(())
    }

    /// Fraction of intervals whose filtered residuals passed the KS test.
    pub fn normality_rate(&self) -> f64 {
        self.normality_pass.iter().filter(|&&p| p).count() as f64 / self.normality_pass.len().max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub intervals_per_day: usize,
    pub stl: StlParams,
    pub iqr_k: f64,
    pub alpha: f64,
    pub acf_max_lag: usize,
    /// Multiplier applied to the last significant lag.
    pub length_scale_factor: f64,
    /// Fixed length-scale used instead of the data-driven one.
    pub length_scale_override: Option<f64>,
    pub signal_sigma: f64,
    /// Noise standard deviation as a fraction of the interval sigma.
    pub noise_ratio: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            intervals_per_day: 48,
            stl: StlParams::default(),
            iqr_k: 1.5,
            alpha: 0.05,
            acf_max_lag: 48,
            length_scale_factor: core::f64::consts::FRAC_1_SQRT_2,
            length_scale_override: Some(2.1),
            signal_sigma: 1.0,
            noise_ratio: 0.1,
        }
    }
}

/// Result of [`fit_interval_stats`]: the fitted model (with kernel fields
/// left at their defaults) and the outlier mask of the input.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalFit {
    pub model: RandomnessModel,
    /// `true` where a residual was removed as an outlier.
    pub outlier: Vec<bool>,
    pub ks: Vec<Option<KsOutcome>>,
}

/// Groups `residuals` by interval of day, filters each group and fits a
/// normal distribution to the survivors.
pub fn fit_interval_stats(residuals: &[f64], cfg: &PipelineConfig) -> Result<IntervalFit> {
    let t_day = cfg.intervals_per_day;
    if t_day == 0 || residuals.len() < t_day {
        return Err(Error::SeriesTooShort { needed: t_day.max(1), got: residuals.len() });
    }
    let mut outlier = vec![false; residuals.len()];
    let mut sigma = vec![f64::NAN; t_day];
    let mut mu = vec![0.0; t_day];
    let mut pass = vec![false; t_day];
    let mut ks = vec![None; t_day];
    let mut removed = 0usize;
    for t in 0..t_day {
        let group: Vec<f64> = residuals.iter().skip(t).step_by(t_day).copied().collect();
        let filtered = iqr_filter(&group, cfg.iqr_k);
        removed += filtered.removed;
        if filtered.removed > 0 {
            let mut sorted = group.clone();
            sorted.sort_by(f64::total_cmp);
            let q1 = stats::quantile_sorted(&sorted, 0.25);
            let q3 = stats::quantile_sorted(&sorted, 0.75);
            let (lo, hi) = (q1 - cfg.iqr_k * (q3 - q1), q3 + cfg.iqr_k * (q3 - q1));
            for (d, &v) in group.iter().enumerate() {
                if v < lo || v > hi {
                    outlier[t + d * t_day] = true;
                }
            }
        }
        let kept = &filtered.kept;
        if kept.len() >= 2 {
            let m = stats::mean(kept);
            let s = stats::std_dev(kept);
            if s > 1e-12 * (1.0 + m.abs()) && s.is_finite() {
                sigma[t] = s;
                mu[t] = m;
                if m.abs() > 0.05 * s {
                    log::debug!("interval {t}: residual mean {m:.4} is not small against sigma {s:.4}");
                }
            }
        }
        match ks_normality(kept, cfg.alpha, KsReference::Estimated) {
            Ok(o) => {
                pass[t] = o.pass;
                ks[t] = Some(o);
            }
            Err(e) => log::warn!("interval {t}: normality test skipped ({e})"),
        }
    }
    impute_missing(&mut sigma)?;
    let model = RandomnessModel {
        noise_sigma: sigma.iter().map(|s| cfg.noise_ratio * s).collect(),
        interval_sigma: sigma,
        interval_mu: mu,
        normality_pass: pass,
        outlier_fraction: removed as f64 / residuals.len() as f64,
        length_scale: cfg.length_scale_override.unwrap_or(1.0),
        signal_sigma: cfg.signal_sigma,
    };
    Ok(IntervalFit { model, outlier, ks })
}

/// Replaces NaN entries by the mean of the nearest valid neighbours on
/// either side (cyclically).
fn impute_missing(sigma: &mut [f64]) -> Result<()> {
    let n = sigma.len();
    if sigma.iter().all(|s| s.is_nan()) {
        return Err(Error::Degenerate("no interval has a usable spread".into()));
    }
    let orig = sigma.to_vec();
    for t in 0..n {
        if !orig[t].is_nan() {
            continue;
        }
        let find = |step: isize| -> f64 {
            let mut k = t as isize;
            loop {
                k = (k + step).rem_euclid(n as isize);
                if !orig[k as usize].is_nan() {
                    return orig[k as usize];
                }
            }
        };
        sigma[t] = 0.5 * (find(-1) + find(1));
        log::warn!("interval {t}: degenerate residual spread, sigma imputed as {:.4}", sigma[t]);
    }
    Ok(())
}

/// Everything the randomness pipeline derives from one user's history.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomnessFit {
    pub decomposition: DecompositionResult,
    pub model: RandomnessModel,
    /// Autocorrelation of the outlier-filtered residual series.
    pub acf: Vec<f64>,
    /// Length-scale suggested by the significant lags.
    pub data_length_scale: f64,
}

/// Full pipeline on one consumption history.
pub fn fit_randomness(history: &[f64], cfg: &PipelineConfig) -> Result<RandomnessFit> {
    let t_day = cfg.intervals_per_day;
    let decomposition = mstl_decompose(history, &[t_day, 7 * t_day], &cfg.stl)?;
    let fit = fit_interval_stats(&decomposition.residual, cfg)?;
    // Outliers are set to their interval mean so the series keeps its time
    // alignment for the autocorrelation.
    let filtered: Vec<f64> = decomposition
        .residual
        .iter()
        .enumerate()
        .map(|(i, &r)| if fit.outlier[i] { fit.model.interval_mu[i % t_day] } else { r })
        .collect();
    let max_lag = cfg.acf_max_lag.min(filtered.len() - 1);
    let acf_values = acf(&filtered, max_lag)?;
    let threshold = 1.96 / (filtered.len() as f64).sqrt();
    let data_length_scale = select_length_scale(&acf_values, threshold, cfg.length_scale_factor);
    let mut model = fit.model;
    model.length_scale = cfg.length_scale_override.unwrap_or(data_length_scale);
    Ok(RandomnessFit { decomposition, model, acf: acf_values, data_length_scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degenerate_groups_are_imputed() {
        let t_day = 4;
        let mut r = Vec::new();
        for d in 0..20 {
            for t in 0..t_day {
                r.push(if t == 2 { 0.3 } else { ((d * 37 + t * 11) % 17) as f64 / 17.0 - 0.5 });
            }
        }
        let cfg = PipelineConfig { intervals_per_day: t_day, ..PipelineConfig::default() };
        let fit = fit_interval_stats(&r, &cfg).unwrap();
        let s = &fit.model.interval_sigma;
        assert!((s[2] - 0.5 * (s[1] + s[3])).abs() < 1e-12);
        assert!(!fit.model.normality_pass[2]);
    }

    #[test]
    fn known_sigmas_are_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sig: Vec<f64> = (0..48).map(|t| 0.1 + 0.1 * (t as f64 / 47.0)).collect();
        let r = synthetic::residuals(&mut rng, 48 * 84, &sig, 0.0, 0.0);
        let fit = fit_interval_stats(&r, &PipelineConfig::default()).unwrap();
        let rms = (0..48)
            .map(|t| ((fit.model.interval_sigma[t] - sig[t]) / sig[t]).powi(2))
            .sum::<f64>()
            .sqrt()
            / 48f64.sqrt();
        assert!(rms < 0.15, "{rms}");
        assert!(fit.model.normality_rate() > 0.9);
    }

    #[test]
    fn constant_sigma_recovered_with_many_days() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let r = synthetic::residuals(&mut rng, 48 * 1000, &[0.2; 48], 0.0, 0.0);
        let fit = fit_interval_stats(&r, &PipelineConfig::default()).unwrap();
        for &s in &fit.model.interval_sigma {
            assert!((0.18..=0.22).contains(&s), "{s}");
        }
        for t in 0..48 {
            assert!(fit.model.interval_mu[t].abs() < 0.05 * 0.2 * 4.0);
        }
    }

    #[test]
    fn pipeline_runs_on_synthetic_history() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let hist = synthetic::load_history(&mut rng, 28, 48, 0.5, &synthetic::LoadParams::default());
        let cfg = PipelineConfig { length_scale_override: None, ..PipelineConfig::default() };
        let fit = fit_randomness(&hist, &cfg).unwrap();
        assert!(fit.model.outlier_fraction > 0.01 && fit.model.outlier_fraction < 0.15);
        assert!(fit.data_length_scale >= 1.0);
        assert_eq!(fit.model.length_scale, fit.data_length_scale);
        assert!(fit.model.validate().is_ok());
    }
}
