//! Seeded synthetic data: household load histories, rooftop PV, wholesale
//! prices and the default network tariff schedule. Used when no CSV input is
//! supplied and by the test suites.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::vec::Vec;
use core::f64::consts::PI;

use alloc::vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::cbs::ChanceConfig;
use crate::error::Result;
use crate::randomness::RandomnessModel;
use crate::simulator::{build_profile, ProfileParams, Scenario};
use crate::time::{BatterySpec, HorizonConfig, TariffBook};

/// Daily tariff band of an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    OffPeak,
    Shoulder,
    Peak,
}

/// Hours bounding the shoulder and peak bands (local time, end exclusive).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandSchedule {
    pub peak: (f64, f64),
    pub morning_shoulder: (f64, f64),
    pub evening_shoulder: (f64, f64),
}

impl Default for BandSchedule {
    fn default() -> Self {
        BandSchedule { peak: (14.0, 20.0), morning_shoulder: (7.0, 14.0), evening_shoulder: (20.0, 22.0) }
    }
}

impl BandSchedule {
    pub fn band_at(&self, hour: f64) -> Band {
        let within = |(a, b): (f64, f64)| hour >= a && hour < b;
        if within(self.peak) {
            Band::Peak
        } else if within(self.morning_shoulder) || within(self.evening_shoulder) {
            Band::Shoulder
        } else {
            Band::OffPeak
        }
    }

    /// Band of zero-based absolute interval `index`.
    pub fn band_of(&self, index: usize, intervals_per_day: usize, dt: f64) -> Band {
        self.band_at((index % intervals_per_day) as f64 * dt)
    }
}

/// Network import charge per band, $/kWh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandRates {
    pub off_peak: f64,
    pub shoulder: f64,
    pub peak: f64,
}

impl BandRates {
    pub fn rate(&self, band: Band) -> f64 {
        match band {
            Band::OffPeak => self.off_peak,
            Band::Shoulder => self.shoulder,
            Band::Peak => self.peak,
        }
    }
}

impl Default for BandRates {
    fn default() -> Self {
        BandRates { off_peak: 0.03, shoulder: 0.06, peak: 0.27 }
    }
}

pub fn import_charges(len: usize, intervals_per_day: usize, dt: f64, schedule: &BandSchedule, rates: &BandRates) -> Vec<f64> {
    (0..len).map(|i| rates.rate(schedule.band_of(i, intervals_per_day, dt))).collect()
}

/// Typical household load shape over the day (kWh per hour, mean about 0.5).
pub fn load_shape(hour: f64) -> f64 {
    let bump = |centre: f64, width: f64| (-(hour - centre).powi(2) / (2.0 * width * width)).exp();
    0.25 + 0.35 * bump(7.5, 1.2) + 0.75 * bump(18.5, 2.0) + 0.1 * bump(13.0, 3.0)
}

/// Per-interval residual standard deviation as a fraction of the load: more
/// unpredictable in the morning and evening.
pub fn randomness_shape(hour: f64) -> f64 {
    let bump = |centre: f64, width: f64| (-(hour - centre).powi(2) / (2.0 * width * width)).exp();
    0.35 + 0.8 * bump(7.0, 1.5) + 1.0 * bump(19.0, 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadParams {
    /// Scale of the daily shape, 1 = average household.
    pub scale: f64,
    /// Residual standard deviation at the base of [`randomness_shape`], kWh.
    pub noise: f64,
    /// Autocorrelation of consecutive residuals.
    pub ar: f64,
    /// Fraction of intervals replaced by a spike.
    pub spike_fraction: f64,
    /// Weekend uplift of the daily shape.
    pub weekend: f64,
}

impl Default for LoadParams {
    fn default() -> Self {
        LoadParams { scale: 1.0, noise: 0.04, ar: 0.6, spike_fraction: 0.05, weekend: 0.15 }
    }
}

/// Residual standard deviation of every interval of the day, kWh.
pub fn residual_sigmas(params: &LoadParams, intervals_per_day: usize, dt: f64) -> Vec<f64> {
    (0..intervals_per_day)
        .map(|t| params.scale * params.noise * randomness_shape(t as f64 * dt))
        .collect()
}

/// Gaussian residuals with per-interval standard deviation `sigmas[t]`,
/// AR(1) correlated with coefficient `ar` (unit marginal variance before
/// scaling), with a fraction of entries replaced by large spikes.
pub fn residuals<R: Rng>(rng: &mut R, len: usize, sigmas: &[f64], ar: f64, spike_fraction: f64) -> Vec<f64> {
    let innov = (1.0 - ar * ar).sqrt();
    let mut z: f64 = StandardNormal.sample(rng);
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        if i > 0 {
            let e: f64 = StandardNormal.sample(rng);
            z = ar * z + innov * e;
        }
        let s = sigmas[i % sigmas.len()];
        let mut v = s * z;
        if rng.random_bool(spike_fraction) {
            let mag = rng.random_range(5.0..9.0) * s;
            v = if rng.random_bool(0.7) { mag } else { -mag };
        }
        out.push(v);
    }
    out
}

/// Half-hourly load history (kWh per interval), never below a small floor.
pub fn load_history<R: Rng>(rng: &mut R, days: usize, intervals_per_day: usize, dt: f64, params: &LoadParams) -> Vec<f64> {
    let len = days * intervals_per_day;
    let sigmas = residual_sigmas(params, intervals_per_day, dt);
    let noise = residuals(rng, len, &sigmas, params.ar, params.spike_fraction);
    let phase: f64 = rng.random_range(0.0..2.0 * PI);
    (0..len)
        .map(|i| {
            let day = i / intervals_per_day;
            let hour = (i % intervals_per_day) as f64 * dt;
            let weekly = if day % 7 >= 5 { 1.0 + params.weekend } else { 1.0 };
            let drift = 1.0 + 0.1 * (2.0 * PI * day as f64 / days.max(1) as f64 + phase).sin();
            let mean = params.scale * load_shape(hour) * dt * weekly * drift;
            (mean + noise[i]).max(0.02 * dt)
        })
        .collect()
}

/// Rooftop PV output (kWh per interval) for a system of `kwp` peak power
/// with a random daily cloud factor.
pub fn pv_series<R: Rng>(rng: &mut R, days: usize, intervals_per_day: usize, dt: f64, kwp: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(days * intervals_per_day);
    for _ in 0..days {
        let clear = rng.random_range(0.45..1.0);
        for t in 0..intervals_per_day {
            let hour = (t as f64 + 0.5) * dt;
            let sun = if (6.0..18.0).contains(&hour) { (PI * (hour - 6.0) / 12.0).sin().powf(1.5) } else { 0.0 };
            let flicker = rng.random_range(0.85..1.0);
            out.push(kwp * 0.8 * sun * clear * flicker * dt);
        }
    }
    out
}

/// Wholesale price series ($/kWh): low overnight, dipping (sometimes below
/// zero) at midday, with an evening peak and occasional spikes.
pub fn wholesale_prices<R: Rng>(rng: &mut R, len: usize, intervals_per_day: usize, dt: f64) -> Vec<f64> {
    let noise = Normal::new(0.0, 0.012).expect("valid normal");
    let mut out = Vec::with_capacity(len);
    let mut day_level = 1.0;
    let mut dip = 0.0;
    for i in 0..len {
        if i % intervals_per_day == 0 {
            day_level = rng.random_range(0.7..1.3);
            // Sunny days push midday prices below zero, roughly one day in three.
            dip = rng.random_range(0.0..0.12);
        }
        let hour = (i % intervals_per_day) as f64 * dt;
        let bump = |centre: f64, width: f64| (-(hour - centre).powi(2) / (2.0 * width * width)).exp();
        let mut p = day_level * (0.07 + 0.05 * bump(7.5, 1.0) + 0.18 * bump(18.0, 1.5)) - dip * bump(12.5, 2.0);
        p += noise.sample(rng);
        if rng.random_bool(0.01) {
            p += rng.random_range(0.2..1.0);
        }
        out.push(p);
    }
    out
}

/// Size and composition of a synthetic community.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeskParams {
    pub users: usize,
    /// The first `prosumers` users get rooftop PV.
    pub prosumers: usize,
    pub days: usize,
    /// Days of load history behind each user's expected consumption.
    pub history_days: usize,
    pub randomness: bool,
    /// Battery capacity per user, kWh.
    pub capacity_per_user: f64,
    /// Range of PV peak power, kWp.
    pub pv_kwp: (f64, f64),
}

impl Default for DeskParams {
    fn default() -> Self {
        DeskParams {
            users: 5,
            prosumers: 2,
            days: 7,
            history_days: 28,
            randomness: true,
            capacity_per_user: 2.0,
            pv_kwp: (3.5, 7.5),
        }
    }
}

/// Seeded synthetic community on half-hourly intervals with a one-day
/// lookahead, default tariffs and a battery scaled to the number of users.
pub fn desk_scenario(params: &DeskParams, seed: u64) -> Result<Scenario> {
    let cfg = HorizonConfig::new(48, 12, params.days, 0.5)?;
    let per_day = cfg.intervals_per_day();
    let len = cfg.series_len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let profile_params = ProfileParams::default();
    let mut users = Vec::with_capacity(params.users);
    let mut randomness = Vec::with_capacity(params.users);
    for n in 0..params.users {
        let load = LoadParams { scale: rng.random_range(0.7..1.4), ..LoadParams::default() };
        let history = load_history(&mut rng, params.history_days, per_day, cfg.dt, &load);
        let pv = if n < params.prosumers {
            let kwp = rng.random_range(params.pv_kwp.0..=params.pv_kwp.1);
            pv_series(&mut rng, params.days + 1, per_day, cfg.dt, kwp)
        } else {
            vec![0.0; len]
        };
        users.push(build_profile(&history, &pv, &cfg, &profile_params, &mut rng)?);
        randomness.push(RandomnessModel::from_sigmas(residual_sigmas(&load, per_day, cfg.dt), 2.1, 0.1));
    }
    let rt = wholesale_prices(&mut rng, len, per_day, cfg.dt);
    let imp = import_charges(len, per_day, cfg.dt, &profile_params.bands, &BandRates::default());
    let capacity = params.capacity_per_user * params.users as f64;
    Ok(Scenario {
        cfg,
        users,
        randomness,
        tariffs: TariffBook::from_series(rt, imp, vec![0.0; len]),
        battery: BatterySpec { capacity, e_init: 0.5 * capacity, ..BatterySpec::default() },
        chance: ChanceConfig::default(),
        draw_randomness: params.randomness,
        gp_window: 7 * per_day,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bands_follow_schedule() {
        let s = BandSchedule::default();
        assert_eq!(s.band_at(3.0), Band::OffPeak);
        assert_eq!(s.band_at(8.0), Band::Shoulder);
        assert_eq!(s.band_at(14.0), Band::Peak);
        assert_eq!(s.band_at(19.5), Band::Peak);
        assert_eq!(s.band_at(21.0), Band::Shoulder);
        assert_eq!(s.band_at(22.0), Band::OffPeak);
        assert_eq!(s.band_of(28, 48, 0.5), Band::Peak);
    }

    #[test]
    fn generators_are_seeded_and_sane() {
        let a = load_history(&mut ChaCha8Rng::seed_from_u64(3), 14, 48, 0.5, &LoadParams::default());
        let b = load_history(&mut ChaCha8Rng::seed_from_u64(3), 14, 48, 0.5, &LoadParams::default());
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| v > 0.0));
        let pv = pv_series(&mut ChaCha8Rng::seed_from_u64(4), 2, 48, 0.5, 5.0);
        assert_eq!(pv[0], 0.0);
        assert!(pv[24] > 0.5);
        let p = wholesale_prices(&mut ChaCha8Rng::seed_from_u64(5), 48 * 30, 48, 0.5);
        assert!(p.iter().any(|&v| v < 0.0));
    }

    #[test]
    fn residuals_have_requested_spread() {
        let sig = [0.2; 4];
        let r = residuals(&mut ChaCha8Rng::seed_from_u64(6), 40_000, &sig, 0.0, 0.0);
        let var = r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64;
        assert!((var.sqrt() - 0.2).abs() < 0.005);
    }
}
