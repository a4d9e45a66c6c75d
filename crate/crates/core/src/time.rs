//! Time indexing and the shared domain records: horizon layout, tariffs and
//! battery parameters.
//!
//! Horizon indices are zero-based internally (`0..H`); [`HorizonConfig::reindex`]
//! keeps the one-based `(day, interval)` convention used in reports.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonConfig {
    /// Intervals per lookahead window (one day by default).
    pub intervals: usize,
    /// Rebound window length, `1 <= rebound <= intervals`.
    pub rebound: usize,
    /// Number of simulated days.
    pub days: usize,
    /// Interval length in hours.
    pub dt: f64,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        HorizonConfig { intervals: 48, rebound: 12, days: 84, dt: 0.5 }
    }
}

impl HorizonConfig {
    pub fn new(intervals: usize, rebound: usize, days: usize, dt: f64) -> Result<Self> {
        let cfg = HorizonConfig { intervals, rebound, days, dt };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.intervals == 0 {
            return Err(invalid("intervals per horizon must be positive"));
        }
        if self.rebound == 0 || self.rebound > self.intervals {
            return Err(invalid(format!(
                "rebound window {} must lie in 1..={}",
                self.rebound, self.intervals
            )));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid("interval length must be positive"));
        }
        Ok(())
    }

    /// Total number of receding horizons, one per simulated interval.
    pub fn horizons(&self) -> usize {
        self.days * self.intervals
    }

    /// Length every input series must have so that the last horizon still
    /// sees a full lookahead window.
    pub fn series_len(&self) -> usize {
        self.horizons() + self.intervals - 1
    }

    pub fn intervals_per_day(&self) -> usize {
        self.intervals
    }

    /// One-based `(day, interval)` to one-based horizon index.
    pub fn reindex(&self, day: usize, interval: usize) -> Result<usize> {
        if day == 0 || day > self.days || interval == 0 || interval > self.intervals {
            return Err(Error::OutOfRange(format!(
                "(day {day}, interval {interval}) outside 1..={} x 1..={}",
                self.days, self.intervals
            )));
        }
        Ok((day - 1) * self.intervals + interval)
    }

    /// Inverse of [`reindex`](Self::reindex).
    pub fn split(&self, horizon: usize) -> Result<(usize, usize)> {
        if horizon == 0 || horizon > self.horizons() {
            return Err(Error::OutOfRange(format!(
                "horizon {horizon} outside 1..={}",
                self.horizons()
            )));
        }
        let zero = horizon - 1;
        Ok((zero / self.intervals + 1, zero % self.intervals + 1))
    }

    /// Interval-of-day (zero-based) of a zero-based absolute index.
    pub fn interval_of_day(&self, index: usize) -> usize {
        index % self.intervals
    }
}

/// Prices and charges. Series are indexed by absolute interval and must
/// cover every lookahead window of the run.
#[derive(Debug, Clone, PartialEq)]
pub struct TariffBook {
    /// Real-time wholesale price, $/kWh (may be negative).
    pub rt_price: Vec<f64>,
    /// End-user network import charge, $/kWh.
    pub import_charge: Vec<f64>,
    /// End-user network export charge, $/kWh (positive discourages export).
    pub export_charge: Vec<f64>,
    /// Operator network charge on grid energy used for charging, $/kWh.
    pub grid_charge: f64,
    /// Peak demand incentive, $/kW of peak reduction per year.
    pub peak_incentive: f64,
    /// Operator fixed network charge, $/kW per day of battery power capacity.
    pub fixed_charge: f64,
    /// Solar-credit usage charge paid by prosumers, $/kWh.
    pub credit_charge: f64,
    /// Refund paid for credits remaining at the end of the billing period, $/kWh.
    pub credit_refund: f64,
    /// Battery throughput cost on charged energy, $/kWh.
    pub opex: f64,
}

impl TariffBook {
    /// Tariff book over the given price series with the default scalar
    /// charges: 2 c/kWh grid charge, $120/kW-year peak incentive, 1.5 c/kW
    /// per day fixed charge, 10 c/kWh credit usage, 5 c/kWh credit refund and
    /// 2.2 c/kWh opex.
    pub fn from_series(rt_price: Vec<f64>, import_charge: Vec<f64>, export_charge: Vec<f64>) -> Self {
        TariffBook {
            rt_price,
            import_charge,
            export_charge,
            grid_charge: 0.02,
            peak_incentive: 120.0,
            fixed_charge: 0.015,
            credit_charge: 0.1,
            credit_refund: 0.05,
            opex: 0.022,
        }
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        for (name, s) in [
            ("rt_price", &self.rt_price),
            ("import_charge", &self.import_charge),
            ("export_charge", &self.export_charge),
        ] {
            if s.len() < len {
                return Err(Error::SeriesTooShort { needed: len, got: s.len() });
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("{name} contains non-finite values")));
            }
        }
        if self.import_charge.iter().any(|&v| v < 0.0) {
            return Err(invalid("import charges must be non-negative"));
        }
        for (name, v) in [
            ("grid_charge", self.grid_charge),
            ("peak_incentive", self.peak_incentive),
            ("fixed_charge", self.fixed_charge),
            ("credit_charge", self.credit_charge),
            ("credit_refund", self.credit_refund),
            ("opex", self.opex),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be a non-negative number")));
            }
        }
        Ok(())
    }

    fn window(&self, start: usize, len: usize) -> Result<core::ops::Range<usize>> {
        let end = start + len;
        let avail = self.rt_price.len().min(self.import_charge.len());
        if end > avail {
            return Err(Error::OutOfRange(format!(
                "window [{start}, {end}) exceeds price data of length {avail}"
            )));
        }
        Ok(start..end)
    }

    /// Reference price of the horizon starting at zero-based index `start`:
    /// the largest energy-plus-import price in the lookahead window.
    pub fn price_reference(&self, start: usize, cfg: &HorizonConfig) -> Result<f64> {
        let range = self.window(start, cfg.intervals)?;
        Ok(range
            .map(|i| self.rt_price[i] + self.import_charge[i])
            .fold(f64::NEG_INFINITY, f64::max))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatterySpec {
    /// Energy capacity, kWh.
    pub capacity: f64,
    /// Maximum power as a fraction of capacity per hour.
    pub c_rate: f64,
    /// Discharge efficiency applied in the state-of-energy recursion.
    pub efficiency: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    /// Initial stored energy, kWh.
    pub e_init: f64,
    /// Capital cost, $/kWh.
    pub unit_cost: f64,
    /// Lifetime in days.
    pub lifetime_days: f64,
}

impl Default for BatterySpec {
    fn default() -> Self {
        BatterySpec {
            capacity: 100.0,
            c_rate: 0.5,
            efficiency: 0.9,
            soc_min: 0.0,
            soc_max: 1.0,
            e_init: 50.0,
            unit_cost: 800.0,
            lifetime_days: 3650.0,
        }
    }
}

impl BatterySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.capacity >= 0.0) || !(self.c_rate >= 0.0) {
            return Err(invalid("capacity and C-rate must be non-negative"));
        }
        if !(0.0 <= self.soc_min && self.soc_min <= self.soc_max && self.soc_max <= 1.0) {
            return Err(invalid("state-of-charge bounds must satisfy 0 <= min <= max <= 1"));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(invalid("efficiency must lie in (0, 1]"));
        }
        let lo = self.soc_min * self.capacity;
        let hi = self.soc_max * self.capacity;
        if self.e_init < lo - 1e-12 || self.e_init > hi + 1e-12 {
            return Err(invalid(format!(
                "initial energy {} outside [{lo}, {hi}]",
                self.e_init
            )));
        }
        if !(self.lifetime_days > 0.0) {
            return Err(invalid("lifetime must be positive"));
        }
        Ok(())
    }

    /// Power limit in kW.
    pub fn max_power(&self) -> f64 {
        self.capacity * self.c_rate
    }

    pub fn energy_bounds(&self) -> (f64, f64) {
        (self.soc_min * self.capacity, self.soc_max * self.capacity)
    }
}
