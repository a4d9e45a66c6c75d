//! Scenario configuration.
//!
//! The file is TOML: named sections of `key = value` pairs. Every key is
//! optional and every section may be omitted; missing values take the
//! defaults documented on each field. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use commbatt_core::cbs::ChanceConfig;
use commbatt_core::randomness::PipelineConfig;
use commbatt_core::simulator::{Mode, ProfileParams};
use commbatt_core::synthetic::{BandRates, BandSchedule};
use commbatt_core::{BatterySpec, HorizonConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub data: DataSection,
    pub synthetic: SyntheticSection,
    pub horizon: HorizonSection,
    pub battery: BatterySection,
    pub tariffs: TariffSection,
    pub behaviour: BehaviourSection,
    pub randomness: RandomnessSection,
    pub chance: ChanceSection,
    pub run: RunSection,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriceUnit {
    /// $/kWh.
    #[default]
    Kwh,
    /// $/MWh, divided by 1000 on load.
    Mwh,
}

/// Input files. Without a consumption file the run uses a seeded synthetic
/// community described by `[synthetic]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// `user_id,timestamp,kwh` consumption history.
    pub consumption: Option<PathBuf>,
    /// `user_id,timestamp,kwh` PV generation; users absent from it have none.
    pub pv: Option<PathBuf>,
    /// `timestamp,price_per_kwh` real-time wholesale prices.
    pub prices: Option<PathBuf>,
    pub price_unit: PriceUnit,
    /// Uniform multiplier on PV generation.
    pub pv_scale: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection { consumption: None, pv: None, prices: None, price_unit: PriceUnit::Kwh, pv_scale: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub users: usize,
    pub prosumers: usize,
    /// Days of consumption history per user.
    pub history_days: usize,
    /// Range of PV peak capacity, kWp.
    pub pv_kwp: [f64; 2],
}

impl Default for SyntheticSection {
    fn default() -> Self {
        SyntheticSection { users: 50, prosumers: 25, history_days: 28, pv_kwp: [3.5, 7.5] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HorizonSection {
    pub intervals: usize,
    pub rebound: usize,
    pub days: usize,
    /// Interval length, hours.
    pub dt: f64,
}

impl Default for HorizonSection {
    fn default() -> Self {
        let h = HorizonConfig::default();
        HorizonSection { intervals: h.intervals, rebound: h.rebound, days: h.days, dt: h.dt }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatterySection {
    /// kWh.
    pub capacity: f64,
    pub c_rate: f64,
    pub efficiency: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    /// Initial stored energy, kWh; half the capacity when absent.
    pub e_init: Option<f64>,
    /// $/kWh.
    pub unit_cost: f64,
    pub lifetime_days: f64,
}

impl Default for BatterySection {
    fn default() -> Self {
        let b = BatterySpec::default();
        BatterySection {
            capacity: b.capacity,
            c_rate: b.c_rate,
            efficiency: b.efficiency,
            soc_min: b.soc_min,
            soc_max: b.soc_max,
            e_init: None,
            unit_cost: b.unit_cost,
            lifetime_days: b.lifetime_days,
        }
    }
}

/// Charges in $/kWh unless noted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TariffSection {
    pub grid_charge: f64,
    /// $/kW of peak reduction per year.
    pub peak_incentive: f64,
    /// $/kW of battery power per day.
    pub fixed_charge: f64,
    pub credit_charge: f64,
    pub credit_refund: f64,
    pub opex: f64,
    pub export_charge: f64,
    pub import_off_peak: f64,
    pub import_shoulder: f64,
    pub import_peak: f64,
}

impl Default for TariffSection {
    fn default() -> Self {
        let r = BandRates::default();
        TariffSection {
            grid_charge: 0.02,
            peak_incentive: 120.0,
            fixed_charge: 0.015,
            credit_charge: 0.1,
            credit_refund: 0.05,
            opex: 0.022,
            export_charge: 0.0,
            import_off_peak: r.off_peak,
            import_shoulder: r.shoulder,
            import_peak: r.peak,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviourSection {
    pub elasticity_off_peak: [f64; 2],
    pub elasticity_shoulder: [f64; 2],
    pub elasticity_peak: [f64; 2],
    pub kappa: [f64; 2],
    pub tau: f64,
    pub lower_factor: f64,
    pub upper_factor: f64,
    /// Band boundaries in hours of the day, end exclusive.
    pub peak_hours: [f64; 2],
    pub morning_shoulder_hours: [f64; 2],
    pub evening_shoulder_hours: [f64; 2],
}

impl Default for BehaviourSection {
    fn default() -> Self {
        let p = ProfileParams::default();
        let pair = |(a, b): (f64, f64)| [a, b];
        BehaviourSection {
            elasticity_off_peak: pair(p.off_peak),
            elasticity_shoulder: pair(p.shoulder),
            elasticity_peak: pair(p.peak),
            kappa: pair(p.kappa),
            tau: p.tau,
            lower_factor: p.lower_factor,
            upper_factor: p.upper_factor,
            peak_hours: pair(p.bands.peak),
            morning_shoulder_hours: pair(p.bands.morning_shoulder),
            evening_shoulder_hours: pair(p.bands.evening_shoulder),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomnessSection {
    /// Draw stochastic deviations from the plans.
    pub enabled: bool,
    pub signal_sigma: f64,
    /// Kernel length-scale, intervals.
    pub length_scale: f64,
    /// Use the length-scale suggested by the residual autocorrelation
    /// instead of `length_scale`.
    pub length_scale_from_acf: bool,
    pub noise_ratio: f64,
    pub iqr_k: f64,
    pub alpha: f64,
    /// Days of observations the operator's belief conditions on.
    pub gp_window_days: usize,
}

impl Default for RandomnessSection {
    fn default() -> Self {
        let p = PipelineConfig::default();
        RandomnessSection {
            enabled: true,
            signal_sigma: p.signal_sigma,
            length_scale: p.length_scale_override.unwrap_or(2.1),
            length_scale_from_acf: false,
            noise_ratio: p.noise_ratio,
            iqr_k: p.iqr_k,
            alpha: p.alpha,
            gp_window_days: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChanceSection {
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
}

impl Default for ChanceSection {
    fn default() -> Self {
        let c = ChanceConfig::default();
        ChanceSection { eta1: c.eta1, eta2: c.eta2, eta3: c.eta3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// `la`, `la+ti` or `la+ti+br`; all three when absent.
    pub mode: Option<String>,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { mode: None, seed: 0, out: PathBuf::from("out") }
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Reads and validates a config file. Relative data paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data.consumption, &mut cfg.data.pv, &mut cfg.data.prices].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        for (name, p) in [("consumption", &self.data.consumption), ("pv", &self.data.pv), ("prices", &self.data.prices)] {
            if let Some(p) = p {
                if !p.is_file() {
                    return bad(format!("data.{name}: {} does not exist", p.display()));
                }
            }
        }
        if self.data.consumption.is_none() && (self.data.pv.is_some() || self.data.prices.is_some()) {
            return bad("data.pv and data.prices require data.consumption".into());
        }
        if self.data.consumption.is_some() && self.data.prices.is_none() {
            return bad("data.prices is required with data.consumption".into());
        }
        if !(self.data.pv_scale >= 0.0) {
            return bad(format!("data.pv_scale = {} must be non-negative", self.data.pv_scale));
        }
        let s = &self.synthetic;
        if s.users == 0 || s.prosumers > s.users {
            return bad(format!("synthetic: need 0 <= prosumers ({}) <= users ({}) and users > 0", s.prosumers, s.users));
        }
        if !(0.0 <= s.pv_kwp[0] && s.pv_kwp[0] <= s.pv_kwp[1]) {
            return bad(format!("synthetic.pv_kwp {:?} must be ordered and non-negative", s.pv_kwp));
        }
        let b = &self.behaviour;
        for (name, r) in [
            ("elasticity_off_peak", b.elasticity_off_peak),
            ("elasticity_shoulder", b.elasticity_shoulder),
            ("elasticity_peak", b.elasticity_peak),
        ] {
            if !(r[0] < 0.0 && r[1] < 0.0) {
                return bad(format!("behaviour.{name} {r:?} must be negative"));
            }
        }
        if !(0.0 <= b.kappa[0] && b.kappa[0] <= b.kappa[1]) {
            return bad(format!("behaviour.kappa {:?} must be ordered and non-negative", b.kappa));
        }
        if !(0.0 < b.tau && b.tau <= 1.0) {
            return bad(format!("behaviour.tau = {} must lie in (0, 1]", b.tau));
        }
        if !(0.0 <= b.lower_factor && b.lower_factor <= 1.0 && 1.0 <= b.upper_factor) {
            return bad("behaviour: need 0 <= lower_factor <= 1 <= upper_factor".into());
        }
        for (name, r) in [
            ("peak_hours", b.peak_hours),
            ("morning_shoulder_hours", b.morning_shoulder_hours),
            ("evening_shoulder_hours", b.evening_shoulder_hours),
        ] {
            if !(0.0 <= r[0] && r[0] <= r[1] && r[1] <= 24.0) {
                return bad(format!("behaviour.{name} {r:?} must be ordered within 0..24"));
            }
        }
        let r = &self.randomness;
        if !(r.signal_sigma > 0.0) || !(r.noise_ratio >= 0.0) || !(r.iqr_k > 0.0) || !(r.alpha > 0.0 && r.alpha < 1.0) {
            return bad("randomness: signal_sigma and iqr_k must be positive, noise_ratio non-negative, alpha in (0, 1)".into());
        }
        if !(r.length_scale > 0.0) {
            return bad(format!("randomness.length_scale = {} must be positive", r.length_scale));
        }
        if r.gp_window_days == 0 {
            return bad("randomness.gp_window_days must be positive".into());
        }
        self.horizon().map_err(|e| CliError::Config(format!("horizon: {e}")))?;
        self.battery().validate().map_err(|e| CliError::Config(format!("battery: {e}")))?;
        self.chance().validate().map_err(|e| CliError::Config(format!("chance: {e}")))?;
        self.modes()?;
        Ok(())
    }

    pub fn horizon(&self) -> commbatt_core::Result<HorizonConfig> {
        let h = &self.horizon;
        HorizonConfig::new(h.intervals, h.rebound, h.days, h.dt)
    }

    pub fn battery(&self) -> BatterySpec {
        let b = &self.battery;
        BatterySpec {
            capacity: b.capacity,
            c_rate: b.c_rate,
            efficiency: b.efficiency,
            soc_min: b.soc_min,
            soc_max: b.soc_max,
            e_init: b.e_init.unwrap_or(0.5 * b.capacity),
            unit_cost: b.unit_cost,
            lifetime_days: b.lifetime_days,
        }
    }

    pub fn chance(&self) -> ChanceConfig {
        ChanceConfig { eta1: self.chance.eta1, eta2: self.chance.eta2, eta3: self.chance.eta3 }
    }

    pub fn bands(&self) -> BandSchedule {
        let b = &self.behaviour;
        let pair = |r: [f64; 2]| (r[0], r[1]);
        BandSchedule {
            peak: pair(b.peak_hours),
            morning_shoulder: pair(b.morning_shoulder_hours),
            evening_shoulder: pair(b.evening_shoulder_hours),
        }
    }

    pub fn band_rates(&self) -> BandRates {
        let t = &self.tariffs;
        BandRates { off_peak: t.import_off_peak, shoulder: t.import_shoulder, peak: t.import_peak }
    }

    pub fn profile_params(&self) -> ProfileParams {
        let b = &self.behaviour;
        let pair = |r: [f64; 2]| (r[0], r[1]);
        ProfileParams {
            off_peak: pair(b.elasticity_off_peak),
            shoulder: pair(b.elasticity_shoulder),
            peak: pair(b.elasticity_peak),
            kappa: pair(b.kappa),
            tau: b.tau,
            lower_factor: b.lower_factor,
            upper_factor: b.upper_factor,
            bands: self.bands(),
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        let r = &self.randomness;
        PipelineConfig {
            intervals_per_day: self.horizon.intervals,
            iqr_k: r.iqr_k,
            alpha: r.alpha,
            acf_max_lag: self.horizon.intervals,
            length_scale_override: (!r.length_scale_from_acf).then_some(r.length_scale),
            signal_sigma: r.signal_sigma,
            noise_ratio: r.noise_ratio,
            ..PipelineConfig::default()
        }
    }

    /// Modes selected by `[run] mode`, all three when unset.
    pub fn modes(&self) -> CliResult<Vec<Mode>> {
        match &self.run.mode {
            None => Ok(Mode::ALL.to_vec()),
            Some(s) => Mode::parse(s)
                .map(|m| vec![m])
                .ok_or_else(|| CliError::Config(format!("run.mode = {s:?} is not one of la, la+ti, la+ti+br"))),
        }
    }
}
