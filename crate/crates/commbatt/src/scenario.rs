//! Assembling a simulation scenario from a config and its inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use commbatt_core::randomness::{fit_randomness, RandomnessFit};
use commbatt_core::simulator::{build_profile, Scenario};
use commbatt_core::synthetic::{import_charges, load_history, pv_series, wholesale_prices, LoadParams};
use commbatt_core::TariffBook;

use crate::config::ScenarioConfig;
use crate::data::{load_dataset, Dataset};
use crate::error::{CliError, CliResult};

/// Consumption histories, PV and prices of a community, before profiles
/// are derived.
#[derive(Debug, Clone, PartialEq)]
pub struct Inputs {
    pub user_ids: Vec<String>,
    pub histories: Vec<Vec<f64>>,
    /// PV from the first simulated interval on.
    pub pv: Vec<Vec<f64>>,
    /// Wholesale price from the first simulated interval on, $/kWh.
    pub prices: Vec<f64>,
}

impl Inputs {
    pub fn from_dataset(data: Dataset, cfg: &ScenarioConfig) -> CliResult<Self> {
        let t = cfg.horizon.intervals;
        let len = data.consumption.len();
        if len % t != 0 {
            return Err(CliError::Data(format!("{len} intervals are not a whole number of {t}-interval days")));
        }
        if cfg.horizon.days * t > len {
            return Err(CliError::Data(format!("horizon.days = {} exceeds the {} days of data", cfg.horizon.days, len / t)));
        }
        let prices = data
            .prices
            .ok_or_else(|| CliError::Config("data.prices is required with data.consumption".into()))?;
        let (user_ids, histories) = data.consumption.users.into_iter().map(|u| (u.id, u.values)).unzip();
        Ok(Inputs { user_ids, histories, pv: data.pv, prices })
    }

    /// Seeded synthetic community following `[synthetic]`.
    pub fn synthetic(cfg: &ScenarioConfig, seed: u64) -> CliResult<Self> {
        let s = &cfg.synthetic;
        let h = cfg.horizon().map_err(|e| CliError::Config(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inputs = Inputs { user_ids: Vec::new(), histories: Vec::new(), pv: Vec::new(), prices: Vec::new() };
        for n in 0..s.users {
            let load = LoadParams { scale: rng.random_range(0.7..1.4), ..LoadParams::default() };
            inputs.user_ids.push(format!("u{:03}", n + 1));
            inputs.histories.push(load_history(&mut rng, s.history_days, h.intervals, h.dt, &load));
            inputs.pv.push(if n < s.prosumers {
                let kwp = rng.random_range(s.pv_kwp[0]..=s.pv_kwp[1]);
                pv_series(&mut rng, h.days + 1, h.intervals, h.dt, kwp)
            } else {
                vec![0.0; h.series_len()]
            });
        }
        inputs.prices = wholesale_prices(&mut rng, h.series_len(), h.intervals, h.dt);
        Ok(inputs)
    }

    /// Reads the configured files, or builds the synthetic community when no
    /// consumption file is given.
    pub fn load(cfg: &ScenarioConfig, seed: u64) -> CliResult<Self> {
        match cfg.data.consumption {
            Some(_) => Self::from_dataset(load_dataset(&cfg.data, cfg.horizon.dt)?, cfg),
            None => Self::synthetic(cfg, seed),
        }
    }
}

/// Extends `v` to `len` values; values past the end repeat the final day.
pub fn extend_by_days(v: &[f64], len: usize, per_day: usize) -> Vec<f64> {
    let mut out: Vec<f64> = v.iter().copied().take(len).collect();
    while out.len() < len {
        out.push(out[out.len() - per_day]);
    }
    out
}

pub fn fit_all(inputs: &Inputs, cfg: &ScenarioConfig) -> CliResult<Vec<RandomnessFit>> {
    let pipeline = cfg.pipeline();
    inputs
        .histories
        .iter()
        .zip(&inputs.user_ids)
        .map(|(h, id)| fit_randomness(h, &pipeline).map_err(|e| CliError::Data(format!("randomness fit for user {id}: {e}"))))
        .collect()
}

/// Scenario with profiles drawn from `seed`. Randomness models come from
/// `fits` when deviations are enabled.
pub fn build_scenario(inputs: &Inputs, fits: &[RandomnessFit], cfg: &ScenarioConfig, seed: u64) -> CliResult<Scenario> {
    let h = cfg.horizon().map_err(|e| CliError::Config(e.to_string()))?;
    let len = h.series_len();
    let per_day = h.intervals;
    if inputs.prices.len() < per_day || inputs.pv.iter().any(|p| p.len() < per_day) {
        return Err(CliError::Data("price and PV series must cover at least one day".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let params = cfg.profile_params();
    let mut users = Vec::with_capacity(inputs.histories.len());
    for ((hist, pv), id) in inputs.histories.iter().zip(&inputs.pv).zip(&inputs.user_ids) {
        let pv = extend_by_days(pv, len, per_day);
        let p = build_profile(hist, &pv, &h, &params, &mut rng).map_err(|e| CliError::Data(format!("user {id}: {e}")))?;
        users.push(p);
    }
    let imp = import_charges(len, per_day, h.dt, &cfg.bands(), &cfg.band_rates());
    let t = &cfg.tariffs;
    let tariffs = TariffBook {
        grid_charge: t.grid_charge,
        peak_incentive: t.peak_incentive,
        fixed_charge: t.fixed_charge,
        credit_charge: t.credit_charge,
        credit_refund: t.credit_refund,
        opex: t.opex,
        ..TariffBook::from_series(extend_by_days(&inputs.prices, len, per_day), imp, vec![t.export_charge; len])
    };
    let draw = cfg.randomness.enabled;
    let scenario = Scenario {
        cfg: h,
        users,
        randomness: if draw { fits.iter().map(|f| f.model.clone()).collect() } else { Vec::new() },
        tariffs,
        battery: cfg.battery(),
        chance: cfg.chance(),
        draw_randomness: draw,
        gp_window: cfg.randomness.gp_window_days * per_day,
    };
    scenario.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extension_repeats_the_last_day() {
        assert_eq!(extend_by_days(&[1.0, 2.0, 3.0, 4.0], 7, 2), vec![1.0, 2.0, 3.0, 4.0, 3.0, 4.0, 3.0]);
        assert_eq!(extend_by_days(&[1.0, 2.0, 3.0], 2, 2), vec![1.0, 2.0]);
    }

    #[test]
    fn synthetic_inputs_are_seeded() {
        let cfg = ScenarioConfig::parse("[synthetic]\nusers = 3\nprosumers = 1\n[horizon]\ndays = 2\n").unwrap();
        let a = Inputs::synthetic(&cfg, 4).unwrap();
        assert_eq!(a, Inputs::synthetic(&cfg, 4).unwrap());
        assert_ne!(a, Inputs::synthetic(&cfg, 5).unwrap());
        assert_eq!(a.histories.len(), 3);
        assert!(a.pv[0].iter().any(|&g| g > 0.0));
        assert!(a.pv[2].iter().all(|&g| g == 0.0));
        assert_eq!(a.prices.len(), cfg.horizon().unwrap().series_len());
    }
}
