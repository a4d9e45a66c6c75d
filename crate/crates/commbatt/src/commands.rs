//! Subcommands. Each returns the lines of its summary; files go under the
//! output directory.

use std::path::{Path, PathBuf};

use commbatt_core::economics::{compare_bills, compute_profit};
use commbatt_core::randomness::RandomnessFit;
use commbatt_core::simulator::{run_simulation, Mode, Scenario, ScenarioLedger};

use crate::config::ScenarioConfig;
use crate::error::{CliError, CliResult};
use crate::ledger_io::write_ledger;
use crate::report::{self, sig9, Table};
use crate::scenario::{build_scenario, fit_all, Inputs};

/// Settings shared by all subcommands after flags override the config.
#[derive(Debug, Clone)]
pub struct Run {
    pub cfg: ScenarioConfig,
    pub modes: Vec<Mode>,
    pub seed: u64,
    pub out: PathBuf,
}

impl Run {
    pub fn new(cfg: ScenarioConfig, mode: Option<&str>, seed: Option<u64>, out: Option<PathBuf>) -> CliResult<Self> {
        let modes = match mode {
            Some(s) => vec![Mode::parse(s).ok_or_else(|| CliError::Usage(format!("--mode {s:?} is not one of la, la+ti, la+ti+br")))?],
            None => cfg.modes()?,
        };
        let seed = seed.unwrap_or(cfg.run.seed);
        let out = out.unwrap_or_else(|| cfg.run.out.clone());
        Ok(Run { cfg, modes, seed, out })
    }

    fn out_dir(&self) -> CliResult<&Path> {
        std::fs::create_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))?;
        Ok(&self.out)
    }

    /// Mode for commands that post-process a single run: the selected mode,
    /// or the chance-constrained one when all are selected.
    fn single_mode(&self) -> Mode {
        if self.modes.len() == 1 {
            self.modes[0]
        } else {
            Mode::LaTiBr
        }
    }

    fn fits(&self, inputs: &Inputs) -> CliResult<Vec<RandomnessFit>> {
        if self.cfg.randomness.enabled {
            fit_all(inputs, &self.cfg)
        } else {
            Ok(Vec::new())
        }
    }

    fn prepare(&self) -> CliResult<(Inputs, Vec<RandomnessFit>, Scenario)> {
        let inputs = Inputs::load(&self.cfg, self.seed)?;
        let fits = self.fits(&inputs)?;
        let scenario = build_scenario(&inputs, &fits, &self.cfg, self.seed)?;
        Ok((inputs, fits, scenario))
    }
}

/// Inclusive grid `start:stop:step`.
pub fn parse_range(s: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::Usage(format!("range {s:?} must be start:stop:step with step > 0 and start <= stop"));
    let parts: Vec<f64> = s.split(':').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    let [a, b, step] = parts[..] else { return Err(bad()) };
    if !(a.is_finite() && b.is_finite() && step.is_finite() && step > 0.0 && a <= b) {
        return Err(bad());
    }
    let n = ((b - a) / step + 1e-9).floor() as usize + 1;
    if n > 100_000 {
        return Err(bad());
    }
    Ok((0..n).map(|i| a + i as f64 * step).collect())
}

fn write_fit_files(dir: &Path, ids: &[String], fits: &[RandomnessFit], intervals: usize) -> CliResult<()> {
    report::randomness_table(ids, fits).write(&dir.join("randomness.csv"))?;
    report::acf_table(ids, fits).write(&dir.join("acf.csv"))?;
    report::covariance_table(fits, intervals).map_err(CliError::Simulation)?.write(&dir.join("covariance.csv"))
}

pub fn validate_data(run: &Run) -> CliResult<Vec<String>> {
    let inputs = Inputs::load(&run.cfg, run.seed)?;
    let h = run.cfg.horizon().map_err(|e| CliError::Config(e.to_string()))?;
    let len = inputs.histories.first().map_or(0, Vec::len);
    let source = match &run.cfg.data.consumption {
        Some(p) => p.display().to_string(),
        None => "synthetic".to_string(),
    };
    let lo = inputs.prices.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = inputs.prices.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(vec![
        format!("source: {source}"),
        format!("users: {}", inputs.user_ids.len()),
        format!("history intervals: {len} ({} days)", len / h.intervals),
        format!("prosumers: {}", inputs.pv.iter().filter(|p| p.iter().any(|&g| g > 0.0)).count()),
        format!("price range: {} .. {} $/kWh", sig9(lo), sig9(hi)),
    ])
}

pub fn fit_randomness(run: &Run) -> CliResult<Vec<String>> {
    let inputs = Inputs::load(&run.cfg, run.seed)?;
    let fits = fit_all(&inputs, &run.cfg)?;
    let dir = run.out_dir()?;
    write_fit_files(dir, &inputs.user_ids, &fits, run.cfg.horizon.intervals)?;
    let mut lines = Vec::new();
    for (id, f) in inputs.user_ids.iter().zip(&fits) {
        let m = &f.model;
        let pass = m.normality_pass.iter().filter(|&&p| p).count();
        lines.push(format!(
            "{id}: outliers {} normal {pass}/{} length scale {} (acf {})",
            sig9(m.outlier_fraction),
            m.normality_pass.len(),
            sig9(m.length_scale),
            sig9(f.data_length_scale)
        ));
    }
    Ok(lines)
}

fn mode_dir(out: &Path, mode: Mode) -> PathBuf {
    out.join(mode.label())
}

fn simulate_mode(scenario: &Scenario, mode: Mode, seed: u64) -> CliResult<ScenarioLedger> {
    log::info!("simulating {mode} with seed {seed}");
    run_simulation(scenario, mode, seed).map_err(CliError::Simulation)
}

pub fn simulate(run: &Run) -> CliResult<Vec<String>> {
    let (inputs, fits, scenario) = run.prepare()?;
    let dir = run.out_dir()?.to_path_buf();
    if !fits.is_empty() {
        write_fit_files(&dir, &inputs.user_ids, &fits, scenario.cfg.intervals)?;
    }
    let mut lines = Vec::new();
    for &mode in &run.modes {
        let ledger = simulate_mode(&scenario, mode, run.seed)?;
        let sub = mode_dir(&dir, mode);
        write_ledger(&sub, &ledger)?;
        let r = compute_profit(&ledger, &scenario.tariffs, &scenario.battery);
        let summary = report::cashflow_table(&ledger, &scenario.tariffs, &r);
        summary.write(&sub.join("report.csv"))?;
        report::overlay_table(&ledger).write(&sub.join("overlay.csv"))?;
        report::series_table(&ledger, &scenario.tariffs).write(&sub.join("series.csv"))?;
        let mut bills = report::bills_header();
        report::bills_table(&inputs.user_ids, scenario.tariffs.credit_charge, &compare_bills(&ledger, &scenario.tariffs), &mut bills);
        bills.write(&sub.join("bills.csv"))?;

        let text = summary_text(&summary);
        std::fs::write(sub.join("summary.txt"), &text).map_err(|e| CliError::io(sub.join("summary.txt"), e))?;
        lines.push(format!("[{mode}]"));
        lines.extend(text.lines().map(str::to_string));
    }
    Ok(lines)
}

/// Aligned `key  value` lines of a `key,value` table.
fn summary_text(t: &Table) -> String {
    let rows: Vec<(&str, &str)> = t.as_str().lines().skip(1).filter_map(|l| l.split_once(',')).collect();
    let w = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    rows.iter().map(|(k, v)| format!("{k:<w$}  {v}\n")).collect()
}

/// IRR over a grid of battery unit costs and credit charges. Neither enters
/// any decision, so one simulation serves the whole grid.
pub fn sweep_irr(run: &Run, capex: &[f64], credit: &[f64]) -> CliResult<Vec<String>> {
    let (_, _, scenario) = run.prepare()?;
    let mode = run.single_mode();
    let ledger = simulate_mode(&scenario, mode, run.seed)?;
    let mut t = Table::new(&["unit_cost", "credit_charge", "profit", "irr"]);
    let mut defined = 0;
    for &c in capex {
        for &k in credit {
            let mut tariffs = scenario.tariffs.clone();
            tariffs.credit_charge = k;
            let spec = commbatt_core::BatterySpec { unit_cost: c, ..scenario.battery };
            let r = compute_profit(&ledger, &tariffs, &spec);
            defined += r.irr.is_some() as usize;
            t.row([sig9(c), sig9(k), sig9(r.profit), sig9(r.irr.unwrap_or(f64::NAN))]);
        }
    }
    let dir = run.out_dir()?;
    t.write(&dir.join("irr_grid.csv"))?;
    Ok(vec![
        format!("mode: {mode}"),
        format!("cells: {} ({} with a defined IRR)", capex.len() * credit.len(), defined),
    ])
}

/// Per-user bills with and without the scheme for each credit charge.
pub fn compare_bills_cmd(run: &Run, credit: Option<&[f64]>) -> CliResult<Vec<String>> {
    let (inputs, _, scenario) = run.prepare()?;
    let mode = run.single_mode();
    let ledger = simulate_mode(&scenario, mode, run.seed)?;
    let credit = credit.map_or_else(|| vec![scenario.tariffs.credit_charge], <[f64]>::to_vec);
    let mut t = report::bills_header();
    let mut lines = vec![format!("mode: {mode}")];
    for k in credit {
        let mut tariffs = scenario.tariffs.clone();
        tariffs.credit_charge = k;
        let bills = compare_bills(&ledger, &tariffs);
        report::bills_table(&inputs.user_ids, k, &bills, &mut t);
        let saved: f64 = bills.iter().map(|b| b.savings).sum();
        let comp: f64 = bills.iter().map(|b| b.compensation).sum();
        lines.push(format!("credit charge {}: total savings {} compensation {}", sig9(k), sig9(saved), sig9(comp)));
    }
    let dir = run.out_dir()?;
    t.write(&dir.join("bills.csv"))?;
    Ok(lines)
}
