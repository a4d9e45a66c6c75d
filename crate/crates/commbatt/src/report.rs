//! Reports and plot data.
//!
//! Every file is comma-separated with a header row. Numbers are written in
//! scientific notation with nine significant digits so reruns diff cleanly.

use std::io::Write;
use std::path::Path;

use commbatt_core::economics::{annual_revenue, BillComparison, CashflowReport};
use commbatt_core::randomness::RandomnessFit;
use commbatt_core::simulator::ScenarioLedger;
use commbatt_core::TariffBook;

use crate::error::{CliError, CliResult};

pub fn sig9(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.8e}")
    } else {
        format!("{v}")
    }
}

/// Comma-separated table built in memory and written in one go.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    text: String,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut t = Table { text: String::new() };
        t.row(header.iter().map(|s| s.to_string()));
        t
    }

    pub fn row(&mut self, cells: impl IntoIterator<Item = String>) {
        let cells: Vec<String> = cells.into_iter().collect();
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let mut f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        f.write_all(self.text.as_bytes()).map_err(|e| CliError::io(path, e))
    }
}

/// `key,value` summary of one run: lifetime cash flows, yearly revenue,
/// peaks and solver counters.
pub fn cashflow_table(ledger: &ScenarioLedger, tariffs: &TariffBook, r: &CashflowReport) -> Table {
    let a = annual_revenue(ledger, tariffs);
    let dt = ledger.cfg.dt;
    let s = &ledger.stats;
    let mut t = Table::new(&["key", "value"]);
    let mut kv = |k: &str, v: String| t.row([k.to_string(), v]);
    kv("mode", ledger.mode.label().to_string());
    kv("seed", ledger.seed.to_string());
    for (k, v) in [
        ("energy_arbitrage", r.energy_arbitrage),
        ("peak_service", r.peak_service),
        ("credit_revenue", r.credit_revenue),
        ("grid_charges", r.grid_charges),
        ("opex", r.opex),
        ("fixed_network", r.fixed_network),
        ("credit_refund", r.credit_refund),
        ("bill_guarantee_compensation", r.bill_guarantee_compensation),
        ("capex", r.capex),
        ("revenue", r.revenue()),
        ("costs", r.costs()),
        ("profit", r.profit),
        ("irr", r.irr.unwrap_or(f64::NAN)),
        ("lifetime_scale", r.scale),
        ("peak_reduction_kw", a.peak_reduction_kw),
        ("counterfactual_peak_kw", ledger.counterfactual_peak() / dt),
        ("realized_peak_kw", ledger.realized_peak() / dt),
        ("annual_peak_service", a.peak_service),
        ("annual_energy_arbitrage", a.energy_arbitrage),
        ("annual_revenue", a.total()),
        ("import_violation_rate", ledger.violation_rate(1e-9)),
        ("balance_residual", ledger.balance_residual()),
    ] {
        kv(k, sig9(v));
    }
    for (k, v) in [
        ("user_solves", s.user_solves),
        ("cbs_solves", s.cbs_solves),
        ("eta_relaxations", s.eta_relaxations),
        ("fallbacks", s.fallbacks),
        ("consumption_clamps", s.consumption_clamps),
        ("carryover_clamps", s.carryover_clamps),
    ] {
        kv(k, v.to_string());
    }
    t
}

/// Committed consumption next to the plans made one and two horizons
/// earlier, per interval and user.
pub fn overlay_table(ledger: &ScenarioLedger) -> Table {
    let mut t = Table::new(&["interval", "user", "binding", "one_back", "two_back"]);
    for p in ledger.overlay() {
        t.row([p.interval.to_string(), p.user.to_string(), sig9(p.binding), sig9(p.one_back), sig9(p.two_back)]);
    }
    t
}

/// Community time series per horizon.
pub fn series_table(ledger: &ScenarioLedger, tariffs: &TariffBook) -> Table {
    let mut t = Table::new(&[
        "horizon", "price", "committed_consumption", "realized_consumption", "battery_power", "energy", "committed_import",
        "realized_import", "counterfactual", "belief_mu", "belief_sigma",
    ]);
    for (h, r) in ledger.horizons.iter().enumerate() {
        let o = &r.operator;
        t.row([
            h.to_string(),
            sig9(tariffs.rt_price[h]),
            sig9(r.users.iter().map(|u| u.x_star).sum()),
            sig9(r.users.iter().map(|u| u.x_real).sum()),
            sig9(o.p_net()),
            sig9(o.energy),
            sig9(o.up),
            sig9(r.settlement.import),
            sig9(r.settlement.counterfactual),
            sig9(o.belief_mu),
            sig9(o.belief_sigma),
        ]);
    }
    t
}

pub fn acf_table(ids: &[String], fits: &[RandomnessFit]) -> Table {
    let mut t = Table::new(&["user", "lag", "acf"]);
    for (id, f) in ids.iter().zip(fits) {
        for (lag, v) in f.acf.iter().enumerate() {
            t.row([id.clone(), lag.to_string(), sig9(*v)]);
        }
    }
    t
}

/// Per-user, per-interval-of-day statistics of the fitted randomness.
pub fn randomness_table(ids: &[String], fits: &[RandomnessFit]) -> Table {
    let mut t = Table::new(&["user", "interval", "mu", "sigma", "noise_sigma", "normal", "length_scale", "outlier_fraction"]);
    for (id, f) in ids.iter().zip(fits) {
        let m = &f.model;
        for i in 0..m.interval_sigma.len() {
            t.row([
                id.clone(),
                i.to_string(),
                sig9(m.interval_mu[i]),
                sig9(m.interval_sigma[i]),
                sig9(m.noise_sigma[i]),
                (m.normality_pass[i] as u8).to_string(),
                sig9(m.length_scale),
                sig9(m.outlier_fraction),
            ]);
        }
    }
    t
}

/// Covariance of the community's summed randomness over one day, as
/// `(row, col, value)` entries.
pub fn covariance_table(fits: &[RandomnessFit], intervals: usize) -> commbatt_core::Result<Table> {
    use commbatt_core::gp::{nonstationary_cov, KernelInputs};
    let idx: Vec<usize> = (0..intervals).collect();
    let mut total = vec![0.0; intervals * intervals];
    for f in fits {
        let k = nonstationary_cov(&KernelInputs::for_model(&f.model, &idx)?, f.model.signal_sigma, f.model.length_scale)?;
        for (acc, v) in total.iter_mut().zip(&k.data) {
            *acc += v;
        }
    }
    let mut t = Table::new(&["row", "col", "covariance"]);
    for i in 0..intervals {
        for j in 0..intervals {
            t.row([i.to_string(), j.to_string(), sig9(total[i * intervals + j])]);
        }
    }
    Ok(t)
}

pub fn bills_table(ids: &[String], credit_charge: f64, bills: &[BillComparison], t: &mut Table) {
    for b in bills {
        t.row([
            sig9(credit_charge),
            ids.get(b.user).cloned().unwrap_or_else(|| b.user.to_string()),
            sig9(b.baseline),
            sig9(b.scheme),
            sig9(b.savings),
            sig9(b.compensation),
        ]);
    }
}

pub fn bills_header() -> Table {
    Table::new(&["credit_charge", "user", "baseline_bill", "scheme_bill", "savings", "compensation"])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(1.0), "1.00000000e0");
        assert_eq!(sig9(-0.012345678912), "-1.23456789e-2");
        assert_eq!(sig9(f64::NAN), "NaN");
        let mut t = Table::new(&["a", "b"]);
        t.row(["1".to_string(), sig9(2.5)]);
        assert_eq!(t.as_str(), "a,b\n1,2.50000000e0\n");
    }
}
