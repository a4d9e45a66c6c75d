//! Operator cash flows over the battery lifetime, the billing-period peak
//! reduction, internal rate of return and the prosumer bill comparison.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::simulator::ScenarioLedger;
use crate::time::{BatterySpec, TariffBook};

/// Lifetime cash flows of the operator. Every term is already extrapolated
/// from the simulated window to the battery lifetime; `profit` is the signed
/// sum of the terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CashflowReport {
    /// Payments for grid consumption less wholesale purchases.
    pub energy_arbitrage: f64,
    pub peak_service: f64,
    pub grid_charges: f64,
    pub opex: f64,
    pub fixed_network: f64,
    pub credit_revenue: f64,
    pub credit_refund: f64,
    pub bill_guarantee_compensation: f64,
    pub capex: f64,
    pub profit: f64,
    /// Internal rate of return of the yearly cash flows, if defined.
    pub irr: Option<f64>,
    /// Factor extrapolating the simulated window over the lifetime.
    pub scale: f64,
    /// Peak reduction over the window, kWh per interval.
    pub peak_reduction: f64,
}

impl CashflowReport {
    pub fn revenue(&self) -> f64 {
        self.energy_arbitrage + self.peak_service + self.credit_revenue
    }

    pub fn costs(&self) -> f64 {
        self.grid_charges
            + self.opex
            + self.fixed_network
            + self.credit_refund
            + self.bill_guarantee_compensation
            + self.capex
    }

    /// Lifetime profit before the battery purchase.
    pub fn operating_profit(&self) -> f64 {
        self.profit + self.capex
    }
}

/// Revenue of the window expressed per year, split as peak service and
/// energy arbitrage net of grid charges and opex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnualRevenue {
    pub peak_reduction_kw: f64,
    pub peak_service: f64,
    pub energy_arbitrage: f64,
}

impl AnnualRevenue {
    pub fn total(&self) -> f64 {
        self.peak_service + self.energy_arbitrage
    }
}

/// Counterfactual community peak without the battery minus the realized
/// community peak, kWh per interval. Zero for an empty ledger.
pub fn compute_peak_reduction(ledger: &ScenarioLedger) -> f64 {
    if ledger.is_empty() {
        return 0.0;
    }
    ledger.counterfactual_peak() - ledger.realized_peak()
}

pub fn simulated_days(ledger: &ScenarioLedger) -> f64 {
    ledger.len() as f64 / ledger.cfg.intervals_per_day() as f64
}

/// Lifetime in horizons divided by the number of simulated horizons.
pub fn lifetime_scale(ledger: &ScenarioLedger, spec: &BatterySpec) -> f64 {
    spec.lifetime_days * ledger.cfg.intervals_per_day() as f64 / ledger.len().max(1) as f64
}

/// Sums over the simulated window, before extrapolation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct WindowTotals {
    wholesale: f64,
    grid: f64,
    opex: f64,
    credit_revenue: f64,
    refund: f64,
}

fn window_totals(ledger: &ScenarioLedger, tariffs: &TariffBook) -> WindowTotals {
    let dt = ledger.cfg.dt;
    let mut w = WindowTotals::default();
    for (h, r) in ledger.horizons.iter().enumerate() {
        let price = tariffs.rt_price[h];
        let sold: f64 = r.users.iter().map(|u| u.x_grid).sum();
        w.wholesale += price * (sold - r.operator.up - r.settlement.shortfall);
        w.grid += tariffs.grid_charge * r.operator.u_grid;
        w.opex += tariffs.opex * r.operator.p_ch * dt;
        w.credit_revenue += tariffs.credit_charge * r.users.iter().map(|u| u.delta).sum::<f64>();
    }
    if let Some(last) = ledger.horizons.last() {
        w.refund = tariffs.credit_refund * last.users.iter().map(|u| u.credits).sum::<f64>();
    }
    w
}

fn peak_service_window(ledger: &ScenarioLedger, tariffs: &TariffBook) -> f64 {
    tariffs.peak_incentive * compute_peak_reduction(ledger) / ledger.cfg.dt * simulated_days(ledger) / 365.0
}

/// Operator profit over the battery lifetime. Wholesale purchases cover the
/// committed import plus any shortfall settled after the fact; the peak
/// incentive is paid per kW and year; the fixed network charge per day.
pub fn compute_profit(ledger: &ScenarioLedger, tariffs: &TariffBook, spec: &BatterySpec) -> CashflowReport {
    let w = window_totals(ledger, tariffs);
    let scale = lifetime_scale(ledger, spec);
    let days = simulated_days(ledger);
    let compensation: f64 = compare_bills(ledger, tariffs).iter().map(|b| b.compensation).sum();
    let mut r = CashflowReport {
        energy_arbitrage: scale * w.wholesale,
        peak_service: scale * peak_service_window(ledger, tariffs),
        grid_charges: scale * w.grid,
        opex: scale * w.opex,
        fixed_network: scale * tariffs.fixed_charge * spec.capacity * spec.c_rate * days,
        credit_revenue: scale * w.credit_revenue,
        credit_refund: scale * w.refund,
        bill_guarantee_compensation: scale * compensation,
        capex: spec.capacity * spec.unit_cost,
        profit: 0.0,
        irr: None,
        scale,
        peak_reduction: compute_peak_reduction(ledger),
    };
    r.profit = r.revenue() - r.costs();
    r.irr = irr(&yearly_cashflows(&r, spec)).ok();
    r
}

/// Capex at year zero followed by equal yearly operating profits.
pub fn yearly_cashflows(report: &CashflowReport, spec: &BatterySpec) -> Vec<f64> {
    let years = (spec.lifetime_days / 365.0).round().max(1.0) as usize;
    let yearly = report.operating_profit() / years as f64;
    let mut flows = Vec::with_capacity(years + 1);
    flows.push(-report.capex);
    flows.extend(core::iter::repeat_n(yearly, years));
    flows
}

/// Yearly revenue from peak reduction and energy arbitrage.
pub fn annual_revenue(ledger: &ScenarioLedger, tariffs: &TariffBook) -> AnnualRevenue {
    let w = window_totals(ledger, tariffs);
    let per_year = 365.0 / simulated_days(ledger);
    let kw = compute_peak_reduction(ledger) / ledger.cfg.dt;
    AnnualRevenue {
        peak_reduction_kw: kw,
        peak_service: tariffs.peak_incentive * kw,
        energy_arbitrage: per_year * (w.wholesale - w.grid - w.opex),
    }
}

pub fn npv(cashflows: &[f64], rate: f64) -> f64 {
    let mut acc = 0.0;
    for c in cashflows.iter().rev() {
        acc = acc / (1.0 + rate) + c;
    }
    acc
}

const IRR_LO: f64 = -0.99;
const IRR_HI: f64 = 10.0;

/// Rate in (−0.99, 10) at which the net present value vanishes, found by
/// bracketing on a grid and bisecting. The lowest bracketed root is returned.
pub fn irr(cashflows: &[f64]) -> Result<f64> {
    let pos = cashflows.iter().any(|&c| c > 0.0);
    let neg = cashflows.iter().any(|&c| c < 0.0);
    if !pos || !neg {
        return Err(Error::IrrUndefined);
    }
    let steps = 2000;
    let at = |k: usize| IRR_LO + (IRR_HI - IRR_LO) * k as f64 / steps as f64;
    let mut a = at(0);
    let mut fa = npv(cashflows, a);
    for k in 1..=steps {
        let b = at(k);
        let fb = npv(cashflows, b);
        if fa == 0.0 {
            return Ok(a);
        }
        if fa.signum() != fb.signum() {
            let (mut lo, mut hi, mut flo) = (a, b, fa);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let fm = npv(cashflows, mid);
                if fm == 0.0 || hi - lo < 1e-14 {
                    return Ok(mid);
                }
                if fm.signum() == flo.signum() {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            return Ok(0.5 * (lo + hi));
        }
        a = b;
        fa = fb;
    }
    Err(Error::IrrUndefined)
}

/// One user's bill over the window under a pass-through retailer that pays
/// the wholesale price for exports, and under the community scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BillComparison {
    pub user: usize,
    pub baseline: f64,
    pub scheme: f64,
    /// `max(0, baseline − scheme)`.
    pub savings: f64,
    /// Amount the operator refunds so the user pays no more than the baseline.
    pub compensation: f64,
}

/// Bills per user over the window. Both schemes charge the same network
/// tariffs; the community scheme replaces wholesale export revenue by solar
/// credits that offset later grid consumption at a usage charge.
pub fn compare_bills(ledger: &ScenarioLedger, tariffs: &TariffBook) -> Vec<BillComparison> {
    let users = ledger.users();
    let mut base = alloc::vec![0.0; users];
    let mut scheme = alloc::vec![0.0; users];
    for (h, r) in ledger.horizons.iter().enumerate() {
        let (rt, imp, exp) = (tariffs.rt_price[h], tariffs.import_charge[h], tariffs.export_charge[h]);
        for (n, u) in r.users.iter().enumerate() {
            let network = imp * u.x_pos + exp * u.x_neg;
            base[n] += rt * (u.x_pos - u.x_neg) + network;
            scheme[n] += rt * u.x_grid + network + tariffs.credit_charge * u.delta;
        }
    }
    if let Some(last) = ledger.horizons.last() {
        for (n, u) in last.users.iter().enumerate() {
            scheme[n] -= tariffs.credit_refund * u.credits;
        }
    }
    (0..users)
        .map(|n| {
            let diff = base[n] - scheme[n];
            BillComparison {
                user: n,
                baseline: base[n],
                scheme: scheme[n],
                savings: diff.max(0.0),
                compensation: (-diff).max(0.0),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{HorizonRecord, Mode, OperatorRecord, Settlement, SolverStats, UserRecord};
    use crate::HorizonConfig;
    use alloc::vec;

    fn idle_ledger(horizons: usize) -> ScenarioLedger {
        let user = UserRecord {
            x_star: 1.0,
            x_rnd: 0.0,
            x_real: 1.0,
            x_pos: 1.0,
            x_neg: 0.0,
            x_grid: 1.0,
            delta: 0.0,
            credits: 0.0,
            g_spill: 0.0,
            carryover: 0.0,
            ahead: [1.0; 2],
        };
        let op = OperatorRecord {
            p_ch: 0.0,
            p_dis: 0.0,
            energy: 50.0,
            up: 1.0,
            un: 0.0,
            u_grid: 0.0,
            zeta_local: 1.0,
            forecast_net: 1.0,
            belief_mu: 0.0,
            belief_sigma: 0.0,
            eta: None,
        };
        let s = Settlement { user_net: 1.0, import: 1.0, export: 0.0, shortfall: 0.0, surplus: 0.0, counterfactual: 1.0 };
        ScenarioLedger {
            mode: Mode::LaTi,
            seed: 0,
            cfg: HorizonConfig::new(48, 12, horizons / 48, 0.5).unwrap(),
            horizons: vec![HorizonRecord { users: vec![user], operator: op, settlement: s }; horizons],
            stats: SolverStats::default(),
        }
    }

    fn book(len: usize) -> TariffBook {
        TariffBook::from_series(vec![0.1; len], vec![0.05; len], vec![0.0; len])
    }

    #[test]
    fn idle_battery_earns_nothing_but_fixed_costs() {
        let l = idle_ledger(96);
        let spec = BatterySpec::default();
        let t = book(96);
        assert_eq!(compute_peak_reduction(&l), 0.0);
        let r = compute_profit(&l, &t, &spec);
        assert!(r.energy_arbitrage.abs() < 1e-9);
        assert_eq!(r.capex, 80_000.0);
        let want = -spec.lifetime_days * t.fixed_charge * spec.capacity * spec.c_rate - 80_000.0;
        assert!((r.profit - want).abs() < 1e-6, "{} vs {want}", r.profit);
        assert!(compare_bills(&l, &t).iter().all(|b| b.savings == 0.0 && b.compensation == 0.0));
    }

    #[test]
    fn discharge_at_the_single_peak_is_the_reduction() {
        let mut l = idle_ledger(48);
        l.horizons[7].settlement.counterfactual = 3.0;
        l.horizons[7].operator.p_dis = 2.0;
        l.horizons[7].settlement.import = 2.0;
        assert!((compute_peak_reduction(&l) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn irr_examples() {
        assert!(irr(&[-100.0, 100.0]).unwrap().abs() < 1e-9);
        let r = irr(&[-1000.0, 500.0, 500.0, 500.0]).unwrap();
        assert!((r - 0.2338).abs() < 1e-4, "{r}");
        assert!(npv(&[-1000.0, 500.0, 500.0, 500.0], r).abs() <= 1e-3);
        assert_eq!(irr(&[-1.0, -2.0]), Err(Error::IrrUndefined));
        assert_eq!(irr(&[1.0, 2.0]), Err(Error::IrrUndefined));
    }

    #[test]
    fn profit_falls_with_battery_cost_and_refund_rate() {
        let mut l = idle_ledger(48);
        for r in &mut l.horizons {
            r.users[0].credits = 2.0;
        }
        let t = book(48);
        let cheap = compute_profit(&l, &t, &BatterySpec { unit_cost: 400.0, ..BatterySpec::default() });
        let dear = compute_profit(&l, &t, &BatterySpec::default());
        assert!(dear.profit < cheap.profit);
        let generous = compute_profit(&l, &TariffBook { credit_refund: 0.2, ..t.clone() }, &BatterySpec::default());
        assert!(generous.profit <= dear.profit);
    }

    #[test]
    fn irr_grows_with_any_inflow() {
        let base = [-1000.0, 300.0, 400.0, 500.0];
        let r0 = irr(&base).unwrap();
        for k in 1..4 {
            let mut f = base;
            f[k] += 10.0;
            assert!(irr(&f).unwrap() > r0);
        }
    }
}
