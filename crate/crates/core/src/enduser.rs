//! Per-user, per-horizon utility minimization: electricity cost plus a
//! loss-averse discomfort term weighted by hyperbolic discounting, subject to
//! the rebound window, consumption bounds, PV spill, net-demand split and
//! solar-credit bookkeeping.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::qp::{self, QuadraticProgram, Sense, SolveStatus, SolverSettings};
use crate::time::{HorizonConfig, TariffBook};

/// Smallest reference price used by the discomfort term. Windows whose
/// energy-plus-import price never rises above zero would otherwise flip the
/// sign of the whole term and make the problem non-convex.
pub const MIN_PRICE_REFERENCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    /// Expected consumption `x̂`, kWh per interval.
    pub expected: Vec<f64>,
    /// Historical consumption used to fit the randomness model, kWh.
    pub historical: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Price elasticity per interval (negative).
    pub elasticity: Vec<f64>,
    /// Discounting degree, per interval of lookahead distance.
    pub kappa: f64,
    /// Asymptote of the discount multiplier.
    pub tau: f64,
    /// PV generation, kWh per interval (all zero for consumers).
    pub pv: Vec<f64>,
    /// Solar credits held before the first horizon, kWh.
    pub credit_init: f64,
    pub is_prosumer: bool,
}

impl UserProfile {
    /// Checks the profile covers `len` intervals and is internally consistent.
    pub fn validate(&self, len: usize) -> Result<()> {
        for s in [&self.expected, &self.lower, &self.upper, &self.elasticity, &self.pv] {
            if s.len() < len {
                return Err(Error::SeriesTooShort { needed: len, got: s.len() });
            }
        }
        for i in 0..len {
            let (lo, e, up) = (self.lower[i], self.expected[i], self.upper[i]);
            if !(e > 0.0) || !(lo >= 0.0) || !(lo <= e && e <= up) || !up.is_finite() {
                return Err(invalid(format!(
                    "interval {i}: need 0 <= lower <= expected <= upper with expected > 0, got {lo}, {e}, {up}"
                )));
            }
            if !(self.elasticity[i] < 0.0) {
                return Err(invalid(format!("interval {i}: elasticity must be negative")));
            }
            if !(self.pv[i] >= 0.0) || !self.pv[i].is_finite() {
                return Err(invalid(format!("interval {i}: PV generation must be non-negative")));
            }
            if !self.is_prosumer && self.pv[i] != 0.0 {
                return Err(invalid("consumers cannot have PV generation"));
            }
        }
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(invalid("kappa must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(invalid("tau must lie in [0, 1]"));
        }
        if !(self.credit_init >= 0.0) {
            return Err(invalid("initial credits must be non-negative"));
        }
        Ok(())
    }
}

/// Loss-averse discomfort of consuming `x` when `x_hat` was expected.
pub fn discomfort(x: f64, x_hat: f64, beta: f64, lambda_ref: f64) -> Result<f64> {
    if !(x_hat > 0.0) {
        return Err(invalid("expected consumption must be positive"));
    }
    if !(beta < 0.0) {
        return Err(invalid("elasticity must be negative"));
    }
    let d = x - x_hat;
    Ok(-lambda_ref * (1.0 + d / (2.0 * beta * x_hat)) * d)
}

/// Hyperbolic discount `(1 + τtκ)/(1 + tκ)` at lookahead offset `t`
/// (`t = 0` is the binding interval).
pub fn discount_factor(t: f64, kappa: f64, tau: f64) -> f64 {
    (1.0 + tau * t * kappa) / (1.0 + t * kappa)
}

/// Cumulative deviation from expected consumption after one more binding
/// interval.
pub fn update_carryover(prev: f64, x_hat_binding: f64, x_binding: f64) -> f64 {
    prev + (x_hat_binding - x_binding)
}

/// Range of carryover values for which the rebound equality can meet the
/// consumption bounds in the horizon starting at `start`.
pub fn feasible_carryover(profile: &UserProfile, start: usize, cfg: &HorizonConfig) -> (f64, f64) {
    let w = start..start + cfg.rebound;
    let expected: f64 = profile.expected[w.clone()].iter().sum();
    let lo: f64 = profile.lower[w.clone()].iter().sum();
    let up: f64 = profile.upper[w].iter().sum();
    (lo - expected, up - expected)
}

/// Clamps `carryover` into [`feasible_carryover`], logging when it moves.
pub fn clamp_carryover(profile: &UserProfile, start: usize, carryover: f64, cfg: &HorizonConfig) -> f64 {
    let (lo, up) = feasible_carryover(profile, start, cfg);
    let c = carryover.clamp(lo, up);
    if c != carryover {
        log::info!("horizon {start}: carryover {carryover:.6} clamped to {c:.6}");
    }
    c
}

/// Variable positions within a user problem.
#[derive(Debug, Clone, PartialEq)]
pub struct UserLayout {
    pub intervals: usize,
    /// Binary of each interval, absent when there is no PV to export.
    pub phi: Vec<Option<usize>>,
}

const X: usize = 0;
const XP: usize = 1;
const XN: usize = 2;
const GS: usize = 3;
const DELTA: usize = 4;
const CRED: usize = 5;
const PER: usize = 6;

impl UserLayout {
    fn at(&self, t: usize, k: usize) -> usize {
        t * PER + k
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserProblem {
    pub qp: QuadraticProgram,
    pub layout: UserLayout,
    pub start: usize,
    pub lambda_ref: f64,
    /// Discount multiplier of each lookahead offset.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserHorizonPlan {
    pub x: Vec<f64>,
    pub x_pos: Vec<f64>,
    pub x_neg: Vec<f64>,
    pub x_grid: Vec<f64>,
    pub g_spill: Vec<f64>,
    pub delta: Vec<f64>,
    pub credits: Vec<f64>,
    pub phi: Vec<bool>,
    pub objective: f64,
    /// Largest `min(x⁺, x⁻)` over intervals without a binary; zero when the
    /// split is complementary.
    pub complementarity_gap: f64,
}

impl UserHorizonPlan {
    /// Net demand `x⁺ − x⁻` per interval.
    pub fn net(&self) -> Vec<f64> {
        self.x_pos.iter().zip(&self.x_neg).map(|(p, n)| p - n).collect()
    }
}

/// Builds the user's problem for the horizon starting at zero-based index
/// `start`. `credit_init` is the credit balance carried into the horizon.
/// Every interval with PV gets a complementarity binary.
pub fn build_user_problem(
    profile: &UserProfile,
    tariffs: &TariffBook,
    start: usize,
    carryover: f64,
    credit_init: f64,
    cfg: &HorizonConfig,
) -> Result<UserProblem> {
    let mask: Vec<bool> = (start..start + cfg.intervals).map(|i| i < profile.pv.len() && profile.pv[i] > 0.0).collect();
    build_user_problem_with(profile, tariffs, start, carryover, credit_init, cfg, &mask)
}

/// As [`build_user_problem`], with complementarity binaries only on the
/// intervals flagged in `complementarity`. Dropping a binary relaxes the
/// problem, so a relaxed optimum whose import/export split is already
/// complementary is optimal for the full model.
pub fn build_user_problem_with(
    profile: &UserProfile,
    tariffs: &TariffBook,
    start: usize,
    carryover: f64,
    credit_init: f64,
    cfg: &HorizonConfig,
    complementarity: &[bool],
) -> Result<UserProblem> {
    cfg.validate()?;
    let n = cfg.intervals;
    let end = start + n;
    if complementarity.len() != n {
        return Err(invalid("complementarity mask must cover the horizon"));
    }
    profile.validate(end)?;
    tariffs.validate(end)?;
    if !carryover.is_finite() {
        return Err(invalid("carryover must be finite"));
    }
    let (lo, up) = feasible_carryover(profile, start, cfg);
    let tol = 1e-9 * (1.0 + lo.abs().max(up.abs()));
    if carryover < lo - tol || carryover > up + tol {
        return Err(Error::InfeasibleBounds(format!(
            "carryover {carryover} outside [{lo}, {up}] for the rebound window at {start}"
        )));
    }

    let mut lambda_ref = tariffs.price_reference(start, cfg)?;
    if lambda_ref < MIN_PRICE_REFERENCE {
        log::debug!("horizon {start}: reference price {lambda_ref} floored to {MIN_PRICE_REFERENCE}");
        lambda_ref = MIN_PRICE_REFERENCE;
    }
    let mut qp = QuadraticProgram::new();
    qp.big_m = (start..end).map(|i| profile.upper[i].max(profile.pv[i])).fold(0.0, f64::max);
    let mut weights = Vec::with_capacity(n);
    for t in 0..n {
        let i = start + t;
        let w = discount_factor(t as f64, profile.kappa, profile.tau);
        weights.push(w);
        let (x_hat, beta) = (profile.expected[i], profile.elasticity[i]);
        // w·B(x) = w·a·(x − x̂)² − w·λRef·(x − x̂) with a = −λRef/(2βx̂) > 0.
        let a = -lambda_ref / (2.0 * beta * x_hat);
        let x = qp.add_variable(profile.lower[i], profile.upper[i], -w * (2.0 * a * x_hat + lambda_ref));
        qp.add_quadratic(x, x, 2.0 * w * a);
        qp.constant += w * (a * x_hat * x_hat + lambda_ref * x_hat);
        let rt = tariffs.rt_price[i];
        // A complementary split imports at most x̄ and exports at most G,
        // which also serve as the big-M of each side.
        let g = profile.pv[i];
        qp.add_variable(0.0, profile.upper[i], rt + tariffs.import_charge[i]);
        qp.add_variable(0.0, g, tariffs.export_charge[i]);
        qp.add_variable(0.0, g, 0.0);
        qp.add_variable(0.0, f64::INFINITY, -rt);
        qp.add_variable(0.0, f64::INFINITY, 0.0);
    }
    let mut layout = UserLayout { intervals: n, phi: Vec::with_capacity(n) };
    for t in 0..n {
        let phi = if complementarity[t] && profile.pv[start + t] > 0.0 { Some(qp.add_binary(0.0)) } else { None };
        layout.phi.push(phi);
    }

    let rebound: f64 = profile.expected[start..start + cfg.rebound].iter().sum::<f64>() + carryover;
    qp.add_constraint((0..cfg.rebound).map(|t| (layout.at(t, X), 1.0)).collect(), Sense::Eq, rebound);
    for t in 0..n {
        let v = |k| layout.at(t, k);
        qp.add_constraint(
            alloc::vec![(v(X), 1.0), (v(GS), 1.0), (v(XP), -1.0), (v(XN), 1.0)],
            Sense::Eq,
            profile.pv[start + t],
        );
        if let Some(phi) = layout.phi[t] {
            let (m_pos, m_neg) = (profile.upper[start + t], profile.pv[start + t]);
            qp.add_constraint(alloc::vec![(v(XP), 1.0), (phi, m_pos)], Sense::Le, m_pos);
            qp.add_constraint(alloc::vec![(v(XN), 1.0), (phi, -m_neg)], Sense::Le, 0.0);
        }
        qp.add_constraint(alloc::vec![(v(DELTA), 1.0), (v(XP), -1.0)], Sense::Le, 0.0);
        // Credits spent cannot exceed those held plus those just earned.
        let mut spend = alloc::vec![(v(DELTA), 1.0), (v(XN), -1.0)];
        let mut bal = alloc::vec![(v(CRED), 1.0), (v(XN), -1.0), (v(DELTA), 1.0)];
        let rhs = if t == 0 {
            credit_init
        } else {
            spend.push((layout.at(t - 1, CRED), -1.0));
            bal.push((layout.at(t - 1, CRED), -1.0));
            0.0
        };
        qp.add_constraint(spend, Sense::Le, rhs);
        qp.add_constraint(bal, Sense::Eq, rhs);
    }
    Ok(UserProblem { qp, layout, start, lambda_ref, weights })
}

pub fn solve_user_horizon(problem: &UserProblem) -> Result<UserHorizonPlan> {
    solve_user_horizon_with(problem, &SolverSettings::default())
}

pub fn solve_user_horizon_with(problem: &UserProblem, settings: &SolverSettings) -> Result<UserHorizonPlan> {
    let r = qp::solve_with_binaries_using(&problem.qp, settings)?;
    if r.status != SolveStatus::Optimal {
        return Err(Error::Solver {
            status: r.status,
            context: format!("user problem at horizon {}", problem.start),
        });
    }
    let lay = &problem.layout;
    let n = lay.intervals;
    let col = |k: usize| -> Vec<f64> { (0..n).map(|t| r.x[lay.at(t, k)]).collect() };
    let mut x_pos = col(XP);
    let mut x_neg = col(XN);
    let delta = col(DELTA);
    let phi: Vec<bool> = (0..n)
        .map(|t| match lay.phi[t] {
            Some(j) => r.x[j] > 0.5,
            None => x_neg[t] > x_pos[t],
        })
        .collect();
    // Interior-point output sits a hair inside the bounds; snap the side the
    // binary switched off so that complementarity holds exactly.
    for t in 0..n {
        if lay.phi[t].is_some() {
            if phi[t] {
                x_pos[t] = 0.0;
            } else {
                x_neg[t] = 0.0;
            }
        }
    }
    let gap = (0..n).map(|t| x_pos[t].min(x_neg[t])).fold(0.0, f64::max);
    let x_grid = x_pos.iter().zip(&delta).map(|(p, d)| (p - d).max(0.0)).collect();
    Ok(UserHorizonPlan {
        x: col(X),
        x_pos,
        x_neg,
        x_grid,
        g_spill: col(GS),
        delta,
        credits: col(CRED),
        phi,
        objective: r.objective,
        complementarity_gap: gap,
    })
}

/// Tolerance on `min(x⁺, x⁻)` above which an interval needs its binary.
const COMPLEMENTARITY_TOL: f64 = 1e-7;

/// Solves the user's horizon, adding complementarity binaries only where the
/// relaxed split imports and exports at once. The result is optimal for the
/// full model built by [`build_user_problem`].
pub fn plan_user_horizon(
    profile: &UserProfile,
    tariffs: &TariffBook,
    start: usize,
    carryover: f64,
    credit_init: f64,
    cfg: &HorizonConfig,
) -> Result<UserHorizonPlan> {
    let n = cfg.intervals;
    // Intervals where importing and exporting together is cheaper than not,
    // so the relaxation is certain to exploit the missing binary.
    let mut mask: Vec<bool> = (start..start + n)
        .map(|i| {
            let (rt, imp, exp) = (tariffs.rt_price[i], tariffs.import_charge[i], tariffs.export_charge[i]);
            profile.pv[i] > 0.0 && (imp + exp < 0.0 || rt + imp + exp < 0.0)
        })
        .collect();
    loop {
        let problem = build_user_problem_with(profile, tariffs, start, carryover, credit_init, cfg, &mask)?;
        let plan = solve_user_horizon(&problem)?;
        let mut added = false;
        for t in 0..n {
            if problem.layout.phi[t].is_none() && plan.x_pos[t].min(plan.x_neg[t]) > COMPLEMENTARITY_TOL {
                mask[t] = true;
                added = true;
            }
        }
        if !added {
            return Ok(plan);
        }
    }
}
