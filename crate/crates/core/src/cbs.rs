//! Community battery scheduling for one receding horizon, deterministic or
//! chance-constrained against the aggregated consumption randomness.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::enduser::UserHorizonPlan;
use crate::error::{invalid, Error, Result};
use crate::normal::gaussian_quantile;
use crate::qp::{self, QuadraticProgram, Sense, SolveStatus, SolverSettings};
use crate::time::{BatterySpec, HorizonConfig, TariffBook};

/// Threshold above which both sides of a complementary pair count as active.
pub const COMPLEMENTARITY_TOL: f64 = 1e-7;

/// Relaxation steps tried when a chance-constrained horizon is infeasible.
pub const ETA_LADDER_STEPS: usize = 3;
pub const ETA_STEP: f64 = 0.02;

/// Aggregate positive and negative net demand reported by the users over a
/// horizon window, kWh per interval.
#[derive(Debug, Clone, PartialEq)]
pub struct CommunityDemand {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

impl CommunityDemand {
    pub fn new(pos: Vec<f64>, neg: Vec<f64>) -> Result<Self> {
        if pos.len() != neg.len() {
            return Err(invalid("positive and negative demand lengths differ"));
        }
        if pos.iter().chain(&neg).any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(invalid("community demand components must be non-negative"));
        }
        Ok(CommunityDemand { pos, neg })
    }

    pub fn from_plans<'a>(plans: impl IntoIterator<Item = &'a UserHorizonPlan>) -> Result<Self> {
        let mut pos: Vec<f64> = Vec::new();
        let mut neg: Vec<f64> = Vec::new();
        for p in plans {
            if pos.is_empty() {
                pos = vec![0.0; p.x_pos.len()];
                neg = vec![0.0; p.x_neg.len()];
            }
            if p.x_pos.len() != pos.len() {
                return Err(invalid("user plans cover different windows"));
            }
            for t in 0..pos.len() {
                pos[t] += p.x_pos[t].max(0.0);
                neg[t] += p.x_neg[t].max(0.0);
            }
        }
        CommunityDemand::new(pos, neg)
    }

    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }

    pub fn net(&self, t: usize) -> f64 {
        self.pos[t] - self.neg[t]
    }

    /// Peak of the users' aggregate net demand over the window.
    pub fn peak(&self) -> f64 {
        (0..self.len()).map(|t| self.net(t)).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Tolerance probabilities of the three chance constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChanceConfig {
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
}

impl Default for ChanceConfig {
    fn default() -> Self {
        ChanceConfig { eta1: 0.999, eta2: 0.975, eta3: 0.999 }
    }
}

impl ChanceConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta1", self.eta1), ("eta2", self.eta2), ("eta3", self.eta3)] {
            if !(v > 0.5 && v < 1.0) {
                return Err(invalid(format!("{name} = {v} must lie in (0.5, 1)")));
            }
        }
        Ok(())
    }

    /// One step down the relaxation ladder. Probabilities stop just above
    /// one half so the quantiles stay non-negative.
    pub fn relaxed(&self) -> Self {
        let step = |v: f64| (v - ETA_STEP).max(0.5 + 1e-9);
        ChanceConfig { eta1: step(self.eta1), eta2: step(self.eta2), eta3: step(self.eta3) }
    }

    fn quantiles(&self) -> Result<[f64; 3]> {
        self.validate()?;
        Ok([gaussian_quantile(self.eta1)?, gaussian_quantile(self.eta2)?, gaussian_quantile(self.eta3)?])
    }
}

/// Operator's aggregated belief about the randomness over a horizon window.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomnessBelief {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl RandomnessBelief {
    pub fn zero(len: usize) -> Self {
        RandomnessBelief { mu: vec![0.0; len], sigma: vec![0.0; len] }
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if self.mu.len() != len || self.sigma.len() != len {
            return Err(invalid(format!("belief must cover {len} intervals")));
        }
        if self.sigma.iter().any(|&s| !(s >= 0.0)) || self.mu.iter().any(|m| !m.is_finite()) {
            return Err(invalid("belief deviations must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbsHorizonPlan {
    pub energy: Vec<f64>,
    pub p_ch: Vec<f64>,
    pub p_dis: Vec<f64>,
    pub p_net: Vec<f64>,
    pub up: Vec<f64>,
    pub un: Vec<f64>,
    pub u_grid: Vec<f64>,
    pub zeta_local: f64,
    pub zeta_user: f64,
    pub objective: f64,
    /// Probabilities actually enforced, `None` for a deterministic schedule.
    pub chance: Option<ChanceConfig>,
}

impl CbsHorizonPlan {
    /// Stored energy to carry into the next horizon.
    pub fn next_e_init(&self) -> f64 {
        self.energy[0]
    }
}

/// Variable positions of one interval.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Slot {
    e: usize,
    ch: usize,
    dis: usize,
    up: usize,
    un: Option<usize>,
    grid: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbsLayout {
    slots: Vec<Slot>,
    zeta: usize,
    /// Binary separating import from export, where present.
    pub net_switch: Vec<Option<usize>>,
}

#[derive(Debug, Clone)]
pub struct CbsProblem {
    pub qp: QuadraticProgram,
    pub layout: CbsLayout,
    pub start: usize,
    pub e_init: f64,
    pub zeta_user: f64,
    pub dt: f64,
    pub efficiency: f64,
    pub demand: CommunityDemand,
    pub chance: Option<ChanceConfig>,
    prices: Vec<f64>,
    grid_charge: f64,
    opex: f64,
    peak_weight: f64,
    /// Per interval: net-demand floor, grid-import floor and import cap of
    /// the chance-constrained rows, before the battery term.
    chance_rows: Option<Vec<[f64; 3]>>,
}

/// Per-kWh-per-interval weight of the community peak in a one-day horizon:
/// the annual $/kW incentive spread over the days of a year.
pub fn peak_weight(tariffs: &TariffBook, dt: f64) -> f64 {
    tariffs.peak_incentive / 365.0 / dt
}

fn check_window(demand: &CommunityDemand, tariffs: &TariffBook, start: usize, cfg: &HorizonConfig) -> Result<()> {
    if demand.len() != cfg.intervals {
        return Err(invalid(format!("demand covers {} intervals, horizon has {}", demand.len(), cfg.intervals)));
    }
    if start + cfg.intervals > tariffs.rt_price.len() {
        return Err(Error::OutOfRange(format!("horizon starting at {start} exceeds price data")));
    }
    Ok(())
}

/// Import/export disjunction of one interval written over its convex hull:
/// battery power is split into an import-regime part (active when the
/// binary is 1) and an export-regime part, which keeps the relaxation far
/// tighter than big-M rows. Returns the binary.
fn add_direction_hull(qp: &mut QuadraticProgram, s: Slot, un: usize, net: f64, pmax: f64, dt: f64) -> usize {
    let phi = qp.add_binary(0.0);
    let ch1 = qp.add_variable(0.0, pmax, 0.0);
    let dis1 = qp.add_variable(0.0, pmax, 0.0);
    let ch0 = qp.add_variable(0.0, pmax, 0.0);
    let dis0 = qp.add_variable(0.0, pmax, 0.0);
    qp.add_constraint(vec![(s.ch, 1.0), (ch1, -1.0), (ch0, -1.0)], Sense::Eq, 0.0);
    qp.add_constraint(vec![(s.dis, 1.0), (dis1, -1.0), (dis0, -1.0)], Sense::Eq, 0.0);
    for v in [ch1, dis1] {
        qp.add_constraint(vec![(v, 1.0), (phi, -pmax)], Sense::Le, 0.0);
    }
    for v in [ch0, dis0] {
        qp.add_constraint(vec![(v, 1.0), (phi, pmax)], Sense::Le, pmax);
    }
    // up = net·φ + (ch1 − dis1)Δt and un = −net·(1 − φ) − (ch0 − dis0)Δt.
    qp.add_constraint(vec![(s.up, 1.0), (phi, -net), (ch1, -dt), (dis1, dt)], Sense::Eq, 0.0);
    qp.add_constraint(vec![(un, 1.0), (phi, -net), (ch0, dt), (dis0, -dt)], Sense::Eq, -net);
    phi
}

#[allow(clippy::too_many_arguments)]
fn build(
    demand: &CommunityDemand,
    belief: Option<&RandomnessBelief>,
    chance: Option<&ChanceConfig>,
    spec: &BatterySpec,
    tariffs: &TariffBook,
    start: usize,
    e_init: f64,
    cfg: &HorizonConfig,
    net_mask: &[bool],
) -> Result<CbsProblem> {
    spec.validate()?;
    check_window(demand, tariffs, start, cfg)?;
    let n = cfg.intervals;
    let dt = cfg.dt;
    let (e_lo, e_hi) = spec.energy_bounds();
    if e_init < e_lo - 1e-9 || e_init > e_hi + 1e-9 {
        return Err(invalid(format!("initial energy {e_init} outside [{e_lo}, {e_hi}]")));
    }
    let pmax = spec.max_power();
    let gamma = spec.efficiency;
    let wpk = peak_weight(tariffs, dt);
    let chance_rows = match chance {
        None => None,
        Some(c) => {
            let q = c.quantiles()?;
            let belief = belief.ok_or_else(|| invalid("chance constraints need a randomness belief"))?;
            belief.validate(n)?;
            Some(
                (0..n)
                    .map(|t| {
                        let (mu, sd) = (belief.mu[t], belief.sigma[t]);
                        [demand.net(t) + mu + sd * q[0], -demand.neg[t] + mu + sd * q[1], demand.pos[t] + mu + sd * q[2]]
                    })
                    .collect::<Vec<_>>(),
            )
        }
    };

    let mut qp = QuadraticProgram::new();
    let mut slots = Vec::with_capacity(n);
    for t in 0..n {
        let price = tariffs.rt_price[start + t];
        let e = qp.add_variable(e_lo, e_hi, 0.0);
        let ch = qp.add_variable(0.0, pmax, tariffs.opex * dt);
        let dis = qp.add_variable(0.0, pmax, 0.0);
        let up = qp.add_variable(0.0, f64::INFINITY, price);
        let un = match chance_rows {
            None => Some(qp.add_variable(0.0, f64::INFINITY, 0.0)),
            Some(_) => None,
        };
        let grid = qp.add_variable(0.0, f64::INFINITY, tariffs.grid_charge);
        slots.push(Slot { e, ch, dis, up, un, grid });
    }
    let zeta_user = demand.peak();
    let zeta = qp.add_variable(0.0, f64::INFINITY, wpk);
    qp.constant = -wpk * zeta_user;

    let mut net_switch = vec![None; n];
    for t in 0..n {
        let s = slots[t];
        match (&chance_rows, s.un) {
            (None, Some(un)) => {
                let net = demand.net(t);
                let reach_pos = net + pmax * dt > 0.0;
                let reach_neg = net - pmax * dt < 0.0;
                if net_mask[t] && reach_pos && reach_neg {
                    net_switch[t] = Some(add_direction_hull(&mut qp, s, un, net, pmax, dt));
                } else {
                    if net_mask[t] && !reach_pos {
                        qp.upper[s.up] = 0.0;
                    }
                    if net_mask[t] && !reach_neg {
                        qp.upper[un] = 0.0;
                    }
                    qp.add_constraint(vec![(s.up, 1.0), (un, -1.0), (s.ch, -dt), (s.dis, dt)], Sense::Eq, net);
                }
                qp.add_constraint(vec![(s.ch, dt), (s.grid, -1.0)], Sense::Le, demand.neg[t]);
            }
            (Some(rows), _) => {
                let [floor, grid_floor, cap] = rows[t];
                qp.add_constraint(vec![(s.up, 1.0), (s.ch, -dt), (s.dis, dt)], Sense::Ge, floor);
                qp.add_constraint(vec![(s.grid, 1.0), (s.ch, -dt)], Sense::Ge, grid_floor);
                qp.add_constraint(vec![(s.up, 1.0), (s.ch, -dt), (s.dis, dt)], Sense::Le, cap);
            }
            (None, None) => unreachable!("deterministic slot without export variable"),
        }
        qp.add_constraint(vec![(s.up, 1.0), (zeta, -1.0)], Sense::Le, 0.0);
        let mut soc = vec![(s.e, 1.0), (s.ch, -dt), (s.dis, dt / gamma)];
        let rhs = if t == 0 {
            e_init
        } else {
            soc.push((slots[t - 1].e, -1.0));
            0.0
        };
        qp.add_constraint(soc, Sense::Eq, rhs);
    }
    qp.big_m = 2.0 * (demand.pos.iter().chain(&demand.neg).fold(0.0f64, |m, v| m.max(*v)) + pmax * dt) + 1.0;

    Ok(CbsProblem {
        qp,
        layout: CbsLayout { slots, zeta, net_switch },
        start,
        e_init,
        zeta_user,
        dt,
        efficiency: gamma,
        demand: demand.clone(),
        chance: chance.copied(),
        prices: tariffs.rt_price[start..start + n].to_vec(),
        grid_charge: tariffs.grid_charge,
        opex: tariffs.opex,
        peak_weight: wpk,
        chance_rows,
    })
}

/// Deterministic scheduling problem with import/export binaries on every
/// interval where both directions are reachable.
pub fn build_deterministic(
    demand: &CommunityDemand,
    spec: &BatterySpec,
    tariffs: &TariffBook,
    start: usize,
    e_init: f64,
    cfg: &HorizonConfig,
) -> Result<CbsProblem> {
    build(demand, None, None, spec, tariffs, start, e_init, cfg, &vec![true; cfg.intervals])
}

#[allow(clippy::too_many_arguments)]
pub fn build_chance_constrained(
    demand: &CommunityDemand,
    belief: &RandomnessBelief,
    chance: &ChanceConfig,
    spec: &BatterySpec,
    tariffs: &TariffBook,
    start: usize,
    e_init: f64,
    cfg: &HorizonConfig,
) -> Result<CbsProblem> {
    build(demand, Some(belief), Some(chance), spec, tariffs, start, e_init, cfg, &vec![false; cfg.intervals])
}

pub fn solve_cbs_horizon(problem: &CbsProblem) -> Result<CbsHorizonPlan> {
    solve_cbs_horizon_with(problem, &SolverSettings::default())
}

fn solve_raw(problem: &CbsProblem, settings: &SolverSettings) -> Result<Vec<f64>> {
    let r = qp::solve_with_binaries_using(&problem.qp, settings)?;
    if r.status != SolveStatus::Optimal {
        return Err(Error::Solver { status: r.status, context: format!("battery problem at horizon {}", problem.start) });
    }
    Ok(r.x)
}

pub fn solve_cbs_horizon_with(problem: &CbsProblem, settings: &SolverSettings) -> Result<CbsHorizonPlan> {
    let x = solve_raw(problem, settings)?;
    Ok(extract_plan(problem, &x))
}

/// Turns a solver point into a plan. Simultaneous charging and discharging
/// is replaced by the single-direction power that leaves the same state of
/// energy; flows are then recomputed from the repaired power.
fn extract_plan(problem: &CbsProblem, x: &[f64]) -> CbsHorizonPlan {
    let lay = &problem.layout;
    let n = lay.slots.len();
    let dt = problem.dt;
    let gamma = problem.efficiency;
    let mut p_ch: Vec<f64> = lay.slots.iter().map(|s| x[s.ch].max(0.0)).collect();
    let mut p_dis: Vec<f64> = lay.slots.iter().map(|s| x[s.dis].max(0.0)).collect();
    let mut repaired = 0;
    for t in 0..n {
        if p_ch[t] > 0.0 && p_dis[t] > 0.0 {
            if p_ch[t].min(p_dis[t]) > COMPLEMENTARITY_TOL {
                repaired += 1;
            }
            let gain = p_ch[t] - p_dis[t] / gamma;
            p_ch[t] = gain.max(0.0);
            p_dis[t] = (-gain).max(0.0) * gamma;
        }
    }
    if repaired > 0 {
        log::debug!("horizon {}: repaired simultaneous charge and discharge in {repaired} intervals", problem.start);
    }
    let p_net: Vec<f64> = (0..n).map(|t| p_ch[t] - p_dis[t]).collect();
    // State of energy from the recursion itself, so it telescopes exactly.
    let mut energy = Vec::with_capacity(n);
    let mut e = problem.e_init;
    for t in 0..n {
        e += (p_ch[t] - p_dis[t] / gamma) * dt;
        energy.push(e);
    }
    let d = &problem.demand;
    let (up, un, u_grid): (Vec<f64>, Vec<f64>, Vec<f64>) = match &problem.chance_rows {
        None => {
            let flow: Vec<f64> = (0..n).map(|t| d.net(t) + p_net[t] * dt).collect();
            (
                flow.iter().map(|f| f.max(0.0)).collect(),
                flow.iter().map(|f| (-f).max(0.0)).collect(),
                (0..n).map(|t| (p_ch[t] * dt - d.neg[t]).max(0.0)).collect(),
            )
        }
        Some(rows) => {
            let mut up = Vec::with_capacity(n);
            for t in 0..n {
                let [floor, _, cap] = rows[t];
                let lo = (floor + p_net[t] * dt).max(0.0);
                let hi = cap + p_net[t] * dt;
                if hi < lo - 1e-9 {
                    log::debug!("horizon {}: import cap below floor at interval {t} after repair", problem.start);
                }
                up.push(x[lay.slots[t].up].min(hi).max(lo));
            }
            let grid = (0..n).map(|t| (p_ch[t] * dt + rows[t][1]).max(0.0)).collect();
            (up, vec![0.0; n], grid)
        }
    };
    let zeta_local = up.iter().fold(0.0f64, |m, v| m.max(*v));
    let mut objective = problem.peak_weight * (zeta_local - problem.zeta_user);
    for t in 0..n {
        objective += problem.prices[t] * up[t] + problem.grid_charge * u_grid[t] + problem.opex * p_ch[t] * dt;
    }
    CbsHorizonPlan {
        energy,
        p_ch,
        p_dis,
        p_net,
        up,
        un,
        u_grid,
        zeta_local,
        zeta_user: problem.zeta_user,
        objective,
        chance: problem.chance,
    }
}

#[allow(clippy::too_many_arguments)]
fn solve_lazy(
    demand: &CommunityDemand,
    belief: Option<&RandomnessBelief>,
    chance: Option<&ChanceConfig>,
    spec: &BatterySpec,
    tariffs: &TariffBook,
    start: usize,
    e_init: f64,
    cfg: &HorizonConfig,
) -> Result<CbsHorizonPlan> {
    let n = cfg.intervals;
    check_window(demand, tariffs, start, cfg)?;
    // Only a negative energy price rewards importing and exporting in the
    // same interval; elsewhere the relaxation is already complementary.
    let mut mask: Vec<bool> = (0..n).map(|t| tariffs.rt_price[start + t] < 0.0).collect();
    loop {
        let problem = build(demand, belief, chance, spec, tariffs, start, e_init, cfg, &mask)?;
        let x = solve_raw(&problem, &SolverSettings::default())?;
        let lay = &problem.layout;
        let mut added = false;
        for t in 0..n {
            let s = lay.slots[t];
            if let (None, Some(un)) = (lay.net_switch[t], s.un) {
                if x[s.up].min(x[un]) > COMPLEMENTARITY_TOL && !mask[t] {
                    mask[t] = true;
                    added = true;
                }
            }
        }
        if !added {
            return Ok(extract_plan(&problem, &x));
        }
    }
}

/// Deterministic schedule for one horizon. Import/export binaries are
/// introduced only where the relaxation uses both directions, which yields
/// the same optimum as the fully binary model.
pub fn schedule_deterministic(
    demand: &CommunityDemand,
    spec: &BatterySpec,
    tariffs: &TariffBook,
    start: usize,
    e_init: f64,
    cfg: &HorizonConfig,
) -> Result<CbsHorizonPlan> {
    solve_lazy(demand, None, None, spec, tariffs, start, e_init, cfg)
}

/// Chance-constrained schedule for one horizon. An infeasible instance is
/// retried with relaxed probabilities, then scheduled deterministically.
#[allow(clippy::too_many_arguments)]
pub fn schedule_chance_constrained(
    demand: &CommunityDemand,
    belief: &RandomnessBelief,
    chance: &ChanceConfig,
    spec: &BatterySpec,
    tariffs: &TariffBook,
    start: usize,
    e_init: f64,
    cfg: &HorizonConfig,
) -> Result<CbsHorizonPlan> {
    chance.validate()?;
    let mut eta = *chance;
    for step in 0..=ETA_LADDER_STEPS {
        match solve_lazy(demand, Some(belief), Some(&eta), spec, tariffs, start, e_init, cfg) {
            Ok(plan) => return Ok(plan),
            Err(Error::Solver { status: SolveStatus::Infeasible, .. }) if step < ETA_LADDER_STEPS => {
                log::warn!(
                    "horizon {start}: chance constraints infeasible at eta ({:.3}, {:.3}, {:.3}), relaxing",
                    eta.eta1,
                    eta.eta2,
                    eta.eta3
                );
                eta = eta.relaxed();
            }
            Err(Error::Solver { status: SolveStatus::Infeasible, .. }) => break,
            Err(e) => return Err(e),
        }
    }
    log::warn!("horizon {start}: chance constraints infeasible after relaxation, scheduling deterministically");
    schedule_deterministic(demand, spec, tariffs, start, e_init, cfg)
}
