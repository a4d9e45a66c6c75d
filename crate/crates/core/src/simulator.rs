//! Receding-horizon simulation. Every horizon the users plan their lookahead
//! window and commit the first interval, randomness is realized on the
//! committed consumption, and the battery operator schedules against its own
//! model of the users. Users always behave with loss aversion, time
//! inconsistency and randomness; the [`Mode`] only selects what the operator
//! accounts for.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cbs::{
    schedule_chance_constrained, schedule_deterministic, ChanceConfig, CommunityDemand, RandomnessBelief, ETA_STEP,
};
use crate::enduser::{clamp_carryover, plan_user_horizon, update_carryover, UserHorizonPlan, UserProfile};
use crate::error::{invalid, Error, Result};
use crate::gp::SlidingGp;
use crate::randomness::RandomnessModel;
use crate::synthetic::{Band, BandSchedule};
use crate::time::{BatterySpec, HorizonConfig, TariffBook};

/// Which user behaviours the operator's scheduling model accounts for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    /// Loss aversion only: the operator forecasts users without discounting.
    La,
    /// Loss aversion and time inconsistency: the operator sees the users'
    /// actual plans and schedules deterministically.
    LaTi,
    /// All three: actual plans plus a chance-constrained schedule against the
    /// conditioned randomness.
    LaTiBr,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::La, Mode::LaTi, Mode::LaTiBr];

    pub fn label(self) -> &'static str {
        match self {
            Mode::La => "la",
            Mode::LaTi => "la+ti",
            Mode::LaTiBr => "la+ti+br",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.label().eq_ignore_ascii_case(s.trim()))
    }
}

impl core::fmt::Display for Mode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.label())
    }
}

/// Everything needed to run the horizon loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub cfg: HorizonConfig,
    pub users: Vec<UserProfile>,
    /// One model per user; ignored when `draw_randomness` is false.
    pub randomness: Vec<RandomnessModel>,
    pub tariffs: TariffBook,
    pub battery: BatterySpec,
    pub chance: ChanceConfig,
    pub draw_randomness: bool,
    /// Number of trailing observations each user's GP conditions on.
    pub gp_window: usize,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        let len = self.cfg.series_len();
        if self.users.is_empty() {
            return Err(invalid("scenario has no users"));
        }
        for (n, u) in self.users.iter().enumerate() {
            u.validate(len).map_err(|e| invalid(format!("user {n}: {e}")))?;
        }
        self.tariffs.validate(len)?;
        self.battery.validate()?;
        self.chance.validate()?;
        if self.draw_randomness {
            if self.randomness.len() != self.users.len() {
                return Err(invalid(format!(
                    "{} randomness models for {} users",
                    self.randomness.len(),
                    self.users.len()
                )));
            }
            for m in &self.randomness {
                m.validate()?;
            }
            if self.gp_window == 0 {
                return Err(invalid("GP window must be positive"));
            }
        }
        Ok(())
    }
}

/// Binding quantities of one user in one horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserRecord {
    /// Committed consumption `x*`.
    pub x_star: f64,
    /// Drawn randomness.
    pub x_rnd: f64,
    /// Realized consumption, `max(0, x* + x_rnd)`.
    pub x_real: f64,
    pub x_pos: f64,
    pub x_neg: f64,
    pub x_grid: f64,
    pub delta: f64,
    /// Credits held after the interval.
    pub credits: f64,
    pub g_spill: f64,
    /// Carryover the horizon was planned with (after clamping).
    pub carryover: f64,
    /// Consumption planned for the next two intervals (NaN past the window).
    pub ahead: [f64; 2],
}

impl UserRecord {
    /// Randomness actually applied once the clamp at zero is accounted for.
    pub fn applied_randomness(&self) -> f64 {
        self.x_real - self.x_star
    }

    pub fn clamped(&self) -> bool {
        self.x_star + self.x_rnd < 0.0
    }

    /// Realized net demand: the committed split moved by the applied randomness.
    pub fn realized_net(&self) -> f64 {
        self.x_pos - self.x_neg + self.applied_randomness()
    }
}

/// Binding battery decisions of one horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorRecord {
    pub p_ch: f64,
    pub p_dis: f64,
    /// Stored energy at the end of the interval.
    pub energy: f64,
    /// Committed community import `υ⁺`.
    pub up: f64,
    pub un: f64,
    pub u_grid: f64,
    pub zeta_local: f64,
    /// Community net demand the operator scheduled against.
    pub forecast_net: f64,
    /// Aggregated randomness belief at the binding interval.
    pub belief_mu: f64,
    pub belief_sigma: f64,
    /// First probability enforced, `None` when scheduled deterministically.
    pub eta: Option<f64>,
}

impl OperatorRecord {
    pub fn p_net(&self) -> f64 {
        self.p_ch - self.p_dis
    }
}

/// Ex-post energy balance of one interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settlement {
    /// Sum of realized user net demand.
    pub user_net: f64,
    pub import: f64,
    pub export: f64,
    /// Import beyond the committed `υ⁺`, bought at the real-time price.
    pub shortfall: f64,
    /// Committed import left unused, exported without revenue.
    pub surplus: f64,
    /// Community peak candidate without the battery.
    pub counterfactual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonRecord {
    pub users: Vec<UserRecord>,
    pub operator: OperatorRecord,
    pub settlement: Settlement,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolverStats {
    pub user_solves: usize,
    pub cbs_solves: usize,
    /// Relaxation steps taken on chance-constrained horizons.
    pub eta_relaxations: usize,
    /// Chance-constrained horizons scheduled deterministically.
    pub fallbacks: usize,
    pub consumption_clamps: usize,
    pub carryover_clamps: usize,
}

/// Binding record of every horizon of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioLedger {
    pub mode: Mode,
    pub seed: u64,
    pub cfg: HorizonConfig,
    pub horizons: Vec<HorizonRecord>,
    pub stats: SolverStats,
}

/// One point of the consumption overlay: the committed consumption of an
/// interval next to the plans made for it one and two horizons earlier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlayPoint {
    pub interval: usize,
    pub user: usize,
    pub binding: f64,
    pub one_back: f64,
    pub two_back: f64,
}

impl ScenarioLedger {
    pub fn len(&self) -> usize {
        self.horizons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.horizons.is_empty()
    }

    pub fn users(&self) -> usize {
        self.horizons.first().map_or(0, |h| h.users.len())
    }

    /// Largest community net demand without the battery, kWh per interval.
    pub fn counterfactual_peak(&self) -> f64 {
        self.horizons.iter().map(|h| h.settlement.counterfactual).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest realized community import, kWh per interval.
    pub fn realized_peak(&self) -> f64 {
        self.horizons.iter().map(|h| h.settlement.import).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest energy balance residual over all settled intervals.
    pub fn balance_residual(&self) -> f64 {
        let dt = self.cfg.dt;
        self.horizons
            .iter()
            .map(|h| {
                let s = &h.settlement;
                (s.user_net + h.operator.p_net() * dt - (s.import - s.export)).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Fraction of intervals whose realized import exceeds the committed one.
    pub fn violation_rate(&self, tol: f64) -> f64 {
        let v = self.horizons.iter().filter(|h| h.settlement.import > h.operator.up + tol).count();
        v as f64 / self.len().max(1) as f64
    }

    /// Overlay points for every interval with two earlier plans.
    pub fn overlay(&self) -> Vec<OverlayPoint> {
        let mut out = Vec::new();
        for i in 2..self.len() {
            for n in 0..self.horizons[i].users.len() {
                out.push(OverlayPoint {
                    interval: i,
                    user: n,
                    binding: self.horizons[i].users[n].x_star,
                    one_back: self.horizons[i - 1].users[n].ahead[0],
                    two_back: self.horizons[i - 2].users[n].ahead[1],
                });
            }
        }
        out
    }
}

/// Realized consumption: the committed value plus randomness, clamped at
/// zero. Returns the value and whether the clamp applied.
pub fn realize_consumption(x_star: f64, x_rnd: f64) -> (f64, bool) {
    let x = x_star + x_rnd;
    if x < 0.0 {
        (0.0, true)
    } else {
        (x, false)
    }
}

/// Settles one interval from the user records and the committed battery
/// decisions.
pub fn settle(users: &[UserRecord], op: &OperatorRecord, dt: f64) -> Settlement {
    let user_net: f64 = users.iter().map(UserRecord::realized_net).sum();
    let flow = user_net + op.p_net() * dt;
    let import = flow.max(0.0);
    let export = (-flow).max(0.0);
    let counterfactual = users.iter().map(|u| u.x_pos + u.applied_randomness() - u.x_neg).sum();
    Settlement {
        user_net,
        import,
        export,
        shortfall: (import - op.up).max(0.0),
        surplus: (op.up - import).max(0.0),
        counterfactual,
    }
}

/// Recomputes the settlement of horizon `h` from its binding records.
pub fn settle_horizon(ledger: &ScenarioLedger, h: usize) -> Result<Settlement> {
    let r = ledger
        .horizons
        .get(h)
        .ok_or_else(|| Error::OutOfRange(format!("horizon {h} of {}", ledger.len())))?;
    Ok(settle(&r.users, &r.operator, ledger.cfg.dt))
}

/// Runs one mode. Equivalent to the matching entry of [`run_modes`].
pub fn run_simulation(scenario: &Scenario, mode: Mode, seed: u64) -> Result<ScenarioLedger> {
    let mut out = run_modes(scenario, &[mode], seed)?;
    Ok(out.remove(0))
}

struct OperatorState {
    mode: Mode,
    energy: f64,
    horizons: Vec<HorizonRecord>,
    stats: SolverStats,
}

/// Runs several operator modes over one user trajectory. User behaviour and
/// randomness draws do not depend on the operator, so every mode sees the
/// same users and only the battery schedules differ.
pub fn run_modes(scenario: &Scenario, modes: &[Mode], seed: u64) -> Result<Vec<ScenarioLedger>> {
    scenario.validate()?;
    if modes.is_empty() {
        return Err(invalid("no modes requested"));
    }
    let cfg = &scenario.cfg;
    let users = &scenario.users;
    let n_users = users.len();
    let intervals = cfg.intervals;

    let needs_forecast = modes.contains(&Mode::La);
    let needs_belief = scenario.draw_randomness && modes.contains(&Mode::LaTiBr);
    let naive: Vec<UserProfile> = users.iter().map(|u| UserProfile { kappa: 0.0, ..u.clone() }).collect();

    let mut gps = Vec::new();
    let mut rngs = Vec::new();
    if scenario.draw_randomness {
        for n in 0..n_users {
            gps.push(SlidingGp::new(scenario.randomness[n].clone(), scenario.gp_window)?);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(n as u64);
            rngs.push(rng);
        }
    }

    let mut carry = vec![0.0; n_users];
    let mut credits: Vec<f64> = users.iter().map(|u| u.credit_init).collect();
    let mut shared = SolverStats::default();
    let mut states: Vec<OperatorState> = modes
        .iter()
        .map(|&mode| OperatorState {
            mode,
            energy: scenario.battery.e_init,
            horizons: Vec::with_capacity(cfg.horizons()),
            stats: SolverStats::default(),
        })
        .collect();

    for h in 0..cfg.horizons() {
        let mut step = || -> Result<Vec<UserRecord>> {
            let mut plans: Vec<UserHorizonPlan> = Vec::with_capacity(n_users);
            let mut forecasts = Vec::new();
            let mut records = Vec::with_capacity(n_users);
            for n in 0..n_users {
                let c = clamp_carryover(&users[n], h, carry[n], cfg);
                if c != carry[n] {
                    shared.carryover_clamps += 1;
                }
                let plan = plan_user_horizon(&users[n], &scenario.tariffs, h, c, credits[n], cfg)?;
                shared.user_solves += 1;
                if needs_forecast {
                    if users[n].kappa == 0.0 {
                        forecasts.push(plan.clone());
                    } else {
                        forecasts.push(plan_user_horizon(&naive[n], &scenario.tariffs, h, c, credits[n], cfg)?);
                        shared.user_solves += 1;
                    }
                }
                records.push(UserRecord {
                    x_star: plan.x[0],
                    x_rnd: 0.0,
                    x_real: plan.x[0],
                    x_pos: plan.x_pos[0],
                    x_neg: plan.x_neg[0],
                    x_grid: plan.x_grid[0],
                    delta: plan.delta[0],
                    credits: plan.credits[0],
                    g_spill: plan.g_spill[0],
                    carryover: c,
                    ahead: [
                        plan.x.get(1).copied().unwrap_or(f64::NAN),
                        plan.x.get(2).copied().unwrap_or(f64::NAN),
                    ],
                });
                plans.push(plan);
            }

            let belief = if needs_belief {
                let query: Vec<usize> = (h..h + intervals).collect();
                let mut mu = vec![0.0; intervals];
                let mut var = vec![0.0; intervals];
                for gp in &gps {
                    let (m, sd) = gp.marginals(&query)?;
                    let noise = &gp.model().noise_sigma;
                    for t in 0..intervals {
                        let e = noise[query[t] % noise.len()];
                        mu[t] += m[t];
                        var[t] += sd[t] * sd[t] + e * e;
                    }
                }
                RandomnessBelief { mu, sigma: var.into_iter().map(f64::sqrt).collect() }
            } else {
                RandomnessBelief::zero(intervals)
            };

            if scenario.draw_randomness {
                for n in 0..n_users {
                    let r = gps[n].draw_next(h, &mut rngs[n])?;
                    let (x, clamped) = realize_consumption(records[n].x_star, r);
                    if clamped {
                        log::info!("horizon {h}, user {n}: realized consumption clamped at zero");
                        shared.consumption_clamps += 1;
                    }
                    records[n].x_rnd = r;
                    records[n].x_real = x;
                }
            }

            for st in states.iter_mut() {
                let source = if st.mode == Mode::La { &forecasts } else { &plans };
                let demand = CommunityDemand::from_plans(source.iter())?;
                let plan = if st.mode == Mode::LaTiBr {
                    schedule_chance_constrained(
                        &demand,
                        &belief,
                        &scenario.chance,
                        &scenario.battery,
                        &scenario.tariffs,
                        h,
                        st.energy,
                        cfg,
                    )?
                } else {
                    schedule_deterministic(&demand, &scenario.battery, &scenario.tariffs, h, st.energy, cfg)?
                };
                st.stats.cbs_solves += 1;
                if st.mode == Mode::LaTiBr {
                    match plan.chance {
                        Some(c) => {
                            st.stats.eta_relaxations += ((scenario.chance.eta1 - c.eta1) / ETA_STEP).round() as usize
                        }
                        None => st.stats.fallbacks += 1,
                    }
                }
                let op = OperatorRecord {
                    p_ch: plan.p_ch[0],
                    p_dis: plan.p_dis[0],
                    energy: plan.energy[0],
                    up: plan.up[0],
                    un: plan.un[0],
                    u_grid: plan.u_grid[0],
                    zeta_local: plan.zeta_local,
                    forecast_net: demand.net(0),
                    belief_mu: if st.mode == Mode::LaTiBr { belief.mu[0] } else { 0.0 },
                    belief_sigma: if st.mode == Mode::LaTiBr { belief.sigma[0] } else { 0.0 },
                    eta: plan.chance.map(|c| c.eta1),
                };
                st.energy = plan.next_e_init();
                let settlement = settle(&records, &op, cfg.dt);
                st.horizons.push(HorizonRecord { users: records.clone(), operator: op, settlement });
            }
            Ok(records)
        };
        let records = step().map_err(|e| Error::Horizon { horizon: h, cause: Box::new(e) })?;
        for n in 0..n_users {
            carry[n] = update_carryover(records[n].carryover, users[n].expected[h], records[n].x_star);
            credits[n] = records[n].credits;
        }
    }

    Ok(states
        .into_iter()
        .map(|st| {
            let mut stats = shared;
            stats.cbs_solves = st.stats.cbs_solves;
            stats.eta_relaxations = st.stats.eta_relaxations;
            stats.fallbacks = st.stats.fallbacks;
            ScenarioLedger { mode: st.mode, seed, cfg: *cfg, horizons: st.horizons, stats }
        })
        .collect())
}

/// Ranges users' behavioural parameters are drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileParams {
    /// Elasticity range per tariff band, (least, most) negative.
    pub off_peak: (f64, f64),
    pub shoulder: (f64, f64),
    pub peak: (f64, f64),
    pub kappa: (f64, f64),
    pub tau: f64,
    /// Consumption bounds as fractions of the expected consumption.
    pub lower_factor: f64,
    pub upper_factor: f64,
    pub bands: BandSchedule,
}

impl Default for ProfileParams {
    fn default() -> Self {
        ProfileParams {
            off_peak: (-0.2, -0.3),
            shoulder: (-0.3, -0.5),
            peak: (-0.5, -0.7),
            kappa: (0.1, 0.5),
            tau: 0.2,
            lower_factor: 0.5,
            upper_factor: 1.5,
            bands: BandSchedule::default(),
        }
    }
}

/// Smallest expected consumption, kWh per interval; the discomfort term
/// divides by it.
pub const MIN_EXPECTED: f64 = 1e-3;

/// Median of each interval of the day over a history of whole days.
pub fn daily_medians(history: &[f64], intervals_per_day: usize) -> Result<Vec<f64>> {
    if intervals_per_day == 0 || history.len() < intervals_per_day {
        return Err(Error::SeriesTooShort { needed: intervals_per_day.max(1), got: history.len() });
    }
    let days = history.len() / intervals_per_day;
    let mut out = Vec::with_capacity(intervals_per_day);
    let mut col = Vec::with_capacity(days);
    for t in 0..intervals_per_day {
        col.clear();
        col.extend((0..days).map(|d| history[d * intervals_per_day + t]));
        if col.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite history value at interval {t}")));
        }
        col.sort_by(|a, b| a.total_cmp(b));
        let m = col.len() / 2;
        out.push(if col.len() % 2 == 1 { col[m] } else { 0.5 * (col[m - 1] + col[m]) });
    }
    Ok(out)
}

/// Builds a user profile from a consumption history and a PV series covering
/// the simulated window. Expected consumption repeats the daily medians of
/// the history; elasticities and the discounting degree are drawn uniformly
/// from `params`.
pub fn build_profile<R: Rng + ?Sized>(
    history: &[f64],
    pv: &[f64],
    cfg: &HorizonConfig,
    params: &ProfileParams,
    rng: &mut R,
) -> Result<UserProfile> {
    let per_day = cfg.intervals_per_day();
    let len = cfg.series_len();
    if pv.len() < len {
        return Err(Error::SeriesTooShort { needed: len, got: pv.len() });
    }
    let medians = daily_medians(history, per_day)?;
    let expected: Vec<f64> = (0..len).map(|i| medians[i % per_day].max(MIN_EXPECTED)).collect();
    let mut draw = |(a, b): (f64, f64)| if a == b { a } else { rng.random_range(a.min(b)..=a.max(b)) };
    let (e_off, e_sh, e_pk) = (draw(params.off_peak), draw(params.shoulder), draw(params.peak));
    let kappa = draw(params.kappa);
    let elasticity = (0..len)
        .map(|i| match params.bands.band_of(i, per_day, cfg.dt) {
            Band::OffPeak => e_off,
            Band::Shoulder => e_sh,
            Band::Peak => e_pk,
        })
        .collect();
    let pv = pv[..len].to_vec();
    let is_prosumer = pv.iter().any(|&g| g > 0.0);
    Ok(UserProfile {
        lower: expected.iter().map(|v| params.lower_factor * v).collect(),
        upper: expected.iter().map(|v| params.upper_factor * v).collect(),
        expected,
        historical: history.to_vec(),
        elasticity,
        kappa,
        tau: params.tau,
        pv,
        credit_init: 0.0,
        is_prosumer,
    })
}
