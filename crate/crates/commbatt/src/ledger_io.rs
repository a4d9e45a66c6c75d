//! Ledger files.
//!
//! A ledger is three comma-separated files in one directory:
//! `ledger_meta.csv` (`key,value` rows), `ledger_operator.csv` (one row per
//! horizon) and `ledger_users.csv` (one row per horizon and user). Numbers
//! are written with the shortest text that parses back to the same `f64`,
//! so a ledger read back compares equal to the one written.

use std::path::Path;

use commbatt_core::simulator::{HorizonRecord, Mode, OperatorRecord, ScenarioLedger, Settlement, SolverStats, UserRecord};
use commbatt_core::HorizonConfig;

use crate::error::{CliError, CliResult};

pub const META_FILE: &str = "ledger_meta.csv";
pub const OPERATOR_FILE: &str = "ledger_operator.csv";
pub const USERS_FILE: &str = "ledger_users.csv";

const OPERATOR_HEADER: [&str; 18] = [
    "horizon", "p_ch", "p_dis", "energy", "up", "un", "u_grid", "zeta_local", "forecast_net", "belief_mu", "belief_sigma",
    "eta", "user_net", "import", "export", "shortfall", "surplus", "counterfactual",
];

const USERS_HEADER: [&str; 14] = [
    "horizon", "user", "x_star", "x_rnd", "x_real", "x_pos", "x_neg", "x_grid", "delta", "credits", "g_spill", "carryover",
    "plan_next", "plan_after_next",
];

/// Exact text form of a float.
pub fn exact(v: f64) -> String {
    format!("{v:?}")
}

fn writer(path: &Path) -> CliResult<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Data(format!("{}: {other:?}", path.display())),
    }
}

pub fn write_ledger(dir: &Path, ledger: &ScenarioLedger) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;

    let path = dir.join(META_FILE);
    let mut w = writer(&path)?;
    let s = &ledger.stats;
    let c = &ledger.cfg;
    let rows: [(&str, String); 14] = [
        ("mode", ledger.mode.label().to_string()),
        ("seed", ledger.seed.to_string()),
        ("intervals", c.intervals.to_string()),
        ("rebound", c.rebound.to_string()),
        ("days", c.days.to_string()),
        ("dt", exact(c.dt)),
        ("horizons", ledger.len().to_string()),
        ("users", ledger.users().to_string()),
        ("user_solves", s.user_solves.to_string()),
        ("cbs_solves", s.cbs_solves.to_string()),
        ("eta_relaxations", s.eta_relaxations.to_string()),
        ("fallbacks", s.fallbacks.to_string()),
        ("consumption_clamps", s.consumption_clamps.to_string()),
        ("carryover_clamps", s.carryover_clamps.to_string()),
    ];
    let io = |e| csv_err(&path, e);
    w.write_record(["key", "value"]).map_err(io)?;
    for (k, v) in rows {
        w.write_record([k, v.as_str()]).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let path = dir.join(OPERATOR_FILE);
    let mut w = writer(&path)?;
    let io = |e| csv_err(&path, e);
    w.write_record(OPERATOR_HEADER).map_err(io)?;
    for (h, r) in ledger.horizons.iter().enumerate() {
        let o = &r.operator;
        let st = &r.settlement;
        let mut rec = vec![h.to_string()];
        rec.extend(
            [o.p_ch, o.p_dis, o.energy, o.up, o.un, o.u_grid, o.zeta_local, o.forecast_net, o.belief_mu, o.belief_sigma]
                .map(exact),
        );
        rec.push(o.eta.map(exact).unwrap_or_default());
        rec.extend([st.user_net, st.import, st.export, st.shortfall, st.surplus, st.counterfactual].map(exact));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let path = dir.join(USERS_FILE);
    let mut w = writer(&path)?;
    let io = |e| csv_err(&path, e);
    w.write_record(USERS_HEADER).map_err(io)?;
    for (h, r) in ledger.horizons.iter().enumerate() {
        for (n, u) in r.users.iter().enumerate() {
            let mut rec = vec![h.to_string(), n.to_string()];
            rec.extend(
                [
                    u.x_star, u.x_rnd, u.x_real, u.x_pos, u.x_neg, u.x_grid, u.delta, u.credits, u.g_spill, u.carryover,
                    u.ahead[0], u.ahead[1],
                ]
                .map(exact),
            );
            w.write_record(&rec).map_err(io)?;
        }
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(())
}

struct Rows {
    path: std::path::PathBuf,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Rows {
    fn read(path: std::path::PathBuf, header: &[&str]) -> CliResult<Self> {
        let mut rdr = csv::Reader::from_path(&path).map_err(|e| csv_err(&path, e))?;
        let got = rdr.headers().map_err(|e| csv_err(&path, e))?.clone();
        if got.iter().collect::<Vec<_>>() != header {
            return Err(CliError::Data(format!("{}: row 1: unexpected header", path.display())));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_err(&path, e))?;
            rows.push((rec.position().map_or(0, |p| p.line()), rec));
        }
        Ok(Rows { path, rows })
    }

    fn err(&self, row: u64, msg: impl std::fmt::Display) -> CliError {
        CliError::Data(format!("{}: row {row}: {msg}", self.path.display()))
    }

    fn parse<T: std::str::FromStr>(&self, row: u64, rec: &csv::StringRecord, i: usize) -> CliResult<T> {
        let s = rec.get(i).ok_or_else(|| self.err(row, format!("missing column {}", i + 1)))?;
        s.parse().map_err(|_| self.err(row, format!("cannot parse `{s}`")))
    }
}

pub fn read_ledger(dir: &Path) -> CliResult<ScenarioLedger> {
    let meta = Rows::read(dir.join(META_FILE), &["key", "value"])?;
    let lookup = |key: &str| -> CliResult<(u64, &csv::StringRecord)> {
        meta.rows
            .iter()
            .find(|(_, r)| r.get(0) == Some(key))
            .map(|(n, r)| (*n, r))
            .ok_or_else(|| CliError::Data(format!("{}: missing key {key}", meta.path.display())))
    };
    let get_usize = |key: &str| -> CliResult<usize> {
        let (n, r) = lookup(key)?;
        meta.parse(n, r, 1)
    };
    let (n, r) = lookup("mode")?;
    let mode = Mode::parse(r.get(1).unwrap_or("")).ok_or_else(|| meta.err(n, "unknown mode"))?;
    let (n, r) = lookup("seed")?;
    let seed: u64 = meta.parse(n, r, 1)?;
    let (n, r) = lookup("dt")?;
    let dt: f64 = meta.parse(n, r, 1)?;
    let cfg = HorizonConfig { intervals: get_usize("intervals")?, rebound: get_usize("rebound")?, days: get_usize("days")?, dt };
    let stats = SolverStats {
        user_solves: get_usize("user_solves")?,
        cbs_solves: get_usize("cbs_solves")?,
        eta_relaxations: get_usize("eta_relaxations")?,
        fallbacks: get_usize("fallbacks")?,
        consumption_clamps: get_usize("consumption_clamps")?,
        carryover_clamps: get_usize("carryover_clamps")?,
    };
    let horizons = get_usize("horizons")?;
    let users = get_usize("users")?;

    let op = Rows::read(dir.join(OPERATOR_FILE), &OPERATOR_HEADER)?;
    if op.rows.len() != horizons {
        return Err(CliError::Data(format!("{}: {} rows for {horizons} horizons", op.path.display(), op.rows.len())));
    }
    let mut records = Vec::with_capacity(horizons);
    for (h, (n, r)) in op.rows.iter().enumerate() {
        if op.parse::<usize>(*n, r, 0)? != h {
            return Err(op.err(*n, format!("expected horizon {h}")));
        }
        let f = |i: usize| op.parse::<f64>(*n, r, i);
        let eta = match r.get(11) {
            Some("") => None,
            _ => Some(f(11)?),
        };
        records.push(HorizonRecord {
            users: Vec::with_capacity(users),
            operator: OperatorRecord {
                p_ch: f(1)?,
                p_dis: f(2)?,
                energy: f(3)?,
                up: f(4)?,
                un: f(5)?,
                u_grid: f(6)?,
                zeta_local: f(7)?,
                forecast_net: f(8)?,
                belief_mu: f(9)?,
                belief_sigma: f(10)?,
                eta,
            },
            settlement: Settlement {
                user_net: f(12)?,
                import: f(13)?,
                export: f(14)?,
                shortfall: f(15)?,
                surplus: f(16)?,
                counterfactual: f(17)?,
            },
        });
    }

    let us = Rows::read(dir.join(USERS_FILE), &USERS_HEADER)?;
    if us.rows.len() != horizons * users {
        return Err(CliError::Data(format!("{}: {} rows for {horizons} horizons of {users} users", us.path.display(), us.rows.len())));
    }
    for (k, (n, r)) in us.rows.iter().enumerate() {
        let (h, u) = (us.parse::<usize>(*n, r, 0)?, us.parse::<usize>(*n, r, 1)?);
        if (h, u) != (k / users, k % users) {
            return Err(us.err(*n, format!("expected horizon {} user {}", k / users, k % users)));
        }
        let f = |i: usize| us.parse::<f64>(*n, r, i);
        records[h].users.push(UserRecord {
            x_star: f(2)?,
            x_rnd: f(3)?,
            x_real: f(4)?,
            x_pos: f(5)?,
            x_neg: f(6)?,
            x_grid: f(7)?,
            delta: f(8)?,
            credits: f(9)?,
            g_spill: f(10)?,
            carryover: f(11)?,
            ahead: [f(12)?, f(13)?],
        });
    }
    Ok(ScenarioLedger { mode, seed, cfg, horizons: records, stats })
}
