use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use commbatt::ledger_io::{read_ledger, write_ledger};

const TOY: &str = "[synthetic]\nusers = 3\nprosumers = 1\n[horizon]\ndays = 1\n[battery]\ncapacity = 15.0\n";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_commbatt"))
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("scenario.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn simulate_writes_ledger_and_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TOY);
    let out = tmp.path().join("out");
    let o = run(&["simulate", "--config", s(&cfg), "--mode", "la", "--out", s(&out)]);
    assert!(o.status.success());
    for f in ["ledger_meta.csv", "ledger_operator.csv", "ledger_users.csv", "report.csv", "overlay.csv", "series.csv", "bills.csv", "summary.txt"] {
        assert!(out.join("la").join(f).is_file(), "{f}");
    }
    for f in ["acf.csv", "covariance.csv", "randomness.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let cov = std::fs::read_to_string(out.join("covariance.csv")).unwrap();
    assert_eq!(cov.lines().count(), 1 + 48 * 48);
    assert!(String::from_utf8(o.stdout).unwrap().contains("annual_revenue"));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TOY);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        assert!(run(&["simulate", "--config", s(&cfg), "--mode", "la+ti+br", "--seed", "7", "--out", s(d)]).status.success());
    }
    let (fa, fb) = (files(&a), files(&b));
    assert!(fa.len() >= 11);
    assert_eq!(fa, fb);
}

#[test]
fn emitted_ledger_parses_back_equal() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TOY);
    let out = tmp.path().join("out");
    assert!(run(&["simulate", "--config", s(&cfg), "--mode", "la+ti", "--seed", "3", "--out", s(&out)]).status.success());
    let ledger = read_ledger(&out.join("la+ti")).unwrap();
    assert_eq!(ledger.len(), 48);
    assert_eq!(ledger.users(), 3);

    // Writing the parsed ledger again reproduces the files exactly.
    let again = tmp.path().join("again");
    write_ledger(&again, &ledger).unwrap();
    for f in ["ledger_meta.csv", "ledger_operator.csv", "ledger_users.csv"] {
        assert_eq!(std::fs::read(out.join("la+ti").join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }
    // Plans past the end of the run are NaN, so compare through exact text.
    assert_eq!(format!("{:?}", read_ledger(&again).unwrap()), format!("{ledger:?}"));
}

#[test]
fn sweep_irr_writes_one_row_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TOY);
    let out = tmp.path().join("out");
    let o = run(&["sweep-irr", "--config", s(&cfg), "--capex", "400:1000:100", "--credit", "0:0.15:0.025", "--out", s(&out)]);
    assert!(o.status.success());
    let grid = std::fs::read_to_string(out.join("irr_grid.csv")).unwrap();
    let rows: Vec<&str> = grid.lines().collect();
    assert_eq!(rows[0], "unit_cost,credit_charge,profit,irr");
    assert_eq!(rows.len(), 1 + 7 * 7);
    let cells: Vec<(f64, f64)> = rows[1..]
        .iter()
        .map(|r| {
            let c: Vec<f64> = r.split(',').map(|x| x.parse().unwrap()).collect();
            (c[0], c[1])
        })
        .collect();
    assert_eq!(cells[0], (400.0, 0.0));
    assert!((cells[48].0 - 1000.0).abs() < 1e-9 && (cells[48].1 - 0.15).abs() < 1e-9);
    // Profit falls with capex at a fixed credit charge.
    let profit = |i: usize| rows[1 + i].split(',').nth(2).unwrap().parse::<f64>().unwrap();
    assert!(profit(7) < profit(0));
}

#[test]
fn compare_bills_sweeps_credit_charges() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TOY);
    let out = tmp.path().join("out");
    assert!(run(&["compare-bills", "--config", s(&cfg), "--mode", "la+ti", "--credit", "0:0.1:0.05", "--out", s(&out)]).status.success());
    let bills = std::fs::read_to_string(out.join("bills.csv")).unwrap();
    assert_eq!(bills.lines().count(), 1 + 3 * 3);
    for row in bills.lines().skip(1) {
        let savings: f64 = row.split(',').nth(4).unwrap().parse().unwrap();
        assert!(savings >= 0.0);
    }
}

/// Half-hourly CSVs for two users over 28 days plus a price file.
fn write_dataset(dir: &Path, gap: Option<std::ops::Range<usize>>) {
    let mut cons = String::from("user_id,timestamp,kwh\n");
    let mut pv = String::from("user_id,timestamp,kwh\n");
    let mut prices = String::from("timestamp,price_per_kwh\n");
    let stamp = timestamp_of();
    for (u, scale) in [("a", 1.0), ("b", 1.3)] {
        for i in 0..28 * 48 {
            if u == "a" && gap.as_ref().is_some_and(|g| g.contains(&i)) {
                continue;
            }
            let hour = (i % 48) as f64 / 2.0;
            let day = (i / 48) as f64;
            let load = scale * (0.3 + 0.2 * (hour / 24.0 * std::f64::consts::TAU).sin().abs() + 0.05 * ((i * 7919 % 97) as f64 / 97.0))
                + 0.01 * day.sin().abs();
            writeln!(cons, "{u},{},{load}", stamp(i)).unwrap();
            let sun = if (12..36).contains(&(i % 48)) { ((i % 48 - 12) as f64 / 24.0 * std::f64::consts::PI).sin() } else { 0.0 };
            writeln!(pv, "{u},{},{}", stamp(i), if u == "a" { 0.8 * sun } else { 0.0 }).unwrap();
        }
    }
    for i in 0..28 * 48 {
        let hour = (i % 48) as f64 / 2.0;
        let price = if (10.0..14.0).contains(&hour) { -20.0 } else { 60.0 + 40.0 * (hour / 24.0 * std::f64::consts::TAU).cos() };
        writeln!(prices, "{},{price}", stamp(i)).unwrap();
    }
    std::fs::write(dir.join("consumption.csv"), cons).unwrap();
    std::fs::write(dir.join("pv.csv"), pv).unwrap();
    std::fs::write(dir.join("prices.csv"), prices).unwrap();
}

fn timestamp_of() -> impl Fn(usize) -> String {
    |i| {
        let day = 1 + i / 48;
        let (h, m) = ((i % 48) / 2, 30 * (i % 2));
        format!("2012-07-{day:02} {h:02}:{m:02}")
    }
}

const DATA_CFG: &str = "[data]\nconsumption = \"consumption.csv\"\npv = \"pv.csv\"\nprices = \"prices.csv\"\nprice_unit = \"mwh\"\n\
                        [horizon]\ndays = 1\n[battery]\ncapacity = 10.0\n";

#[test]
fn simulates_from_csv_files() {
    let tmp = tempfile::tempdir().unwrap();
    write_dataset(tmp.path(), None);
    let cfg = write_config(tmp.path(), DATA_CFG);
    let o = run(&["validate-data", "--config", s(&cfg)]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("users: 2"), "{text}");
    assert!(text.contains("price range: -2.00000000e-2"), "{text}");

    let out = tmp.path().join("out");
    assert!(run(&["simulate", "--config", s(&cfg), "--mode", "la+ti+br", "--out", s(&out)]).status.success());
    let bills = std::fs::read_to_string(out.join("la+ti+br/bills.csv")).unwrap();
    assert!(bills.lines().nth(1).unwrap().contains(",a,"));
}

#[test]
fn short_gaps_are_filled_long_gaps_exit_with_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    write_dataset(tmp.path(), Some(100..102));
    let cfg = write_config(tmp.path(), DATA_CFG);
    assert!(run(&["validate-data", "--config", s(&cfg)]).status.success());

    write_dataset(tmp.path(), Some(100..103));
    let o = run(&["validate-data", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(4));
    let err = String::from_utf8(o.stderr).unwrap();
    let last = err.lines().last().unwrap();
    assert!(last.starts_with("error: data:") && last.contains("consumption.csv") && last.contains("row"), "{last}");
}

#[test]
fn empty_data_file_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    write_dataset(tmp.path(), None);
    std::fs::write(tmp.path().join("consumption.csv"), "").unwrap();
    let cfg = write_config(tmp.path(), DATA_CFG);
    let o = run(&["validate-data", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8(o.stderr).unwrap().contains("consumption.csv"));
}

#[test]
fn failures_map_to_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| bin().args(args).output().unwrap().status.code();

    let unknown = write_config(tmp.path(), "[battery]\ncapacity_kwh = 3.0\n");
    assert_eq!(code(&["simulate", "--config", s(&unknown)]), Some(3));
    let missing = write_config(tmp.path(), "[data]\nconsumption = \"nope.csv\"\nprices = \"nope.csv\"\n");
    assert_eq!(code(&["validate-data", "--config", s(&missing)]), Some(3));
    let cfg = write_config(tmp.path(), TOY);
    assert_eq!(code(&["simulate", "--config", s(&cfg), "--mode", "lati"]), Some(2));
    assert_eq!(code(&["sweep-irr", "--config", s(&cfg), "--capex", "5:1:1"]), Some(2));
    assert_eq!(code(&["no-such-command"]), Some(2));

    // An output path blocked by a regular file is an IO failure.
    let blocker = tmp.path().join("blocker");
    std::fs::write(&blocker, "").unwrap();
    let o = bin().args(["fit-randomness", "--config", s(&cfg), "--out", s(&blocker.join("x"))]).output().unwrap();
    assert_eq!(o.status.code(), Some(6));
    assert!(String::from_utf8(o.stderr).unwrap().lines().last().unwrap().starts_with("error:"));
}
