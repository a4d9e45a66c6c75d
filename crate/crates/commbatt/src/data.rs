//! CSV inputs.
//!
//! Consumption and PV files have the header `user_id,timestamp,kwh`, prices
//! `timestamp,price_per_kwh`. Timestamps are local wall-clock times written
//! as `YYYY-MM-DD HH:MM[:SS]` (a `T` separator is also accepted) and mark
//! the start of each interval. Every user's rows must be in increasing time
//! order on the interval grid; gaps of up to two intervals are filled by
//! linear interpolation, longer gaps are rejected. All series share the time
//! base of the consumption file.

use std::collections::HashMap;
use std::path::Path;

use chrono::{NaiveDateTime, TimeDelta};

use crate::config::{DataSection, PriceUnit};
use crate::error::{CliError, CliResult};

/// Longest run of missing intervals that is interpolated.
pub const MAX_GAP: usize = 2;

const FORMATS: [&str; 4] = ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M"];

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    FORMATS.iter().find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserSeries {
    pub id: String,
    pub values: Vec<f64>,
}

/// Per-user series on a common grid starting at `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct UserTable {
    pub start: NaiveDateTime,
    pub users: Vec<UserSeries>,
    /// Intervals filled by interpolation.
    pub interpolated: usize,
}

impl UserTable {
    pub fn len(&self) -> usize {
        self.users.first().map_or(0, |u| u.values.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Everything loaded from disk, aligned on the consumption time base.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub consumption: UserTable,
    /// PV per consumption user, zeros for users without PV rows.
    pub pv: Vec<Vec<f64>>,
    pub prices: Option<Vec<f64>>,
}

fn data_err(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {msg}", path.display()))
}

fn step_of(dt_hours: f64) -> TimeDelta {
    TimeDelta::milliseconds((dt_hours * 3_600_000.0).round() as i64)
}

fn reader(path: &Path, header: &[&str]) -> CliResult<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let got = rdr.headers().map_err(|e| data_err(path, e))?.clone();
    if got.is_empty() || got.iter().all(str::is_empty) {
        return Err(data_err(path, "file is empty"));
    }
    if got.iter().collect::<Vec<_>>() != header {
        return Err(data_err(path, format!("row 1: expected header `{}`, found `{}`", header.join(","), got.iter().collect::<Vec<_>>().join(","))));
    }
    Ok(rdr)
}

fn field<'a>(path: &Path, row: u64, rec: &'a csv::StringRecord, i: usize) -> CliResult<&'a str> {
    rec.get(i).ok_or_else(|| data_err(path, format!("row {row}: missing column {}", i + 1)))
}

fn number(path: &Path, row: u64, s: &str) -> CliResult<f64> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(data_err(path, format!("row {row}: `{s}` is not a finite number"))),
    }
}

fn timestamp(path: &Path, row: u64, s: &str) -> CliResult<NaiveDateTime> {
    parse_timestamp(s).ok_or_else(|| data_err(path, format!("row {row}: unrecognised timestamp `{s}`")))
}

/// Number of whole steps from `a` to `b`, if `b` lies on the grid.
fn steps_between(a: NaiveDateTime, b: NaiveDateTime, step: TimeDelta) -> Option<i64> {
    let d = (b - a).num_milliseconds();
    let s = step.num_milliseconds();
    (d % s == 0).then_some(d / s)
}

/// Reads a `user_id,timestamp,kwh` file. Values must be non-negative.
pub fn read_user_table(path: &Path, dt_hours: f64) -> CliResult<UserTable> {
    let step = step_of(dt_hours);
    if step <= TimeDelta::zero() {
        return Err(data_err(path, "interval length must be positive"));
    }
    let mut rdr = reader(path, &["user_id", "timestamp", "kwh"])?;
    let mut order: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    // Per user: start, values, last row number.
    let mut series: Vec<(NaiveDateTime, Vec<f64>, u64)> = Vec::new();
    let mut interpolated = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| data_err(path, e))?;
        let row = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(data_err(path, format!("row {row}: expected 3 columns, found {}", rec.len())));
        }
        let id = field(path, row, &rec, 0)?;
        if id.is_empty() {
            return Err(data_err(path, format!("row {row}: empty user_id")));
        }
        let ts = timestamp(path, row, field(path, row, &rec, 1)?)?;
        let v = number(path, row, field(path, row, &rec, 2)?)?;
        if v < 0.0 {
            return Err(data_err(path, format!("row {row}: negative energy {v}")));
        }
        let k = match index.get(id) {
            Some(&k) => k,
            None => {
                index.insert(id.to_string(), order.len());
                order.push(id.to_string());
                series.push((ts, Vec::new(), row));
                order.len() - 1
            }
        };
        let (start, values, last_row) = &mut series[k];
        if !values.is_empty() {
            let expected = *start + step * values.len() as i32;
            let n = steps_between(expected - step, ts, step)
                .ok_or_else(|| data_err(path, format!("row {row}: timestamp {ts} is off the {dt_hours} h interval grid")))?;
            if n < 1 {
                return Err(data_err(path, format!("row {row}: timestamp {ts} does not follow row {last_row} for user {id}")));
            }
            let missing = (n - 1) as usize;
            if missing > MAX_GAP {
                return Err(data_err(path, format!("row {row}: gap of {missing} intervals for user {id} (at most {MAX_GAP} are interpolated)")));
            }
            if missing > 0 {
                log::warn!("{}: row {row}: interpolating {missing} missing intervals for user {id}", path.display());
                let prev = *values.last().unwrap();
                for j in 1..=missing {
                    values.push(prev + (v - prev) * j as f64 / (missing + 1) as f64);
                }
                interpolated += missing;
            }
        }
        values.push(v);
        *last_row = row;
    }
    if series.is_empty() {
        return Err(data_err(path, "file has no data rows"));
    }
    let (start, len) = (series[0].0, series[0].1.len());
    for (id, (s, v, _)) in order.iter().zip(&series) {
        if *s != start || v.len() != len {
            return Err(data_err(
                path,
                format!("user {id} covers {} intervals from {s}; user {} covers {len} from {start}", v.len(), order[0]),
            ));
        }
    }
    let users = order.into_iter().zip(series).map(|(id, (_, values, _))| UserSeries { id, values }).collect();
    Ok(UserTable { start, users, interpolated })
}

/// Reads a `timestamp,price_per_kwh` file on the grid starting at `start`.
/// Rows beyond `len` intervals are ignored.
pub fn read_prices(path: &Path, start: NaiveDateTime, dt_hours: f64, len: usize, unit: PriceUnit) -> CliResult<Vec<f64>> {
    let step = step_of(dt_hours);
    let mut rdr = reader(path, &["timestamp", "price_per_kwh"])?;
    let div = match unit {
        PriceUnit::Kwh => 1.0,
        PriceUnit::Mwh => 1000.0,
    };
    let mut out = Vec::with_capacity(len);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| data_err(path, e))?;
        let row = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(data_err(path, format!("row {row}: expected 2 columns, found {}", rec.len())));
        }
        let ts = timestamp(path, row, field(path, row, &rec, 0)?)?;
        let want = start + step * out.len() as i32;
        if ts != want {
            return Err(data_err(path, format!("row {row}: timestamp {ts} misaligned with consumption interval {} at {want}", out.len())));
        }
        out.push(number(path, row, field(path, row, &rec, 1)?)? / div);
        if out.len() == len {
            break;
        }
    }
    if out.is_empty() {
        return Err(data_err(path, "file has no data rows"));
    }
    if out.len() < len {
        return Err(data_err(path, format!("{} price rows cover only part of the {len} consumption intervals", out.len())));
    }
    Ok(out)
}

/// Loads the files named in `data` on intervals of `dt_hours`.
pub fn load_dataset(data: &DataSection, dt_hours: f64) -> CliResult<Dataset> {
    let path = data.consumption.as_deref().ok_or_else(|| CliError::Config("data.consumption is not set".into()))?;
    let consumption = read_user_table(path, dt_hours)?;
    let len = consumption.len();
    let mut pv = vec![vec![0.0; len]; consumption.users.len()];
    if let Some(pv_path) = data.pv.as_deref() {
        let table = read_user_table(pv_path, dt_hours)?;
        if table.start != consumption.start {
            return Err(data_err(pv_path, format!("starts at {}, consumption at {}", table.start, consumption.start)));
        }
        if table.len() < len {
            return Err(data_err(pv_path, format!("covers {} intervals, consumption {len}", table.len())));
        }
        for u in &table.users {
            let k = consumption
                .users
                .iter()
                .position(|c| c.id == u.id)
                .ok_or_else(|| data_err(pv_path, format!("user {} has no consumption rows", u.id)))?;
            pv[k] = u.values[..len].iter().map(|g| g * data.pv_scale).collect();
        }
    }
    let prices = match data.prices.as_deref() {
        Some(p) => Some(read_prices(p, consumption.start, dt_hours, len, data.price_unit)?),
        None => None,
    };
    Ok(Dataset { consumption, pv, prices })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_two_users() {
        let f = file("user_id,timestamp,kwh\na,2012-07-01 00:00,0.5\nb,2012-07-01 00:00,0.1\na,2012-07-01 00:30,0.6\nb,2012-07-01T00:30:00,0.2\n");
        let t = read_user_table(f.path(), 0.5).unwrap();
        assert_eq!(t.users.len(), 2);
        assert_eq!(t.users[0], UserSeries { id: "a".into(), values: vec![0.5, 0.6] });
        assert_eq!(t.users[1].values, vec![0.1, 0.2]);
    }

    #[test]
    fn short_gaps_interpolate_long_gaps_fail() {
        let f = file("user_id,timestamp,kwh\na,2012-07-01 00:00,1.0\na,2012-07-01 01:30,4.0\n");
        let t = read_user_table(f.path(), 0.5).unwrap();
        assert_eq!(t.users[0].values, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(t.interpolated, 2);
        let f = file("user_id,timestamp,kwh\na,2012-07-01 00:00,1.0\na,2012-07-01 02:00,4.0\n");
        let e = read_user_table(f.path(), 0.5).unwrap_err().to_string();
        assert!(e.contains("row 3") && e.contains("gap of 3"), "{e}");
    }

    #[test]
    fn schema_errors_name_file_and_row() {
        let f = file("");
        let e = read_user_table(f.path(), 0.5).unwrap_err().to_string();
        assert!(e.contains(&f.path().display().to_string()) && e.contains("empty"), "{e}");
        let f = file("user_id,timestamp,kwh\na,2012-07-01 00:00,x\n");
        assert!(read_user_table(f.path(), 0.5).unwrap_err().to_string().contains("row 2"));
        let f = file("user,timestamp,kwh\n");
        assert!(read_user_table(f.path(), 0.5).unwrap_err().to_string().contains("row 1"));
        let f = file("user_id,timestamp,kwh\na,2012-07-01 00:30,1\na,2012-07-01 00:00,1\n");
        assert!(read_user_table(f.path(), 0.5).unwrap_err().to_string().contains("row 3"));
    }

    #[test]
    fn prices_keep_sign_and_convert_units() {
        let start = parse_timestamp("2021-01-01 00:00").unwrap();
        let f = file("timestamp,price_per_kwh\n2021-01-01 00:00,-40\n2021-01-01 00:30,85.5\n");
        assert_eq!(read_prices(f.path(), start, 0.5, 2, PriceUnit::Mwh).unwrap(), vec![-0.04, 0.0855]);
        assert_eq!(read_prices(f.path(), start, 0.5, 2, PriceUnit::Kwh).unwrap(), vec![-40.0, 85.5]);
        let late = parse_timestamp("2021-01-01 00:30").unwrap();
        let e = read_prices(f.path(), late, 0.5, 2, PriceUnit::Kwh).unwrap_err().to_string();
        assert!(e.contains("row 2") && e.contains("misaligned"), "{e}");
    }
}
