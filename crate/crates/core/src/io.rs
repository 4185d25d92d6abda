//! Dataset files, night-gap augmentation and time covariates.
//!
//! A dataset file is comma-separated with header
//! `participant_id,t,y.<channel>...,u.<input>...`. Missing observations are
//! the literal `NA`; `t` is in hours since midnight of the participant's
//! first study day. Rows of a participant are contiguous with strictly
//! increasing `t`.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{EmaDataset, Participant};
use crate::error::{Error, Result};
use crate::simulate::covariates::weekday;
use crate::simulate::schedule::HOURS_PER_DAY;

const NA: &str = "NA";

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

/// Writes `bytes` to a temporary file beside `path`, then renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

struct PendingParticipant {
    id: String,
    t: Vec<f64>,
    y: Vec<f64>,
    u: Vec<f64>,
}

impl PendingParticipant {
    fn finish(self, n_obs: usize, n_inputs: usize) -> Participant {
        let rows = self.t.len();
        Participant::new(
            self.id,
            self.t,
            DMatrix::from_row_slice(rows, n_obs, &self.y),
            DMatrix::from_row_slice(rows, n_inputs, &self.u),
        )
    }
}

/// Parses a dataset from text.
pub fn parse_dataset(text: &str) -> Result<EmaDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| parse_error(1, e.to_string()))?.clone();
    if header.len() < 2 || &header[0] != "participant_id" || &header[1] != "t" {
        return Err(parse_error(1, "header must start with participant_id,t"));
    }
    let mut channel_names = Vec::new();
    let mut input_names = Vec::new();
    for col in header.iter().skip(2) {
        if let Some(name) = col.strip_prefix("y.") {
            if !input_names.is_empty() {
                return Err(parse_error(1, "y columns must precede u columns"));
            }
            channel_names.push(name.to_string());
        } else if let Some(name) = col.strip_prefix("u.") {
            input_names.push(name.to_string());
        } else {
            return Err(parse_error(1, format!("unexpected column {col:?}")));
        }
    }
    let (n_obs, n_inputs) = (channel_names.len(), input_names.len());

    let mut participants = Vec::new();
    let mut seen = HashSet::new();
    let mut current: Option<PendingParticipant> = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_error(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(parse_error(line, format!("expected {} fields, found {}", header.len(), record.len())));
        }
        let number = |field: &str, what: &str| -> Result<f64> {
            field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_error(line, format!("invalid {what} value {field:?}")))
        };
        let id = &record[0];
        if id.is_empty() {
            return Err(parse_error(line, "empty participant_id"));
        }
        let t = number(&record[1], "t")?;
        if current.as_ref().is_none_or(|c| c.id != id) {
            if !seen.insert(id.to_string()) {
                return Err(parse_error(line, format!("rows of participant {id} are not contiguous")));
            }
            if let Some(done) = current.take() {
                participants.push(done.finish(n_obs, n_inputs));
            }
            current = Some(PendingParticipant { id: id.to_string(), t: Vec::new(), y: Vec::new(), u: Vec::new() });
        }
        let cur = current.as_mut().expect("participant started");
        if cur.t.last().is_some_and(|&last| t <= last) {
            return Err(Error::NonMonotoneTime { participant: id.to_string(), line });
        }
        cur.t.push(t);
        for j in 0..n_obs {
            let field = &record[2 + j];
            cur.y.push(if field == NA { f64::NAN } else { number(field, "observation")? });
        }
        for j in 0..n_inputs {
            let field = &record[2 + n_obs + j];
            if field == NA {
                return Err(Error::NaInU(line));
            }
            cur.u.push(number(field, "input")?);
        }
    }
    if let Some(done) = current {
        participants.push(done.finish(n_obs, n_inputs));
    }
    Ok(EmaDataset::new(channel_names, input_names, participants))
}

pub fn read_dataset(path: &Path) -> Result<EmaDataset> {
    parse_dataset(&std::fs::read_to_string(path)?)
}

/// Renders a dataset; floats use the shortest representation that parses
/// back to the same value.
pub fn format_dataset(data: &EmaDataset) -> Result<String> {
    data.check()?;
    let mut out = String::from("participant_id,t");
    for name in &data.channel_names {
        let _ = write!(out, ",y.{name}");
    }
    for name in &data.input_names {
        let _ = write!(out, ",u.{name}");
    }
    out.push('\n');
    for p in &data.participants {
        if p.id.contains([',', '"', '\n']) {
            return Err(Error::InvalidInput(format!("participant id {:?} cannot be written", p.id)));
        }
        for k in 0..p.len() {
            let _ = write!(out, "{},{}", p.id, p.timestamps[k]);
            for j in 0..p.y.ncols() {
                if p.missing[(k, j)] {
                    out.push_str(",NA");
                } else {
                    let _ = write!(out, ",{}", p.y[(k, j)]);
                }
            }
            for j in 0..p.u.ncols() {
                let _ = write!(out, ",{}", p.u[(k, j)]);
            }
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn write_dataset(data: &EmaDataset, path: &Path) -> Result<()> {
    write_atomic(path, format_dataset(data)?.as_bytes())
}

fn contains_clock(lo: f64, hi: f64, clock: f64) -> bool {
    // some clock + 24d in (lo, hi]
    let d = ((hi - clock) / HOURS_PER_DAY).floor();
    clock + d * HOURS_PER_DAY > lo
}

/// Number of rows inserted into a gap of `gap` hours so that the grid
/// approaches `target_interval`.
pub fn night_rows(gap: f64, target_interval: f64) -> usize {
    ((gap / target_interval).round() as i64 - 1).max(0) as usize
}

/// Fills each overnight gap with all-`NA` rows spaced evenly across it.
///
/// A gap is overnight when it contains the `sleep` or `wake` clock time
/// (hours in `[0, 24)`). A gap of length `g` receives
/// `round(g / target_interval) - 1` rows, which makes the new spacing close
/// to `target_interval`. Inserted rows repeat the preceding inputs and are
/// flagged in `meta.inserted`.
pub fn augment_night_gaps(data: &EmaDataset, wake: f64, sleep: f64, target_interval: f64) -> Result<EmaDataset> {
    if !(target_interval > 0.0) {
        return Err(Error::InvalidInput("target_interval must be positive".into()));
    }
    for c in [wake, sleep] {
        if !(0.0..HOURS_PER_DAY).contains(&c) {
            return Err(Error::InvalidInput(format!("clock time {c} outside [0, 24)")));
        }
    }
    let mut out = data.clone();
    for (p, q) in data.participants.iter().zip(out.participants.iter_mut()) {
        let mut rows: Vec<(f64, Option<usize>)> = Vec::with_capacity(p.len());
        for k in 0..p.len() {
            if k > 0 {
                let (lo, hi) = (p.timestamps[k - 1], p.timestamps[k]);
                if contains_clock(lo, hi, sleep) || contains_clock(lo, hi, wake) {
                    let n = night_rows(hi - lo, target_interval);
                    let step = (hi - lo) / (n + 1) as f64;
                    rows.extend((1..=n).map(|i| (lo + step * i as f64, None)));
                }
            }
            rows.push((p.timestamps[k], Some(k)));
        }
        if rows.len() == p.len() {
            continue;
        }
        let (n_obs, n_inputs) = (p.y.ncols(), p.u.ncols());
        let mut y = DMatrix::from_element(rows.len(), n_obs, f64::NAN);
        let mut u = DMatrix::zeros(rows.len(), n_inputs);
        let mut inserted = Vec::with_capacity(rows.len());
        let mut last = 0;
        for (r, &(_, src)) in rows.iter().enumerate() {
            if let Some(k) = src {
                last = k;
                y.set_row(r, &p.y.row(k));
                inserted.push(p.meta.inserted.get(k).copied().unwrap_or(false));
            } else {
                inserted.push(true);
            }
            u.set_row(r, &p.u.row(last));
        }
        let mut np = Participant::new(p.id.clone(), rows.iter().map(|r| r.0).collect(), y, u);
        for (r, &(_, src)) in rows.iter().enumerate() {
            if let Some(k) = src {
                for j in 0..n_obs {
                    np.missing[(r, j)] = p.missing[(k, j)];
                }
            }
        }
        np.meta = p.meta.clone();
        np.meta.inserted = inserted;
        *q = np;
    }
    Ok(out)
}

/// A time covariate appended to (or replacing) an input column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeCoding {
    /// Ping index `1..=T` within each participant.
    LinearT,
    /// 1 on the listed weekdays (0 = Monday). `start_weekday` overrides the
    /// participants' declared study-start weekday.
    WeekendDummy {
        days: Vec<u8>,
        #[serde(default)]
        start_weekday: Option<u8>,
    },
    /// Hour of day in `[0, 24)`.
    ClockTime,
    /// Hours since that day's wake time; `wake_times[id][d]` is the clock
    /// time of waking on study day `d`.
    TimeSinceWaking { wake_times: BTreeMap<String, Vec<f64>> },
}

impl TimeCoding {
    pub fn column_name(&self) -> &'static str {
        match self {
            TimeCoding::LinearT => "linear_t",
            TimeCoding::WeekendDummy { .. } => "weekend",
            TimeCoding::ClockTime => "clock_time",
            TimeCoding::TimeSinceWaking { .. } => "time_since_waking",
        }
    }

    fn values(&self, p: &Participant) -> Result<Vec<f64>> {
        let t = &p.timestamps;
        Ok(match self {
            TimeCoding::LinearT => (1..=t.len()).map(|i| i as f64).collect(),
            TimeCoding::WeekendDummy { days, start_weekday } => {
                let start = start_weekday.unwrap_or(p.meta.study_start_weekday);
                t.iter().map(|&x| if days.contains(&weekday(x, start)) { 1.0 } else { 0.0 }).collect()
            }
            TimeCoding::ClockTime => t.iter().map(|x| x.rem_euclid(HOURS_PER_DAY)).collect(),
            TimeCoding::TimeSinceWaking { wake_times } => {
                let wakes = wake_times.get(&p.id).ok_or_else(|| Error::MissingWakeTimes(p.id.clone()))?;
                t.iter()
                    .map(|&x| {
                        let day = (x / HOURS_PER_DAY).floor();
                        let at = |d: f64| -> Result<f64> {
                            let w = wakes
                                .get(d as usize)
                                .filter(|_| d >= 0.0)
                                .ok_or_else(|| Error::MissingWakeTimes(format!("{} day {d}", p.id)))?;
                            Ok(x - (d * HOURS_PER_DAY + w))
                        };
                        let v = at(day)?;
                        if v < 0.0 && day >= 1.0 { at(day - 1.0) } else { Ok(v) }
                    })
                    .collect::<Result<_>>()?
            }
        })
    }
}

/// Adds one input column per coding. A coding whose column already exists
/// overwrites it.
pub fn encode_time_covariates(data: &EmaDataset, codings: &[TimeCoding]) -> Result<EmaDataset> {
    let mut out = data.clone();
    for coding in codings {
        let name = coding.column_name();
        let slot = out.input_names.iter().position(|n| n == name);
        for p in out.participants.iter_mut() {
            let vals = coding.values(p)?;
            let col = nalgebra::DVector::from_vec(vals);
            match slot {
                Some(j) => p.u.set_column(j, &col),
                None => {
                    let k = p.u.ncols();
                    p.u = std::mem::replace(&mut p.u, DMatrix::zeros(0, 0)).insert_column(k, 0.0);
                    p.u.set_column(k, &col);
                }
            }
        }
        if slot.is_none() {
            out.input_names.push(name.to_string());
        }
    }
    Ok(out)
}
