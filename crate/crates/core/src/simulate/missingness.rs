//! Missingness mechanisms applied to a complete dataset.
//!
//! Non-MCAR mechanisms mask a cell with probability
//! `logistic(b0 + slope · z)`, where `z` is the standardized driving value
//! (MAR: another channel at the same ping; MNAR: the cell itself; ATMAR: the
//! same channel `lag` pings earlier; TMAR: a 0/1 indicator of falling inside
//! a clock-time window). The intercept `b0` is found by bisection so that the
//! expected marginal missing rate over the targeted cells equals `rate`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::EmaDataset;
use crate::error::{Error, Result};
use crate::measurement::logistic;
use crate::rng;
use crate::simulate::schedule::HOURS_PER_DAY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mechanism {
    Mcar,
    Mar,
    Mnar,
    Tmar,
    Atmar,
}

fn default_slope() -> f64 {
    1.0
}

fn default_lag() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissingnessSpec {
    pub mechanism: Mechanism,
    pub rate: f64,
    /// MAR conditioning channel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driver: Option<usize>,
    #[serde(default = "default_slope")]
    pub slope: f64,
    /// TMAR clock-time windows `[start, end)`; `start > end` wraps midnight.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub windows: Vec<[f64; 2]>,
    /// TMAR: fixed masking probability inside the windows; the outside
    /// probability is then solved for the target rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_prob: Option<f64>,
    #[serde(default = "default_lag")]
    pub lag: usize,
    /// Channels subject to masking (default: all, except the MAR driver).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<usize>>,
}

impl MissingnessSpec {
    pub fn new(mechanism: Mechanism, rate: f64) -> Self {
        Self {
            mechanism,
            rate,
            driver: None,
            slope: 1.0,
            windows: Vec::new(),
            window_prob: None,
            lag: 1,
            targets: None,
        }
    }

    pub fn mcar(rate: f64) -> Self {
        Self::new(Mechanism::Mcar, rate)
    }
}

pub fn in_clock_window(t: f64, windows: &[[f64; 2]]) -> bool {
    let clock = t.rem_euclid(HOURS_PER_DAY);
    windows.iter().any(|w| {
        if w[0] <= w[1] {
            clock >= w[0] && clock < w[1]
        } else {
            clock >= w[0] || clock < w[1]
        }
    })
}

/// (participant, ping, channel, covariate) for each cell the rule may mask.
type Cell = (usize, usize, usize, f64);

fn channel_stats(data: &EmaDataset, j: usize) -> (f64, f64) {
    let vals: Vec<f64> = data
        .participants
        .iter()
        .flat_map(|p| (0..p.len()).filter(move |&t| p.is_observed(t, j)).map(move |t| p.y[(t, j)]))
        .collect();
    if vals.is_empty() {
        return (0.0, 1.0);
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, if var > 0.0 { var.sqrt() } else { 1.0 })
}

fn calibrate_intercept(cells: &[Cell], slope: f64, rate: f64, n_total: usize) -> Result<f64> {
    let expected = |b0: f64| cells.iter().map(|c| logistic(b0 + slope * c.3)).sum::<f64>() / n_total as f64;
    let (mut lo, mut hi) = (-60.0, 60.0);
    if expected(lo) > rate || expected(hi) < rate {
        return Err(Error::CalibrationFailed(format!("target rate {rate} not reachable")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let b0 = 0.5 * (lo + hi);
    if (expected(b0) - rate).abs() > 1e-6 {
        return Err(Error::CalibrationFailed(format!("bisection stalled at rate {}", expected(b0))));
    }
    Ok(b0)
}

/// Returns a copy of `data` with additional cells masked.
pub fn inject_missingness(data: &EmaDataset, miss: &MissingnessSpec, seed: u64) -> Result<EmaDataset> {
    let n_obs = data.n_obs();
    let rate_ok = match miss.mechanism {
        Mechanism::Mcar => (0.0..1.0).contains(&miss.rate),
        _ => miss.rate > 0.0 && miss.rate < 1.0,
    };
    if !rate_ok {
        return Err(Error::InvalidInput(format!("missingness rate {} out of range", miss.rate)));
    }
    if let Some(d) = miss.driver {
        if d >= n_obs {
            return Err(Error::InvalidInput(format!("driver channel {d} out of range")));
        }
    }
    let targets: Vec<usize> = match &miss.targets {
        Some(t) => {
            if t.iter().any(|&j| j >= n_obs) {
                return Err(Error::InvalidInput("target channel out of range".into()));
            }
            t.clone()
        }
        None => (0..n_obs).filter(|&j| Some(j) != miss.driver || miss.mechanism != Mechanism::Mar).collect(),
    };
    let mut out = data.clone();
    if miss.mechanism == Mechanism::Mcar && miss.rate == 0.0 {
        return Ok(out);
    }

    // Cells still observed and eligible for masking.
    let mut cells: Vec<Cell> = Vec::new();
    let mut n_total = 0usize;
    let stats: Vec<(f64, f64)> = (0..n_obs).map(|j| channel_stats(data, j)).collect();
    for (pi, p) in data.participants.iter().enumerate() {
        for t in 0..p.len() {
            for &j in &targets {
                if !p.is_observed(t, j) {
                    continue;
                }
                n_total += 1;
                let z = match miss.mechanism {
                    Mechanism::Mcar => 0.0,
                    Mechanism::Mar => {
                        let d = miss
                            .driver
                            .ok_or_else(|| Error::InvalidInput("MAR needs a driver channel".into()))?;
                        if p.is_observed(t, d) { (p.y[(t, d)] - stats[d].0) / stats[d].1 } else { 0.0 }
                    }
                    Mechanism::Mnar => (p.y[(t, j)] - stats[j].0) / stats[j].1,
                    Mechanism::Tmar => {
                        if in_clock_window(p.timestamps[t], &miss.windows) { 1.0 } else { 0.0 }
                    }
                    Mechanism::Atmar => {
                        if miss.lag == 0 {
                            return Err(Error::InvalidInput("ATMAR lag must be positive".into()));
                        }
                        if t < miss.lag {
                            continue;
                        }
                        let prev = data.participants[pi].y[(t - miss.lag, j)];
                        if prev.is_nan() { 0.0 } else { (prev - stats[j].0) / stats[j].1 }
                    }
                };
                cells.push((pi, t, j, z));
            }
        }
    }
    if n_total == 0 {
        return Ok(out);
    }

    let probs: Vec<f64> = match miss.mechanism {
        Mechanism::Mcar => vec![miss.rate; cells.len()],
        Mechanism::Tmar if miss.window_prob.is_some() => {
            let w = miss.window_prob.unwrap();
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::InvalidInput("window_prob must lie in [0,1]".into()));
            }
            let n_in = cells.iter().filter(|c| c.3 > 0.5).count() as f64;
            let n_out = cells.len() as f64 - n_in;
            let q = if n_out > 0.0 { (miss.rate * n_total as f64 - w * n_in) / n_out } else { 0.0 };
            if !(-1e-12..=1.0 + 1e-12).contains(&q) {
                return Err(Error::CalibrationFailed(format!(
                    "window probability {w} is incompatible with target rate {}",
                    miss.rate
                )));
            }
            let q = q.clamp(0.0, 1.0);
            cells.iter().map(|c| if c.3 > 0.5 { w } else { q }).collect()
        }
        _ => {
            let b0 = calibrate_intercept(&cells, miss.slope, miss.rate, n_total)?;
            cells.iter().map(|c| logistic(b0 + miss.slope * c.3)).collect()
        }
    };

    // One stream per participant keeps results independent of cell order.
    let mut rngs: Vec<rng::Rng> = (0..data.participants.len()).map(|i| rng::sub_rng(seed, i as u64)).collect();
    for (c, p) in cells.iter().zip(probs) {
        let draw: f64 = rngs[c.0].random();
        if draw < p {
            out.participants[c.0].set_missing(c.1, c.2);
        }
    }
    Ok(out)
}
