//! Exogenous inputs: deterministic time trends and disturbance codings.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulate::schedule::HOURS_PER_DAY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendKind {
    None,
    /// Ping index `1..=T`.
    Linear,
    /// 1 on the listed weekdays (0 = Monday), else 0.
    Weekend,
    /// 1 inside any of the listed `[start, end)` time intervals (hours).
    CustomDummy,
    /// `sin(2π t / period + phase)` with `t` in hours.
    Sinusoid,
}

/// A trend series mapped into `u` through `coefficients` (length `n_inputs`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrendSpec {
    pub kind: TrendKind,
    pub coefficients: Vec<f64>,
    #[serde(default)]
    pub weekend_days: Vec<u8>,
    #[serde(default)]
    pub intervals: Vec<[f64; 2]>,
    #[serde(default)]
    pub period: Option<f64>,
    #[serde(default)]
    pub phase: f64,
}

impl TrendSpec {
    pub fn linear(coefficients: Vec<f64>) -> Self {
        Self {
            kind: TrendKind::Linear,
            coefficients,
            weekend_days: Vec::new(),
            intervals: Vec::new(),
            period: None,
            phase: 0.0,
        }
    }

    pub fn weekend(coefficients: Vec<f64>, days: Vec<u8>) -> Self {
        Self { kind: TrendKind::Weekend, weekend_days: days, ..Self::linear(coefficients) }
    }

    pub fn sinusoid(coefficients: Vec<f64>, period: f64, phase: f64) -> Self {
        Self { kind: TrendKind::Sinusoid, period: Some(period), phase, ..Self::linear(coefficients) }
    }

    /// Value of the trend at ping `index` (0-based) observed at hour `t`.
    pub fn value(&self, index: usize, t: f64, start_weekday: u8) -> f64 {
        match self.kind {
            TrendKind::None => 0.0,
            TrendKind::Linear => (index + 1) as f64,
            TrendKind::Weekend => {
                let wd = weekday(t, start_weekday);
                if self.weekend_days.contains(&wd) { 1.0 } else { 0.0 }
            }
            TrendKind::CustomDummy => {
                if self.intervals.iter().any(|w| t >= w[0] && t < w[1]) { 1.0 } else { 0.0 }
            }
            TrendKind::Sinusoid => {
                let p = self.period.unwrap_or(HOURS_PER_DAY);
                (2.0 * std::f64::consts::PI * t / p + self.phase).sin()
            }
        }
    }

    pub fn check(&self, n_inputs: usize) -> Result<()> {
        if self.coefficients.len() != n_inputs {
            return Err(Error::InvalidInput(format!(
                "trend has {} coefficients, model has {n_inputs} inputs",
                self.coefficients.len()
            )));
        }
        if self.kind == TrendKind::Sinusoid && !matches!(self.period, Some(p) if p > 0.0) {
            return Err(Error::InvalidInput("sinusoid trend needs a positive period".into()));
        }
        Ok(())
    }
}

/// Weekday of hour `t` given the weekday of hour 0 (0 = Monday).
pub fn weekday(t: f64, start_weekday: u8) -> u8 {
    let day = (t / HOURS_PER_DAY).floor() as i64;
    (day + start_weekday as i64).rem_euclid(7) as u8
}

/// Adds the trend contributions to `u` (rows are pings).
pub fn apply_trends(u: &mut DMatrix<f64>, trends: &[TrendSpec], timestamps: &[f64], start_weekday: u8) -> Result<()> {
    for trend in trends {
        trend.check(u.ncols())?;
        for (i, &t) in timestamps.iter().enumerate() {
            let v = trend.value(i, t, start_weekday);
            if v != 0.0 {
                for (j, c) in trend.coefficients.iter().enumerate() {
                    u[(i, j)] += c * v;
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceCoding {
    /// Affects only the first ping at or after onset.
    Pulse,
    /// Constant for every ping at or after onset.
    Persistent,
    /// `magnitude · decay_ratio^k` at the k-th ping after onset.
    GeometricDecay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceEvent {
    pub onset: f64,
    pub coding: DisturbanceCoding,
    pub magnitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay_ratio: Option<f64>,
    pub input_slot: usize,
}

impl DisturbanceEvent {
    pub fn new(onset: f64, coding: DisturbanceCoding, magnitude: f64, input_slot: usize) -> Self {
        Self { onset, coding, magnitude, decay_ratio: None, input_slot }
    }

    pub fn geometric(onset: f64, magnitude: f64, ratio: f64, input_slot: usize) -> Self {
        Self {
            decay_ratio: Some(ratio),
            ..Self::new(onset, DisturbanceCoding::GeometricDecay, magnitude, input_slot)
        }
    }

    pub fn check(&self, n_inputs: usize) -> Result<()> {
        if self.input_slot >= n_inputs {
            return Err(Error::InvalidInput(format!("disturbance slot {} >= n_inputs {n_inputs}", self.input_slot)));
        }
        match (self.coding, self.decay_ratio) {
            (DisturbanceCoding::GeometricDecay, Some(r)) if r > 0.0 && r < 1.0 => Ok(()),
            (DisturbanceCoding::GeometricDecay, _) => {
                Err(Error::InvalidInput("geometric_decay needs decay_ratio in (0,1)".into()))
            }
            (_, Some(_)) => Err(Error::InvalidInput("decay_ratio is only valid for geometric_decay".into())),
            _ => Ok(()),
        }
    }
}

/// Input columns (`T × n_inputs`) produced by the events; overlapping events
/// on a slot add up.
pub fn encode_disturbance(events: &[DisturbanceEvent], timestamps: &[f64], n_inputs: usize) -> Result<DMatrix<f64>> {
    let mut u = DMatrix::zeros(timestamps.len(), n_inputs);
    for ev in events {
        ev.check(n_inputs)?;
        let Some(first) = timestamps.iter().position(|&t| t >= ev.onset) else {
            continue;
        };
        match ev.coding {
            DisturbanceCoding::Pulse => u[(first, ev.input_slot)] += ev.magnitude,
            DisturbanceCoding::Persistent => {
                for i in first..timestamps.len() {
                    u[(i, ev.input_slot)] += ev.magnitude;
                }
            }
            DisturbanceCoding::GeometricDecay => {
                let r = ev.decay_ratio.unwrap_or(0.5);
                let mut v = ev.magnitude;
                for i in first..timestamps.len() {
                    u[(i, ev.input_slot)] += v;
                    v *= r;
                }
            }
        }
    }
    Ok(u)
}
