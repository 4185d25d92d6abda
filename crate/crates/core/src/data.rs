//! In-memory EMA dataset: per-participant timestamps, observations with a
//! missing mask, and exogenous inputs.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulate::PingSchedule;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParticipantMeta {
    /// Seed that generated this participant, when simulated.
    pub seed: Option<u64>,
    /// Weekday of hour 0 (0 = Monday).
    pub study_start_weekday: u8,
    /// Rows inserted by night-gap augmentation.
    pub inserted: Vec<bool>,
}

/// One participant's series. Time is in hours since midnight of the study's
/// first day; `y` is `T × n_obs`, `u` is `T × n_inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Participant {
    pub id: String,
    pub timestamps: Vec<f64>,
    pub y: DMatrix<f64>,
    pub missing: DMatrix<bool>,
    pub u: DMatrix<f64>,
    pub meta: ParticipantMeta,
}

impl Participant {
    /// Builds a participant; NaN cells in `y` are marked missing.
    pub fn new(id: impl Into<String>, timestamps: Vec<f64>, y: DMatrix<f64>, u: DMatrix<f64>) -> Self {
        let missing = y.map(f64::is_nan);
        let t = timestamps.len();
        Self {
            id: id.into(),
            timestamps,
            y,
            missing,
            u,
            meta: ParticipantMeta { inserted: vec![false; t], ..Default::default() },
        }
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn is_observed(&self, t: usize, j: usize) -> bool {
        !self.missing[(t, j)]
    }

    pub fn observed_channels(&self, t: usize) -> Vec<usize> {
        (0..self.y.ncols()).filter(|&j| self.is_observed(t, j)).collect()
    }

    pub fn n_observed(&self) -> usize {
        self.missing.iter().filter(|m| !**m).count()
    }

    pub fn set_missing(&mut self, t: usize, j: usize) {
        self.missing[(t, j)] = true;
        self.y[(t, j)] = f64::NAN;
    }

    pub fn check(&self) -> Result<()> {
        let t = self.len();
        if self.y.nrows() != t || self.missing.nrows() != t || self.u.nrows() != t {
            return Err(Error::InvalidInput(format!("participant {}: row counts disagree", self.id)));
        }
        if self.y.shape() != self.missing.shape() {
            return Err(Error::InvalidInput(format!("participant {}: mask shape differs from Y", self.id)));
        }
        if let Some(i) = self.timestamps.windows(2).position(|w| !(w[0] < w[1])) {
            return Err(Error::NonMonotoneTime { participant: self.id.clone(), line: i + 2 });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmaDataset {
    pub channel_names: Vec<String>,
    pub input_names: Vec<String>,
    pub participants: Vec<Participant>,
    pub schedule: Option<PingSchedule>,
}

impl EmaDataset {
    pub fn new(channel_names: Vec<String>, input_names: Vec<String>, participants: Vec<Participant>) -> Self {
        Self { channel_names, input_names, participants, schedule: None }
    }

    pub fn n_obs(&self) -> usize {
        self.channel_names.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.input_names.len()
    }

    /// Count of observed scalar cells across participants.
    pub fn n_observed(&self) -> usize {
        self.participants.iter().map(Participant::n_observed).sum()
    }

    pub fn missing_fraction(&self) -> f64 {
        let total: usize = self.participants.iter().map(|p| p.missing.len()).sum();
        if total == 0 {
            return 0.0;
        }
        1.0 - self.n_observed() as f64 / total as f64
    }

    pub fn check(&self) -> Result<()> {
        for p in &self.participants {
            p.check()?;
            if p.y.ncols() != self.n_obs() || p.u.ncols() != self.n_inputs() {
                return Err(Error::InvalidInput(format!("participant {}: column counts disagree with names", p.id)));
            }
        }
        Ok(())
    }

    /// Default names `y1..`, `u1..`.
    pub fn default_names(n_obs: usize, n_inputs: usize) -> (Vec<String>, Vec<String>) {
        (
            (1..=n_obs).map(|i| format!("y{i}")).collect(),
            (1..=n_inputs).map(|i| format!("u{i}")).collect(),
        )
    }
}
