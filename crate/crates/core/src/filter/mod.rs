//! State estimation: Kalman filter and smoother for linear-Gaussian models,
//! bootstrap particle filter for everything else.

mod kalman;
mod particle;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

pub use kalman::{kalman_filter, kalman_filter_ct, kalman_smooth, kalman_update, Update};
pub use particle::{particle_filter, MIN_PARTICLES};

pub(crate) use kalman::run_kalman;

use crate::data::Participant;
use crate::error::Result;
use crate::model::ModelSpec;

/// Per-ping predicted and filtered moments for one participant.
#[derive(Debug, Clone)]
pub struct FilterResult {
    pub timestamps: Vec<f64>,
    pub predicted_mean: Vec<DVector<f64>>,
    pub predicted_cov: Vec<DMatrix<f64>>,
    pub filtered_mean: Vec<DVector<f64>>,
    pub filtered_cov: Vec<DMatrix<f64>>,
    pub loglik_contrib: Vec<f64>,
    pub log_likelihood: f64,
    /// Pings with at least one missing channel.
    pub missing_handled: usize,
    pub missing: DMatrix<bool>,
}

impl FilterResult {
    pub(crate) fn with_capacity(t: usize, p: &Participant) -> Self {
        Self {
            timestamps: p.timestamps.clone(),
            predicted_mean: Vec::with_capacity(t),
            predicted_cov: Vec::with_capacity(t),
            filtered_mean: Vec::with_capacity(t),
            filtered_cov: Vec::with_capacity(t),
            loglik_contrib: Vec::with_capacity(t),
            log_likelihood: 0.0,
            missing_handled: 0,
            missing: p.missing.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct SmoothResult {
    pub timestamps: Vec<f64>,
    pub smoothed_mean: Vec<DVector<f64>>,
    pub smoothed_cov: Vec<DMatrix<f64>>,
    /// `Cov(x_{k+1}, x_k | all data)` for `k = 0..T-1`.
    pub lag_one_cov: Vec<DMatrix<f64>>,
    pub log_likelihood: f64,
}

/// Which filter to run for a participant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterMethod {
    Kalman,
    Particle { n_particles: usize, seed: u64 },
}

pub fn run_filter(spec: &ModelSpec, p: &Participant, method: FilterMethod) -> Result<FilterResult> {
    match method {
        FilterMethod::Kalman => Ok(run_kalman(spec, p)?.result),
        FilterMethod::Particle { n_particles, seed } => particle_filter(spec, p, n_particles, seed),
    }
}

fn header(out: &mut String, n_states: usize, channel_names: &[String], smooth: bool) {
    out.push_str("participant_id,t");
    for s in 0..n_states {
        let _ = write!(out, ",mean.x{}", s + 1);
    }
    for s in 0..n_states {
        let _ = write!(out, ",var.x{}", s + 1);
    }
    if smooth {
        for s in 0..n_states {
            let _ = write!(out, ",smooth_mean.x{}", s + 1);
        }
        for s in 0..n_states {
            let _ = write!(out, ",smooth_var.x{}", s + 1);
        }
    }
    out.push_str(",loglik");
    for name in channel_names {
        let _ = write!(out, ",miss.{name}");
    }
    out.push('\n');
}

/// CSV export of filtered (and optionally smoothed) moments, one row per
/// ping, with a missingness flag per channel.
pub fn export_table(
    rows: &[(String, FilterResult, Option<SmoothResult>)],
    n_states: usize,
    channel_names: &[String],
) -> String {
    let smooth = rows.iter().any(|r| r.2.is_some());
    let mut out = String::new();
    header(&mut out, n_states, channel_names, smooth);
    for (id, f, s) in rows {
        for k in 0..f.len() {
            let _ = write!(out, "{id},{}", f.timestamps[k]);
            for v in f.filtered_mean[k].iter() {
                let _ = write!(out, ",{v}");
            }
            for i in 0..n_states {
                let _ = write!(out, ",{}", f.filtered_cov[k][(i, i)]);
            }
            if smooth {
                match s {
                    Some(s) => {
                        for v in s.smoothed_mean[k].iter() {
                            let _ = write!(out, ",{v}");
                        }
                        for i in 0..n_states {
                            let _ = write!(out, ",{}", s.smoothed_cov[k][(i, i)]);
                        }
                    }
                    None => out.push_str(&",NA".repeat(2 * n_states)),
                }
            }
            let _ = write!(out, ",{}", f.loglik_contrib[k]);
            for j in 0..f.missing.ncols() {
                out.push_str(if f.missing[(k, j)] { ",1" } else { ",0" });
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    fn series(y: &[f64]) -> Participant {
        let t: Vec<f64> = (0..y.len()).map(|i| i as f64).collect();
        Participant::new("p", t, DMatrix::from_column_slice(y.len(), 1, y), DMatrix::zeros(y.len(), 0))
    }

    #[test]
    fn scalar_first_step_matches_hand_computation() {
        let spec = ModelSpec::scalar(0.5, 1.0, 1.0).with_initial(DVector::from_element(1, 0.0), dmatrix![2.0]);
        let f = kalman_filter(&spec, &series(&[1.0])).unwrap();
        // S = 2 + 1, K = 2/3
        assert_relative_eq!(f.filtered_mean[0][0], 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(f.filtered_cov[0][(0, 0)], 2.0 / 3.0, epsilon = 1e-12);
        let ll = -0.5 * ((2.0 * std::f64::consts::PI).ln() + 3f64.ln() + 1.0 / 3.0);
        assert_relative_eq!(f.log_likelihood, ll, epsilon = 1e-12);
    }

    #[test]
    fn fully_missing_ping_skips_update() {
        let spec = ModelSpec::scalar(0.5, 1.0, 1.0);
        let f = kalman_filter(&spec, &series(&[1.0, f64::NAN, 0.3])).unwrap();
        assert_eq!(f.loglik_contrib[1], 0.0);
        assert_eq!(f.filtered_mean[1], f.predicted_mean[1]);
        assert_eq!(f.missing_handled, 1);
    }

    #[test]
    fn singular_innovation_is_reported() {
        let spec = ModelSpec::gaussian(dmatrix![0.5], dmatrix![1.0; 1.0], dmatrix![1.0], DMatrix::zeros(2, 2))
            .with_initial(DVector::zeros(1), DMatrix::zeros(1, 1));
        let p = Participant::new("p", vec![0.0], dmatrix![1.0, 1.0], DMatrix::zeros(1, 0));
        let err = kalman_filter(&spec, &p).unwrap_err();
        assert_eq!(err.code(), "SINGULAR_INNOVATION");
    }

    #[test]
    fn smoother_last_step_equals_filter() {
        let spec = ModelSpec::scalar(0.7, 0.5, 0.3);
        let p = series(&[0.1, -0.4, 0.9, 1.2]);
        let f = kalman_filter(&spec, &p).unwrap();
        let s = kalman_smooth(&spec, &p).unwrap();
        assert_relative_eq!(s.smoothed_mean[3][0], f.filtered_mean[3][0], epsilon = 1e-12);
        assert!(s.smoothed_cov[0][(0, 0)] <= f.filtered_cov[0][(0, 0)] + 1e-12);
    }

    #[test]
    fn particle_filter_rejects_small_swarms_and_is_seeded() {
        let spec = ModelSpec::scalar(0.5, 1.0, 1.0);
        let p = series(&[0.2, 0.5, -0.1]);
        assert_eq!(particle_filter(&spec, &p, 10, 1).unwrap_err().code(), "PARTICLES_TOO_FEW");
        let a = particle_filter(&spec, &p, 500, 9).unwrap();
        let b = particle_filter(&spec, &p, 500, 9).unwrap();
        assert_eq!(a.log_likelihood, b.log_likelihood);
    }

    #[test]
    fn table_has_flags() {
        let spec = ModelSpec::scalar(0.5, 1.0, 1.0);
        let p = series(&[1.0, f64::NAN]);
        let f = kalman_filter(&spec, &p).unwrap();
        let table = export_table(&[("p".into(), f, None)], 1, &["mood".into()]);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0], "participant_id,t,mean.x1,var.x1,loglik,miss.mood");
        assert!(lines[2].ends_with(",1"));
    }
}
