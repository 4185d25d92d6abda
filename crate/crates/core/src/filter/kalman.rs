use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::{FilterResult, SmoothResult};
use crate::data::Participant;
use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::model::{self, ModelSpec, TimeMode};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const MAX_CONDITION: f64 = 1e12;

/// Transition `(A, G, Σ)` applied between consecutive pings.
pub(crate) type Transition = (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>);

/// Per-gap transitions: the model itself in discrete mode, the exact
/// discretization over each gap in continuous mode.
pub(crate) struct Transitions<'a> {
    spec: &'a ModelSpec,
    cache: HashMap<u64, Transition>,
}

impl<'a> Transitions<'a> {
    pub(crate) fn new(spec: &'a ModelSpec) -> Self {
        Self { spec, cache: HashMap::new() }
    }

    pub(crate) fn get(&mut self, dt: f64) -> Result<&Transition> {
        let key = match self.spec.time_mode {
            TimeMode::Discrete => 0,
            TimeMode::Continuous => {
                if !(dt > 0.0) {
                    return Err(Error::InvalidInput(format!("non-positive gap {dt} between pings")));
                }
                dt.to_bits()
            }
        };
        if !self.cache.contains_key(&key) {
            let tr = match self.spec.time_mode {
                TimeMode::Discrete => (self.spec.a.clone(), self.spec.g.clone(), self.spec.sigma.clone()),
                TimeMode::Continuous => model::discretize_parts(&self.spec.a, &self.spec.g, &self.spec.sigma, dt)?,
            };
            self.cache.insert(key, tr);
        }
        Ok(&self.cache[&key])
    }
}

pub(crate) fn check_series(spec: &ModelSpec, p: &Participant) -> Result<()> {
    p.check()?;
    if p.is_empty() {
        return Err(Error::InvalidInput(format!("participant {} has no pings", p.id)));
    }
    if p.y.ncols() != spec.n_obs || p.u.ncols() != spec.n_inputs {
        return Err(Error::InvalidInput(format!(
            "participant {} has {} channels and {} inputs; model expects {} and {}",
            p.id,
            p.y.ncols(),
            p.u.ncols(),
            spec.n_obs,
            spec.n_inputs
        )));
    }
    Ok(())
}

/// Outcome of one measurement update.
pub struct Update {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub log_likelihood: f64,
}

/// Kalman update with the observed rows only: `h` and `theta` are already
/// restricted to the observed channels and `y` holds their values.
pub fn kalman_update(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    h: &DMatrix<f64>,
    theta: &DMatrix<f64>,
    y: &DVector<f64>,
    ping: usize,
) -> Result<Update> {
    let d = y.len();
    if d == 0 {
        return Ok(Update { mean: mean.clone(), cov: cov.clone(), log_likelihood: 0.0 });
    }
    let innov = y - h * mean;
    let s = symmetrize(&(h * cov * h.transpose() + theta));
    let cond = if d == 1 {
        if s[(0, 0)] > 0.0 { 1.0 } else { f64::INFINITY }
    } else {
        let ev = s.clone().symmetric_eigenvalues();
        let (lo, hi) = ev.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v.abs())));
        if lo > 0.0 { hi / lo } else { f64::INFINITY }
    };
    if !(cond <= MAX_CONDITION) {
        return Err(Error::SingularInnovation { ping, cond });
    }
    let chol = s.clone().cholesky().ok_or(Error::SingularInnovation { ping, cond: f64::INFINITY })?;
    let logdet: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let s_inv_innov = chol.solve(&innov);
    let quad = innov.dot(&s_inv_innov);
    let log_likelihood = -0.5 * (d as f64 * LN_2PI + logdet + quad);

    let ph_t = cov * h.transpose();
    let gain = chol.solve(&ph_t.transpose()).transpose();
    let new_mean = mean + &gain * innov;
    let n = mean.len();
    let i_kh = DMatrix::<f64>::identity(n, n) - &gain * h;
    let new_cov = symmetrize(&(&i_kh * cov * i_kh.transpose() + &gain * theta * gain.transpose()));
    Ok(Update { mean: new_mean, cov: new_cov, log_likelihood })
}

/// Filter run plus the transitions it used, kept for smoothing.
pub(crate) struct KalmanRun {
    pub result: FilterResult,
    pub transitions: Vec<DMatrix<f64>>,
}

pub(crate) fn run_kalman(spec: &ModelSpec, p: &Participant) -> Result<KalmanRun> {
    if let Some(j) = spec.channels.iter().position(|c| !c.is_gaussian()) {
        return Err(Error::NonGaussianChannel(j));
    }
    check_series(spec, p)?;
    let t_len = p.len();
    let mut transitions_cache = Transitions::new(spec);
    let mut res = FilterResult::with_capacity(t_len, p);
    let mut transitions = Vec::with_capacity(t_len.saturating_sub(1));

    let mut mean = spec.initial_mean.clone();
    let mut cov = spec.initial_cov.clone();
    for k in 0..t_len {
        let obs = p.observed_channels(k);
        if obs.len() < spec.n_obs {
            res.missing_handled += 1;
        }
        let h = spec.h.select_rows(&obs);
        let theta = DMatrix::from_fn(obs.len(), obs.len(), |i, j| spec.theta[(obs[i], obs[j])]);
        let y = DVector::from_iterator(obs.len(), obs.iter().map(|&j| p.y[(k, j)]));
        let upd = kalman_update(&mean, &cov, &h, &theta, &y, k)?;

        res.predicted_mean.push(mean.clone());
        res.predicted_cov.push(cov.clone());
        res.loglik_contrib.push(upd.log_likelihood);
        res.log_likelihood += upd.log_likelihood;

        if k + 1 < t_len {
            let (a, g, sigma) = transitions_cache.get(p.timestamps[k + 1] - p.timestamps[k])?;
            mean = a * &upd.mean + g * p.u.row(k).transpose();
            cov = symmetrize(&(a * &upd.cov * a.transpose() + sigma));
            transitions.push(a.clone());
        }
        res.filtered_mean.push(upd.mean);
        res.filtered_cov.push(upd.cov);
    }
    if !res.log_likelihood.is_finite() {
        return Err(Error::NonFinite("Kalman log-likelihood".into()));
    }
    Ok(KalmanRun { result: res, transitions })
}

/// Kalman filter for a discrete-time model. Missing channels are dropped from
/// each update; a fully missing ping skips the update.
pub fn kalman_filter(spec: &ModelSpec, p: &Participant) -> Result<FilterResult> {
    if spec.time_mode != TimeMode::Discrete {
        return Err(Error::InvalidInput("kalman_filter needs a discrete model; use kalman_filter_ct".into()));
    }
    Ok(run_kalman(spec, p)?.result)
}

/// Kalman filter for a continuous-time model on arbitrary ping gaps.
pub fn kalman_filter_ct(spec: &ModelSpec, p: &Participant) -> Result<FilterResult> {
    if spec.time_mode != TimeMode::Continuous {
        return Err(Error::InvalidInput("kalman_filter_ct needs a continuous model".into()));
    }
    Ok(run_kalman(spec, p)?.result)
}

/// Fixed-interval (Rauch–Tung–Striebel) smoother for either time mode.
pub fn kalman_smooth(spec: &ModelSpec, p: &Participant) -> Result<SmoothResult> {
    let run = run_kalman(spec, p)?;
    let f = &run.result;
    let t_len = f.len();
    let mut smoothed_mean = f.filtered_mean.clone();
    let mut smoothed_cov = f.filtered_cov.clone();
    let mut lag_one_cov = vec![DMatrix::zeros(spec.n_states, spec.n_states); t_len.saturating_sub(1)];
    for k in (0..t_len.saturating_sub(1)).rev() {
        let a = &run.transitions[k];
        let pred_cov = &f.predicted_cov[k + 1];
        let chol = pred_cov.clone().cholesky();
        // J = P_f Aᵀ P_pred⁻¹
        let cross = &f.filtered_cov[k] * a.transpose();
        let gain = match chol {
            Some(c) => c.solve(&cross.transpose()).transpose(),
            None => {
                let pinv = pred_cov
                    .clone()
                    .pseudo_inverse(1e-12)
                    .map_err(|e| Error::NonFinite(e.to_string()))?;
                &cross * pinv
            }
        };
        let mean = &f.filtered_mean[k] + &gain * (&smoothed_mean[k + 1] - &f.predicted_mean[k + 1]);
        let cov = symmetrize(&(&f.filtered_cov[k] + &gain * (&smoothed_cov[k + 1] - pred_cov) * gain.transpose()));
        lag_one_cov[k] = &smoothed_cov[k + 1] * gain.transpose();
        smoothed_mean[k] = mean;
        smoothed_cov[k] = cov;
    }
    Ok(SmoothResult {
        timestamps: f.timestamps.clone(),
        smoothed_mean,
        smoothed_cov,
        lag_one_cov,
        log_likelihood: f.log_likelihood,
    })
}
