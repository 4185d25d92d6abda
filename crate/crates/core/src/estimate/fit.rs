use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::information_criteria;
use super::optim::{bfgs, OptimOptions, OptimResult};
use super::params::{ParameterMap, Parameterization};
use crate::data::{EmaDataset, Participant};
use crate::error::{Error, Result};
use crate::filter::{particle_filter, run_kalman};
use crate::model::{validate_model, ModelSpec, TimeMode};
use crate::rng;
use crate::simulate::covariates::{encode_disturbance, DisturbanceEvent};

/// A model to fit: starting/fixed values, which entries are free, and an
/// optional disturbance coding that overwrites the input columns it uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Template {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub model: ModelSpec,
    #[serde(default)]
    pub params: ParameterMap,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub disturbances: Vec<DisturbanceEvent>,
}

impl Template {
    pub fn new(model: ModelSpec, params: ParameterMap) -> Self {
        Self { id: None, model, params, disturbances: Vec::new() }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })
    }

    /// Participants with inputs prepared for this template: disturbance
    /// columns replace the slots they use, missing trailing input columns are
    /// zero-filled.
    pub fn prepare(&self, data: &EmaDataset) -> Result<Vec<Participant>> {
        let k = self.model.n_inputs;
        data.participants
            .iter()
            .map(|p| {
                if p.y.ncols() != self.model.n_obs {
                    return Err(Error::InvalidInput(format!(
                        "data has {} channels, model expects {}",
                        p.y.ncols(),
                        self.model.n_obs
                    )));
                }
                if p.u.ncols() > k {
                    return Err(Error::InvalidInput(format!(
                        "data has {} input columns, model expects {k}",
                        p.u.ncols()
                    )));
                }
                let mut q = p.clone();
                let mut u = DMatrix::zeros(p.len(), k);
                u.columns_mut(0, p.u.ncols()).copy_from(&p.u);
                if !self.disturbances.is_empty() {
                    let coded = encode_disturbance(&self.disturbances, &p.timestamps, k)?;
                    for ev in &self.disturbances {
                        u.set_column(ev.input_slot, &coded.column(ev.input_slot));
                    }
                }
                q.u = u;
                Ok(q)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    Idiographic,
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Likelihood {
    Kalman,
    Particle { n_particles: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub n_restarts: usize,
    pub optim: OptimOptions,
    pub likelihood: Likelihood,
    /// Seed for the perturbed restarts.
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { n_restarts: 5, optim: OptimOptions::default(), likelihood: Likelihood::Kalman, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Participant id for idiographic fits.
    #[serde(default)]
    pub participant: Option<String>,
    pub mode: FitMode,
    pub likelihood: Likelihood,
    #[serde(rename = "model")]
    pub spec_hat: ModelSpec,
    pub log_likelihood: f64,
    pub n_free: usize,
    pub n_obs_used: usize,
    pub aic: f64,
    pub bic: f64,
    pub converged: bool,
    pub n_restarts_used: usize,
    /// Final log-likelihood of each restart (`null` if it never became finite).
    pub restart_log_likelihoods: Vec<Option<f64>>,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Not computed; always `null`.
    pub standard_errors: Option<Vec<f64>>,
}

/// Total log-likelihood of `spec` over `participants`; each participant
/// starts from the model's initial state distribution.
pub fn log_likelihood(spec: &ModelSpec, participants: &[Participant], likelihood: Likelihood) -> Result<f64> {
    let mut total = 0.0;
    for (i, p) in participants.iter().enumerate() {
        total += match likelihood {
            Likelihood::Kalman => run_kalman(spec, p)?.result.log_likelihood,
            Likelihood::Particle { n_particles, seed } => {
                particle_filter(spec, p, n_particles, rng::derive_seed(seed, i as u64))?.log_likelihood
            }
        };
    }
    if !total.is_finite() {
        return Err(Error::NonfiniteLikelihood(format!("total {total}")));
    }
    Ok(total)
}

/// Log-likelihood of a fully specified model over a dataset.
pub fn evaluate(spec: &ModelSpec, data: &EmaDataset, likelihood: Likelihood) -> Result<f64> {
    check_likelihood(spec, likelihood)?;
    log_likelihood(spec, &data.participants, likelihood)
}

fn check_likelihood(spec: &ModelSpec, likelihood: Likelihood) -> Result<()> {
    if likelihood == Likelihood::Kalman && !spec.all_gaussian() {
        return Err(Error::LikelihoodModeMismatch(
            "the Kalman likelihood needs all-Gaussian channels; use the particle likelihood".into(),
        ));
    }
    Ok(())
}

struct ChannelMoments {
    variance: f64,
    autocorrelation: f64,
}

fn channel_moments(participants: &[Participant], j: usize) -> Option<ChannelMoments> {
    let (mut sxx, mut sxy, mut n, mut npairs) = (0.0, 0.0, 0usize, 0usize);
    for p in participants {
        let vals: Vec<f64> = (0..p.len()).filter(|&t| p.is_observed(t, j)).map(|t| p.y[(t, j)]).collect();
        if vals.is_empty() {
            continue;
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        sxx += vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        n += vals.len();
        for t in 1..p.len() {
            if p.is_observed(t, j) && p.is_observed(t - 1, j) {
                sxy += (p.y[(t, j)] - mean) * (p.y[(t - 1, j)] - mean);
                npairs += 1;
            }
        }
    }
    if n < 3 || npairs < 2 || sxx <= 0.0 {
        return None;
    }
    let variance = sxx / n as f64;
    Some(ChannelMoments { variance, autocorrelation: (sxy / npairs as f64) / variance })
}

fn median_gap(participants: &[Participant]) -> f64 {
    let mut gaps: Vec<f64> = participants
        .iter()
        .flat_map(|p| p.timestamps.windows(2).map(|w| w[1] - w[0]))
        .collect();
    if gaps.is_empty() {
        return 1.0;
    }
    gaps.sort_by(f64::total_cmp);
    gaps[gaps.len() / 2]
}

/// Heuristic start: autoregression from each singly-loaded Gaussian
/// indicator's lag-1 autocorrelation, with its variance split evenly between
/// state and measurement noise.
fn heuristic_start(template: &ModelSpec, participants: &[Participant]) -> ModelSpec {
    let mut s = template.clone();
    let sigma_diag = s.sigma.is_identity(0.0) || (0..s.n_states).all(|i| (0..s.n_states).all(|j| i == j || s.sigma[(i, j)] == 0.0));
    let theta_diag = (0..s.n_obs).all(|i| (0..s.n_obs).all(|j| i == j || s.theta[(i, j)] == 0.0));
    let dt = median_gap(participants);
    for i in 0..s.n_states {
        if s.random_walk_states.contains(&i) {
            continue;
        }
        let indicator = (0..s.n_obs).find(|&j| {
            s.channels[j].is_gaussian()
                && s.h[(j, i)] != 0.0
                && (0..s.n_states).all(|c| c == i || s.h[(j, c)] == 0.0)
        });
        let Some(j) = indicator else { continue };
        let Some(m) = channel_moments(participants, j) else { continue };
        let a = m.autocorrelation.clamp(-0.9, 0.9);
        let load = s.h[(j, i)];
        let state_var = 0.5 * m.variance / (load * load);
        match s.time_mode {
            TimeMode::Discrete => {
                s.a[(i, i)] = a;
                if sigma_diag {
                    s.sigma[(i, i)] = (state_var * (1.0 - a * a)).max(1e-3 * state_var);
                }
            }
            TimeMode::Continuous => {
                let drift = a.clamp(0.05, 0.95).ln() / dt;
                s.a[(i, i)] = drift;
                if sigma_diag {
                    s.sigma[(i, i)] = -2.0 * drift * state_var;
                }
            }
        }
        if theta_diag {
            s.theta[(j, j)] = 0.5 * m.variance;
        }
    }
    s
}

fn fit_group(
    param: &Parameterization,
    participants: &[Participant],
    mode: FitMode,
    opts: &FitOptions,
    id: Option<String>,
) -> Result<FitResult> {
    let objective = |theta: &[f64]| -> f64 {
        let spec = param.apply(theta);
        match log_likelihood(&spec, participants, opts.likelihood) {
            Ok(ll) => -ll,
            Err(_) => f64::INFINITY,
        }
    };
    let start = param.point_from(&heuristic_start(param.template(), participants));
    let n_restarts = opts.n_restarts.max(1);
    let starts: Vec<Vec<f64>> = (0..n_restarts)
        .map(|r| {
            if r == 0 {
                return start.clone();
            }
            let mut rng = rng::sub_rng(opts.seed, r as u64);
            let noise = Normal::new(0.0, 0.5).expect("valid normal");
            start.iter().map(|v| v + noise.sample(&mut rng)).collect()
        })
        .collect();
    let runs: Vec<OptimResult> = starts.par_iter().map(|x0| bfgs(&objective, x0, opts.optim)).collect();
    let best = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.value.is_finite())
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)))
        .map(|(_, r)| r)
        .ok_or_else(|| Error::NonfiniteLikelihood("no restart reached a finite likelihood".into()))?;

    let spec_hat = param.apply(&best.x);
    let log_likelihood = -best.value;
    let n_obs_used: usize = participants.iter().map(Participant::n_observed).sum();
    let k = param.n_params();
    let (aic, bic) = information_criteria(log_likelihood, k, n_obs_used.max(1));
    Ok(FitResult {
        participant: id,
        mode,
        likelihood: opts.likelihood,
        spec_hat,
        log_likelihood,
        n_free: k,
        n_obs_used,
        aic,
        bic,
        converged: best.converged,
        n_restarts_used: n_restarts,
        restart_log_likelihoods: runs.iter().map(|r| r.value.is_finite().then_some(-r.value)).collect(),
        gradient_norm: best.gradient_norm,
        iterations: best.iterations,
        seed: opts.seed,
        standard_errors: None,
    })
}

/// Maximum-likelihood fit. Idiographic mode returns one result per
/// participant; pooled mode returns a single result whose likelihood sums
/// over participants, each restarting from the initial state distribution.
pub fn fit(template: &Template, data: &EmaDataset, mode: FitMode, opts: &FitOptions) -> Result<Vec<FitResult>> {
    validate_model(&template.model).into_result()?;
    check_likelihood(&template.model, opts.likelihood)?;
    let param = Parameterization::new(&template.model, &template.params)?;
    if param.n_params() == 0 {
        return Err(Error::NoFreeParams);
    }
    if data.participants.is_empty() || data.participants.iter().all(Participant::is_empty) {
        return Err(Error::InvalidInput("dataset has no pings".into()));
    }
    let participants = template.prepare(data)?;
    match mode {
        FitMode::Pooled => Ok(vec![fit_group(&param, &participants, mode, opts, None)?]),
        FitMode::Idiographic => participants
            .par_iter()
            .map(|p| fit_group(&param, std::slice::from_ref(p), mode, opts, Some(p.id.clone())))
            .collect(),
    }
}
