use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::kalman::{check_series, Transitions};
use super::FilterResult;
use crate::data::Participant;
use crate::error::{Error, Result};
use crate::linalg::psd_factor;
use crate::measurement::channel_log_pmf;
use crate::model::ModelSpec;
use crate::rng;

pub const MIN_PARTICLES: usize = 100;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Cholesky of Θ restricted to an observed Gaussian pattern.
struct GaussBlock {
    channels: Vec<usize>,
    chol_l: DMatrix<f64>,
    logdet: f64,
}

fn gauss_block(spec: &ModelSpec, channels: Vec<usize>, ping: usize) -> Result<GaussBlock> {
    let d = channels.len();
    let theta = DMatrix::from_fn(d, d, |i, j| spec.theta[(channels[i], channels[j])]);
    let chol = theta.cholesky().ok_or(Error::SingularInnovation { ping, cond: f64::INFINITY })?;
    let l = chol.l();
    let logdet = l.diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    Ok(GaussBlock { channels, chol_l: l, logdet })
}

fn weighted_moments(particles: &[f64], weights: &[f64], n: usize) -> (DVector<f64>, DMatrix<f64>) {
    let mut mean = DVector::zeros(n);
    for (i, w) in weights.iter().enumerate() {
        for s in 0..n {
            mean[s] += w * particles[i * n + s];
        }
    }
    let mut cov = DMatrix::zeros(n, n);
    for (i, w) in weights.iter().enumerate() {
        for a in 0..n {
            let da = particles[i * n + a] - mean[a];
            for b in 0..=a {
                cov[(a, b)] += w * da * (particles[i * n + b] - mean[b]);
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            cov[(b, a)] = cov[(a, b)];
        }
    }
    (mean, cov)
}

fn systematic_resample(particles: &[f64], weights: &[f64], n: usize, rng: &mut rng::Rng) -> Vec<f64> {
    let count = weights.len();
    let step = 1.0 / count as f64;
    let mut position = rng.random::<f64>() * step;
    let mut out = Vec::with_capacity(particles.len());
    let mut cumulative = weights[0];
    let mut i = 0;
    for _ in 0..count {
        while position > cumulative && i + 1 < count {
            i += 1;
            cumulative += weights[i];
        }
        out.extend_from_slice(&particles[i * n..(i + 1) * n]);
        position += step;
    }
    out
}

/// Bootstrap particle filter for any mix of measurement families.
///
/// Particles move through the state equation, are weighted by the product of
/// the observed channels' likelihoods (missing channels contribute 1), and
/// are resampled systematically when the effective sample size drops below
/// half the particle count. The log-likelihood accumulates the log of the
/// weighted mean incremental weight.
pub fn particle_filter(spec: &ModelSpec, p: &Participant, n_particles: usize, seed: u64) -> Result<FilterResult> {
    if n_particles < MIN_PARTICLES {
        return Err(Error::ParticlesTooFew(n_particles));
    }
    check_series(spec, p)?;
    let n = spec.n_states;
    let t_len = p.len();
    let mut rng = rng::rng_from(seed);
    let mut transitions = Transitions::new(spec);
    let mut blocks: HashMap<Vec<usize>, GaussBlock> = HashMap::new();
    let mut sigma_factors: HashMap<u64, DMatrix<f64>> = HashMap::new();
    let gaussian: Vec<usize> = spec.gaussian_channel_indices();

    let mut res = FilterResult::with_capacity(t_len, p);
    let mut particles = vec![0.0; n_particles * n];
    let init_factor = psd_factor(&spec.initial_cov);
    let mut z = vec![0.0; n];
    for i in 0..n_particles {
        z.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
        for a in 0..n {
            let mut v = spec.initial_mean[a];
            for b in 0..n {
                v += init_factor[(a, b)] * z[b];
            }
            particles[i * n + a] = v;
        }
    }
    let mut weights = vec![1.0 / n_particles as f64; n_particles];
    let mut log_g = vec![0.0; n_particles];
    let mut scratch = vec![0.0; n_particles * n];

    for k in 0..t_len {
        if k > 0 {
            let dt = p.timestamps[k] - p.timestamps[k - 1];
            let (a, g, sigma) = transitions.get(dt)?.clone();
            let key = if spec.time_mode == crate::model::TimeMode::Discrete { 0 } else { dt.to_bits() };
            let factor = sigma_factors.entry(key).or_insert_with(|| psd_factor(&sigma)).clone();
            let drift = &g * p.u.row(k - 1).transpose();
            for i in 0..n_particles {
                z.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
                for r in 0..n {
                    let mut v = drift[r];
                    for c in 0..n {
                        v += a[(r, c)] * particles[i * n + c] + factor[(r, c)] * z[c];
                    }
                    scratch[i * n + r] = v;
                }
            }
            std::mem::swap(&mut particles, &mut scratch);
        }
        let (pm, pc) = weighted_moments(&particles, &weights, n);
        res.predicted_mean.push(pm);
        res.predicted_cov.push(pc);

        let obs = p.observed_channels(k);
        if obs.len() < spec.n_obs {
            res.missing_handled += 1;
        }
        if obs.is_empty() {
            res.loglik_contrib.push(0.0);
            let (fm, fc) = weighted_moments(&particles, &weights, n);
            res.filtered_mean.push(fm);
            res.filtered_cov.push(fc);
            continue;
        }
        let obs_gauss: Vec<usize> = obs.iter().copied().filter(|j| gaussian.contains(j)).collect();
        let block = if obs_gauss.is_empty() {
            None
        } else {
            if !blocks.contains_key(&obs_gauss) {
                blocks.insert(obs_gauss.clone(), gauss_block(spec, obs_gauss.clone(), k)?);
            }
            Some(&blocks[&obs_gauss])
        };
        let others: Vec<usize> = obs.iter().copied().filter(|j| !gaussian.contains(j)).collect();

        let mut resid = DVector::zeros(block.map_or(0, |b| b.channels.len()));
        for i in 0..n_particles {
            let x = &particles[i * n..(i + 1) * n];
            let mut lg = 0.0;
            if let Some(b) = block {
                for (r, &j) in b.channels.iter().enumerate() {
                    let pred: f64 = (0..n).map(|s| spec.h[(j, s)] * x[s]).sum();
                    resid[r] = p.y[(k, j)] - pred;
                }
                let sol = b.chol_l.solve_lower_triangular(&resid).expect("triangular solve");
                lg += -0.5 * (b.channels.len() as f64 * LN_2PI + b.logdet + sol.norm_squared());
            }
            for &j in &others {
                let ch = &spec.channels[j];
                lg += channel_log_pmf(ch, x[ch.state_index], p.y[(k, j)]);
            }
            log_g[i] = lg;
        }

        // log Σ W_i g_i, computed stably
        let max = weights
            .iter()
            .zip(&log_g)
            .filter(|(w, _)| **w > 0.0)
            .map(|(_, l)| *l)
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::DegenerateWeights(k));
        }
        let total: f64 = weights.iter().zip(&log_g).map(|(w, l)| w * (l - max).exp()).sum();
        let contrib = max + total.ln();
        for (w, l) in weights.iter_mut().zip(&log_g) {
            *w *= (l - max).exp() / total;
        }
        res.loglik_contrib.push(contrib);
        res.log_likelihood += contrib;

        let (fm, fc) = weighted_moments(&particles, &weights, n);
        res.filtered_mean.push(fm);
        res.filtered_cov.push(fc);

        let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        if ess < n_particles as f64 / 2.0 {
            particles = systematic_resample(&particles, &weights, n, &mut rng);
            weights.iter_mut().for_each(|w| *w = 1.0 / n_particles as f64);
        }
    }
    Ok(res)
}
