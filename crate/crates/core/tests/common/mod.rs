//! Shared test helpers: random models and an explicit joint-Gaussian oracle
//! that conditions the full (x, y) covariance directly instead of recursing.
#![allow(dead_code)]

use emastate::rng::{self, Rng};
use emastate::{ModelSpec, Participant};
use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

pub fn normal_matrix(r: usize, c: usize, rng: &mut Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

pub fn random_pd(n: usize, rng: &mut Rng) -> DMatrix<f64> {
    let b = normal_matrix(n, n, rng) * 0.6;
    &b * b.transpose() + DMatrix::identity(n, n) * 0.1
}

/// Random stable discrete model with `n` states, `m` Gaussian channels and
/// `k` inputs; spectral radius at most 0.9.
pub fn random_model(n: usize, m: usize, k: usize, rng: &mut Rng) -> ModelSpec {
    let mut a = normal_matrix(n, n, rng);
    let rho = emastate::linalg::spectral_radius(&a);
    let target: f64 = rng.random_range(0.1..0.9);
    a *= target / rho.max(1e-12);
    let h = normal_matrix(m, n, rng);
    let spec = ModelSpec::gaussian(a, h, random_pd(n, rng), random_pd(m, rng)).with_inputs(normal_matrix(n, k, rng));
    let mean = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
    spec.with_initial(mean, random_pd(n, rng))
}

/// Random observations and inputs on a unit grid; each cell is missing with
/// probability `p_missing`.
pub fn random_series(spec: &ModelSpec, t: usize, p_missing: f64, rng: &mut Rng) -> Participant {
    let mut y = normal_matrix(t, spec.n_obs, rng);
    for v in y.iter_mut() {
        if rng.random::<f64>() < p_missing {
            *v = f64::NAN;
        }
    }
    let u = normal_matrix(t, spec.n_inputs, rng);
    Participant::new("p", (0..t).map(|i| i as f64).collect(), y, u)
}

pub struct Oracle {
    pub log_likelihood: f64,
    pub filtered_mean: Vec<DVector<f64>>,
    pub filtered_cov: Vec<DMatrix<f64>>,
    pub smoothed_mean: Vec<DVector<f64>>,
    pub smoothed_cov: Vec<DMatrix<f64>>,
}

/// Exact moments of a discrete linear-Gaussian model by building the joint
/// distribution of all states and observations.
pub fn joint_gaussian_oracle(spec: &ModelSpec, p: &Participant) -> Oracle {
    let (n, m, t) = (spec.n_states, spec.n_obs, p.len());
    // state means and marginal covariances
    let mut mx = vec![spec.initial_mean.clone()];
    let mut vx = vec![spec.initial_cov.clone()];
    for k in 1..t {
        mx.push(&spec.a * &mx[k - 1] + &spec.g * p.u.row(k - 1).transpose());
        vx.push(&spec.a * &vx[k - 1] * spec.a.transpose() + &spec.sigma);
    }
    let cross = |j: usize, k: usize| -> DMatrix<f64> {
        // Cov(x_j, x_k)
        if j >= k {
            let mut c = vx[k].clone();
            for _ in k..j {
                c = &spec.a * c;
            }
            c
        } else {
            let mut c = vx[j].clone();
            for _ in j..k {
                c = c * spec.a.transpose();
            }
            c
        }
    };
    let dim = t * n + t * m;
    let mut mean = DVector::zeros(dim);
    let mut cov = DMatrix::zeros(dim, dim);
    let xi = |k: usize| k * n;
    let yi = |k: usize| t * n + k * m;
    for j in 0..t {
        mean.rows_mut(xi(j), n).copy_from(&mx[j]);
        mean.rows_mut(yi(j), m).copy_from(&(&spec.h * &mx[j]));
        for k in 0..t {
            let c = cross(j, k);
            cov.view_mut((xi(j), xi(k)), (n, n)).copy_from(&c);
            cov.view_mut((yi(j), xi(k)), (m, n)).copy_from(&(&spec.h * &c));
            cov.view_mut((xi(j), yi(k)), (n, m)).copy_from(&(&c * spec.h.transpose()));
            let mut yy = &spec.h * &c * spec.h.transpose();
            if j == k {
                yy += &spec.theta;
            }
            cov.view_mut((yi(j), yi(k)), (m, m)).copy_from(&yy);
        }
    }
    let observed = |upto: usize| -> Vec<usize> {
        (0..upto)
            .flat_map(|k| (0..m).filter(move |&c| !p.missing[(k, c)]).map(move |c| yi(k) + c))
            .collect()
    };
    let condition = |k: usize, obs: &[usize]| -> (DVector<f64>, DMatrix<f64>) {
        let xs: Vec<usize> = (xi(k)..xi(k) + n).collect();
        let mu_x = mean.select_rows(&xs);
        let c_xx = cov.select_rows(&xs).select_columns(&xs);
        if obs.is_empty() {
            return (mu_x, c_xx);
        }
        let c_xo = cov.select_rows(&xs).select_columns(obs);
        let c_oo = cov.select_rows(obs).select_columns(obs);
        let resid = DVector::from_iterator(obs.len(), obs.iter().map(|&i| {
            let (k, c) = ((i - t * n) / m, (i - t * n) % m);
            p.y[(k, c)] - mean[i]
        }));
        let inv = c_oo.try_inverse().expect("invertible");
        (mu_x + &c_xo * &inv * resid, &c_xx - &c_xo * &inv * c_xo.transpose())
    };
    let all = observed(t);
    let log_likelihood = if all.is_empty() {
        0.0
    } else {
        let c_oo = cov.select_rows(&all).select_columns(&all);
        let resid = DVector::from_iterator(all.len(), all.iter().map(|&i| {
            let (k, c) = ((i - t * n) / m, (i - t * n) % m);
            p.y[(k, c)] - mean[i]
        }));
        let lu = c_oo.clone().lu();
        let det = lu.determinant();
        let quad = resid.dot(&lu.solve(&resid).expect("solvable"));
        -0.5 * (all.len() as f64 * (2.0 * std::f64::consts::PI).ln() + det.ln() + quad)
    };
    let mut o = Oracle {
        log_likelihood,
        filtered_mean: vec![],
        filtered_cov: vec![],
        smoothed_mean: vec![],
        smoothed_cov: vec![],
    };
    for k in 0..t {
        let (fm, fc) = condition(k, &observed(k + 1));
        o.filtered_mean.push(fm);
        o.filtered_cov.push(fc);
        let (sm, sc) = condition(k, &all);
        o.smoothed_mean.push(sm);
        o.smoothed_cov.push(sc);
    }
    o
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

pub fn rng(seed: u64) -> Rng {
    rng::rng_from(seed)
}
