//! BFGS minimization with central-difference gradients.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimOptions {
    pub max_iter: usize,
    /// Convergence threshold on the gradient's Euclidean norm.
    pub tol: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub line_search_ok: bool,
}

/// Central differences with step `1e-6 · max(1, |x_i|)`.
pub fn numeric_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-6 * x[i].abs().max(1.0);
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn finite(g: &[f64]) -> bool {
    g.iter().all(|v| v.is_finite())
}

/// Armijo backtracking along `dir`; returns the accepted step and value.
fn line_search(f: &dyn Fn(&[f64]) -> f64, x: &[f64], fx: f64, slope: f64, dir: &DVector<f64>) -> Option<(f64, f64)> {
    let mut step = 1.0;
    let mut trial = vec![0.0; x.len()];
    for _ in 0..60 {
        for i in 0..x.len() {
            trial[i] = x[i] + step * dir[i];
        }
        let ft = f(&trial);
        if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
            return Some((step, ft));
        }
        step *= 0.5;
    }
    None
}

/// Minimizes `f` from `x0`. Non-finite objective values are treated as
/// rejected trial points.
pub fn bfgs(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], opts: OptimOptions) -> OptimResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut g = DVector::from_vec(numeric_gradient(f, &x));
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut line_search_ok = true;
    let mut iterations = 0;
    let mut fresh = true;

    if !fx.is_finite() || !finite(g.as_slice()) {
        return OptimResult {
            x,
            value: fx,
            gradient_norm: f64::INFINITY,
            iterations,
            converged: false,
            line_search_ok: false,
        };
    }

    while iterations < opts.max_iter && g.norm() >= opts.tol {
        iterations += 1;
        let mut dir = -(&hinv * &g);
        let mut slope = g.dot(&dir);
        if slope >= 0.0 {
            hinv = DMatrix::identity(n, n);
            dir = -g.clone();
            slope = g.dot(&dir);
            fresh = true;
        }
        let Some((step, fnew)) = line_search(f, &x, fx, slope, &dir) else {
            if fresh {
                line_search_ok = false;
                break;
            }
            hinv = DMatrix::identity(n, n);
            fresh = true;
            continue;
        };
        let s = &dir * step;
        let xnew: Vec<f64> = x.iter().zip(s.iter()).map(|(a, b)| a + b).collect();
        let gnew = DVector::from_vec(numeric_gradient(f, &xnew));
        if !finite(gnew.as_slice()) {
            line_search_ok = false;
            break;
        }
        let y = &gnew - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                hinv *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            hinv += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
            fresh = false;
        }
        let improvement = fx - fnew;
        x = xnew;
        fx = fnew;
        g = gnew;
        if improvement <= 1e-15 * (1.0 + fx.abs()) && s.norm() <= 1e-12 * (1.0 + DVector::from_column_slice(&x).norm()) {
            break;
        }
    }
    let gradient_norm = g.norm();
    OptimResult {
        x,
        value: fx,
        gradient_norm,
        iterations,
        converged: gradient_norm < opts.tol && line_search_ok,
        line_search_ok,
    }
}
