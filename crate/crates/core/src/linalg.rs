//! Dense matrix functions used by the model layer: exponential, principal
//! logarithm and square root, discrete Lyapunov solve, and PSD helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Padé(13) coefficients for scaling and squaring.
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// Largest 1-norm for which the degree-13 approximant is accurate to unit roundoff.
const THETA13: f64 = 5.371_920_351_148_152;

pub fn norm1(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Matrix exponential by scaling and squaring with a Padé(13) approximant.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    if !all_finite(a) {
        return Err(Error::NonFinite("expm argument".into()));
    }
    if n == 0 {
        return Ok(a.clone());
    }
    let norm = norm1(a);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = a * 2f64.powi(-s);
    let b = &PADE13;
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = &a * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::NonFinite("singular Padé denominator in expm".into()))?;
    for _ in 0..s {
        r = &r * &r;
    }
    if !all_finite(&r) {
        return Err(Error::NonFinite("matrix exponential overflowed".into()));
    }
    Ok(r)
}

/// Eigenvalues as (re, im) pairs.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<(f64, f64)> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|c| (c.re, c.im))
        .collect()
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a)
        .into_iter()
        .map(|(re, im)| re.hypot(im))
        .fold(0.0, f64::max)
}

/// Fails with `NoPrincipalLog` when an eigenvalue is real and non-positive.
fn check_principal(a: &DMatrix<f64>) -> Result<()> {
    let scale = norm1(a).max(1.0);
    for (re, im) in eigenvalues(a) {
        if im.abs() <= 1e-12 * scale && re <= 1e-14 * scale {
            return Err(Error::NoPrincipalLog(re));
        }
    }
    Ok(())
}

/// Principal square root via the Denman–Beavers iteration.
pub fn sqrtm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_principal(a)?;
    sqrtm_unchecked(a)
}

fn sqrtm_unchecked(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = DMatrix::<f64>::identity(n, n);
    for _ in 0..100 {
        let y_inv = y
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NonFinite("singular iterate in sqrtm".into()))?;
        let z_inv = z
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NonFinite("singular iterate in sqrtm".into()))?;
        let y_next = (&y + z_inv) * 0.5;
        let z_next = (&z + y_inv) * 0.5;
        let delta = norm1(&(&y_next - &y));
        y = y_next;
        z = z_next;
        if delta <= 1e-15 * norm1(&y).max(1e-300) {
            break;
        }
    }
    if !all_finite(&y) {
        return Err(Error::NonFinite("sqrtm diverged".into()));
    }
    Ok(y)
}

/// Gauss–Legendre nodes and weights mapped onto [0, 1].
fn gauss_legendre01(m: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push(((1.0 - x) * 0.5, w * 0.5));
    }
    out
}

/// Principal matrix logarithm by inverse scaling and squaring.
///
/// Square roots are taken until the argument is within 0.25 of the identity,
/// then `log(I + E) = ∫₀¹ E (I + sE)⁻¹ ds` is evaluated by Gauss–Legendre
/// quadrature.
pub fn logm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    assert!(a.is_square(), "logm needs a square matrix");
    if !all_finite(a) {
        return Err(Error::NonFinite("logm argument".into()));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(a.clone());
    }
    check_principal(a)?;
    let ident = DMatrix::<f64>::identity(n, n);
    let mut x = a.clone();
    let mut k = 0;
    while norm1(&(&x - &ident)) > 0.25 {
        x = sqrtm_unchecked(&x)?;
        k += 1;
        if k > 64 {
            return Err(Error::NonFinite("logm square-root phase did not converge".into()));
        }
    }
    let e = &x - &ident;
    let mut log = DMatrix::<f64>::zeros(n, n);
    for (s, w) in gauss_legendre01(12) {
        let m = &ident + &e * s;
        let term = m
            .lu()
            .solve(&e)
            .ok_or_else(|| Error::NonFinite("singular quadrature term in logm".into()))?;
        log += term * w;
    }
    Ok(log * 2f64.powi(k))
}

/// Solves `P = A P Aᵀ + Q` through the vectorized linear system.
pub fn solve_discrete_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let kron = a.kronecker(a);
    let lhs = DMatrix::<f64>::identity(n * n, n * n) - kron;
    let rhs = DVector::from_column_slice(q.as_slice());
    let sol = lhs.lu().solve(&rhs)?;
    Some(symmetrize(&DMatrix::from_column_slice(n, n, sol.as_slice())))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-10 * scale {
                return false;
            }
        }
    }
    true
}

/// Eigenvalue ≥ −1e−10·trace counts as PSD.
pub fn is_psd(m: &DMatrix<f64>) -> bool {
    if m.nrows() == 0 {
        return true;
    }
    if !is_symmetric(m) || !all_finite(m) {
        return false;
    }
    let tol = -1e-10 * m.trace().abs();
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .all(|&ev| ev >= tol)
}

/// A factor `F` with `F Fᵀ = m` that tolerates singular PSD input.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return m.clone();
    }
    if let Some(ch) = m.clone().cholesky() {
        return ch.l();
    }
    let eig = symmetrize(m).symmetric_eigen();
    let mut f = eig.eigenvectors.clone();
    for (j, ev) in eig.eigenvalues.iter().enumerate() {
        let s = ev.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    f
}

/// Lower-triangular factor of a PSD matrix; zero pivots give zero columns.
pub fn semidefinite_cholesky(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    let scale = m.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 1e-13 * scale {
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    l
}
