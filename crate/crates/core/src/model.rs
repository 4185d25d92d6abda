//! State-space model specification.
//!
//! ```text
//! x[t+1] = A x[t] + G u[t] + ε[t],   ε ~ N(0, Σ)
//! y[t]   = H x[t] + ν[t],            ν ~ N(0, Θ)   (Gaussian channels)
//! ```
//!
//! In continuous mode `A` is the drift of `dx = (A x + G u) dt + dW`, with
//! `Σ` the diffusion covariance per unit time.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Diffuse prior variance used for non-stationary models.
pub const DIFFUSE_VARIANCE: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeMode {
    Discrete,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    Poisson,
    GradedResponse,
    BernoulliLogistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    #[default]
    Identity,
    Log,
}

fn one() -> f64 {
    1.0
}

/// How one observed variable relates to the latent state.
///
/// Gaussian channels read their row of `H`; all other families are driven by
/// the single state at `state_index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementChannel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub family: Family,
    #[serde(default)]
    pub state_index: usize,
    /// Poisson rate multiplier.
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub link: Link,
    #[serde(default = "one")]
    pub discrimination: f64,
    #[serde(default)]
    pub thresholds: Vec<f64>,
    /// Number of ordinal categories; 0 means "infer from thresholds".
    #[serde(default)]
    pub categories: usize,
}

impl MeasurementChannel {
    pub fn gaussian() -> Self {
        Self {
            name: None,
            family: Family::Gaussian,
            state_index: 0,
            scale: 1.0,
            link: Link::Identity,
            discrimination: 1.0,
            thresholds: Vec::new(),
            categories: 0,
        }
    }

    pub fn poisson(state_index: usize, scale: f64, link: Link) -> Self {
        Self {
            family: Family::Poisson,
            state_index,
            scale,
            link,
            ..Self::gaussian()
        }
    }

    pub fn graded_response(state_index: usize, discrimination: f64, thresholds: Vec<f64>) -> Self {
        let categories = thresholds.len() + 1;
        Self {
            family: Family::GradedResponse,
            state_index,
            discrimination,
            thresholds,
            categories,
            ..Self::gaussian()
        }
    }

    pub fn bernoulli_logistic(state_index: usize, discrimination: f64, difficulty: f64) -> Self {
        Self {
            family: Family::BernoulliLogistic,
            state_index,
            discrimination,
            thresholds: vec![difficulty],
            categories: 2,
            ..Self::gaussian()
        }
    }

    pub fn is_gaussian(&self) -> bool {
        self.family == Family::Gaussian
    }

    pub fn n_categories(&self) -> usize {
        if self.categories == 0 {
            self.thresholds.len() + 1
        } else {
            self.categories
        }
    }
}

/// Full parameterization of a state-space model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpecFile", into = "ModelSpecFile")]
pub struct ModelSpec {
    pub n_states: usize,
    pub n_obs: usize,
    pub n_inputs: usize,
    pub a: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub theta: DMatrix<f64>,
    pub channels: Vec<MeasurementChannel>,
    pub initial_mean: DVector<f64>,
    pub initial_cov: DMatrix<f64>,
    pub time_mode: TimeMode,
    pub random_walk_states: BTreeSet<usize>,
}

impl ModelSpec {
    /// All-Gaussian discrete model without inputs; initial state set to the
    /// default prior.
    pub fn gaussian(a: DMatrix<f64>, h: DMatrix<f64>, sigma: DMatrix<f64>, theta: DMatrix<f64>) -> Self {
        let n_states = a.nrows();
        let n_obs = h.nrows();
        let mut spec = Self {
            n_states,
            n_obs,
            n_inputs: 0,
            a,
            g: DMatrix::zeros(n_states, 0),
            h,
            sigma,
            theta,
            channels: vec![MeasurementChannel::gaussian(); n_obs],
            initial_mean: DVector::zeros(n_states),
            initial_cov: DMatrix::identity(n_states, n_states),
            time_mode: TimeMode::Discrete,
            random_walk_states: BTreeSet::new(),
        };
        spec.reset_initial_state();
        spec
    }

    /// Scalar AR(1) state with one Gaussian indicator.
    pub fn scalar(a: f64, sigma2: f64, theta: f64) -> Self {
        Self::gaussian(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, sigma2),
            DMatrix::from_element(1, 1, theta),
        )
    }

    pub fn with_inputs(mut self, g: DMatrix<f64>) -> Self {
        self.n_inputs = g.ncols();
        self.g = g;
        self
    }

    pub fn with_time_mode(mut self, mode: TimeMode) -> Self {
        self.time_mode = mode;
        self
    }

    pub fn with_initial(mut self, mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        self.initial_mean = mean;
        self.initial_cov = cov;
        self
    }

    /// Stationary moments when stable, otherwise zero mean with a diffuse
    /// covariance.
    pub fn default_initial_state(&self) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n_states;
        let stationary = match self.time_mode {
            TimeMode::Discrete => stationary_moments(self).ok(),
            TimeMode::Continuous => discretize(self, 1.0)
                .ok()
                .and_then(|d| stationary_moments(&d).ok()),
        };
        stationary.unwrap_or_else(|| {
            (DVector::zeros(n), DMatrix::identity(n, n) * DIFFUSE_VARIANCE)
        })
    }

    pub fn reset_initial_state(&mut self) {
        let (m, p) = self.default_initial_state();
        self.initial_mean = m;
        self.initial_cov = p;
    }

    pub fn all_gaussian(&self) -> bool {
        self.channels.iter().all(MeasurementChannel::is_gaussian)
    }

    pub fn gaussian_channel_indices(&self) -> Vec<usize> {
        (0..self.n_obs).filter(|&j| self.channels[j].is_gaussian()).collect()
    }

    /// Pins the listed states to a unit-root row of `A` (a zero drift row in
    /// continuous mode) and records them.
    pub fn with_random_walk(mut self, states: &[usize]) -> Self {
        for &i in states {
            self.a.row_mut(i).fill(0.0);
            if self.time_mode == TimeMode::Discrete {
                self.a[(i, i)] = 1.0;
            }
            self.random_walk_states.insert(i);
        }
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

type Rows = Vec<Vec<f64>>;

/// On-disk layout of a [`ModelSpec`]. Matrices are row-major arrays of rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpecFile {
    pub n_states: usize,
    pub n_obs: usize,
    #[serde(default)]
    pub n_inputs: usize,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "G", default)]
    pub g: Rows,
    #[serde(rename = "H")]
    pub h: Rows,
    #[serde(rename = "Sigma")]
    pub sigma: Rows,
    #[serde(rename = "Theta")]
    pub theta: Rows,
    pub channels: Vec<MeasurementChannel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_cov: Option<Rows>,
    pub time_mode: TimeMode,
    #[serde(default)]
    pub random_walk_states: BTreeSet<usize>,
}

pub(crate) fn matrix_from_rows(name: &str, rows: &Rows, nrows: usize, ncols: usize) -> std::result::Result<DMatrix<f64>, String> {
    if ncols == 0 && (rows.is_empty() || rows.iter().all(Vec::is_empty)) {
        return Ok(DMatrix::zeros(nrows, 0));
    }
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(format!("{name} must be {nrows}x{ncols}"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl TryFrom<ModelSpecFile> for ModelSpec {
    type Error = String;

    fn try_from(f: ModelSpecFile) -> std::result::Result<Self, String> {
        let (n, m, k) = (f.n_states, f.n_obs, f.n_inputs);
        if n == 0 || m == 0 {
            return Err("n_states and n_obs must be at least 1".into());
        }
        if f.channels.len() != m {
            return Err(format!("channels must have length n_obs = {m}"));
        }
        let mut spec = ModelSpec {
            n_states: n,
            n_obs: m,
            n_inputs: k,
            a: matrix_from_rows("A", &f.a, n, n)?,
            g: matrix_from_rows("G", &f.g, n, k)?,
            h: matrix_from_rows("H", &f.h, m, n)?,
            sigma: matrix_from_rows("Sigma", &f.sigma, n, n)?,
            theta: matrix_from_rows("Theta", &f.theta, m, m)?,
            channels: f.channels,
            initial_mean: DVector::zeros(n),
            initial_cov: DMatrix::zeros(n, n),
            time_mode: f.time_mode,
            random_walk_states: f.random_walk_states,
        };
        let (dm, dp) = spec.default_initial_state();
        spec.initial_mean = match f.initial_mean {
            Some(v) if v.len() == n => DVector::from_vec(v),
            Some(_) => return Err(format!("initial_mean must have length {n}")),
            None => dm,
        };
        spec.initial_cov = match f.initial_cov {
            Some(rows) => matrix_from_rows("initial_cov", &rows, n, n)?,
            None => dp,
        };
        Ok(spec)
    }
}

impl From<ModelSpec> for ModelSpecFile {
    fn from(s: ModelSpec) -> Self {
        ModelSpecFile {
            n_states: s.n_states,
            n_obs: s.n_obs,
            n_inputs: s.n_inputs,
            a: matrix_to_rows(&s.a),
            g: matrix_to_rows(&s.g),
            h: matrix_to_rows(&s.h),
            sigma: matrix_to_rows(&s.sigma),
            theta: matrix_to_rows(&s.theta),
            channels: s.channels,
            initial_mean: Some(s.initial_mean.iter().copied().collect()),
            initial_cov: Some(matrix_to_rows(&s.initial_cov)),
            time_mode: s.time_mode,
            random_walk_states: s.random_walk_states,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn has_error(&self, code: &str) -> bool {
        self.errors.iter().any(|i| i.code == code)
    }

    pub fn has_warning(&self, code: &str) -> bool {
        self.warnings.iter().any(|i| i.code == code)
    }

    fn error(&mut self, code: &str, message: impl Into<String>) {
        self.errors.push(Issue { code: code.into(), message: message.into() });
    }

    fn warn(&mut self, code: &str, message: impl Into<String>) {
        self.warnings.push(Issue { code: code.into(), message: message.into() });
    }

    /// Converts a failing report into an `InvalidModel` error.
    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            let msg = self
                .errors
                .iter()
                .map(|i| format!("{}: {}", i.code, i.message))
                .collect::<Vec<_>>()
                .join("; ");
            Err(Error::InvalidModel(msg))
        }
    }
}

fn sub_matrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

pub fn validate_model(spec: &ModelSpec) -> ValidationReport {
    let mut r = ValidationReport::default();
    let (n, m, k) = (spec.n_states, spec.n_obs, spec.n_inputs);
    let dims = [
        ("A", &spec.a, n, n),
        ("G", &spec.g, n, k),
        ("H", &spec.h, m, n),
        ("Sigma", &spec.sigma, n, n),
        ("Theta", &spec.theta, m, m),
        ("initial_cov", &spec.initial_cov, n, n),
    ];
    let mut dims_ok = n > 0 && m > 0;
    for (name, mat, rows, cols) in dims {
        if mat.nrows() != rows || mat.ncols() != cols {
            r.error("DIM_MISMATCH", format!("{name} is {}x{}, expected {rows}x{cols}", mat.nrows(), mat.ncols()));
            dims_ok = false;
        } else if mat.iter().any(|v| !v.is_finite()) {
            r.error("NON_FINITE", format!("{name} has non-finite entries"));
            dims_ok = false;
        }
    }
    if spec.initial_mean.len() != n {
        r.error("DIM_MISMATCH", "initial_mean length differs from n_states");
        dims_ok = false;
    }
    if spec.channels.len() != m {
        r.error("DIM_MISMATCH", "channels length differs from n_obs");
        dims_ok = false;
    }
    if !dims_ok {
        return r;
    }

    if !linalg::is_psd(&spec.sigma) {
        r.error("NON_PSD_SIGMA", "Sigma is not symmetric positive semidefinite");
    }
    let gauss = spec.gaussian_channel_indices();
    if !linalg::is_psd(&sub_matrix(&spec.theta, &gauss)) {
        r.error("NON_PSD_THETA", "Theta (Gaussian block) is not symmetric positive semidefinite");
    }
    if !linalg::is_psd(&spec.initial_cov) {
        r.error("NON_PSD_INITIAL_COV", "initial_cov is not symmetric positive semidefinite");
    }

    for (j, ch) in spec.channels.iter().enumerate() {
        if !ch.is_gaussian() && ch.state_index >= n {
            r.error("BAD_STATE_INDEX", format!("channel {j} state_index {} out of range", ch.state_index));
        }
        match ch.family {
            Family::Gaussian => {}
            Family::Poisson => {
                if !(ch.scale > 0.0) {
                    r.error("BAD_SCALE", format!("channel {j} Poisson scale must be > 0"));
                }
            }
            Family::GradedResponse | Family::BernoulliLogistic => {
                if !(ch.discrimination > 0.0) {
                    r.error("BAD_DISCRIMINATION", format!("channel {j} discrimination must be > 0"));
                }
                if ch.thresholds.windows(2).any(|w| !(w[0] < w[1])) || ch.thresholds.iter().any(|t| !t.is_finite()) {
                    r.error("BAD_THRESHOLDS", format!("channel {j} thresholds must be finite and strictly increasing"));
                }
                let expected = if ch.family == Family::BernoulliLogistic { 1 } else { ch.n_categories().saturating_sub(1) };
                if ch.n_categories() < 2 || ch.thresholds.len() != expected
                    || (ch.family == Family::BernoulliLogistic && ch.n_categories() != 2)
                {
                    r.error("BAD_CATEGORIES", format!("channel {j} needs categories >= 2 and categories - 1 thresholds"));
                }
            }
        }
    }

    for &i in &spec.random_walk_states {
        if i >= n {
            r.error("BAD_RANDOM_WALK_STATE", format!("random walk state {i} out of range"));
            continue;
        }
        let diag_target = if spec.time_mode == TimeMode::Discrete { 1.0 } else { 0.0 };
        let row_ok = (0..n).all(|j| spec.a[(i, j)] == if i == j { diag_target } else { 0.0 });
        if !row_ok {
            r.error(
                "RANDOM_WALK_ROW",
                format!("row {i} of A must be the unit-root row for a random-walk state"),
            );
        }
    }

    let free: Vec<usize> = (0..n).filter(|i| !spec.random_walk_states.contains(i)).collect();
    if !free.is_empty() {
        let a = sub_matrix(&spec.a, &free);
        match spec.time_mode {
            TimeMode::Discrete => {
                let rho = linalg::spectral_radius(&a);
                if rho >= 1.0 {
                    r.warn("UNSTABLE_DYNAMICS", format!("spectral radius of A is {rho:.6} >= 1"));
                }
            }
            TimeMode::Continuous => {
                let re = linalg::eigenvalues(&a).into_iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
                if re >= 0.0 {
                    r.warn("UNSTABLE_DYNAMICS", format!("drift has eigenvalue with real part {re:.6} >= 0"));
                }
            }
        }
    }
    r
}

fn require_mode(spec: &ModelSpec, mode: TimeMode) -> Result<()> {
    if spec.time_mode != mode {
        return Err(Error::InvalidInput(format!("operation requires a {mode:?} model")));
    }
    Ok(())
}

/// Exact discretization of the drift, input and diffusion over a gap `dt`
/// (zero-order hold on `u`). Returns `(A_d, G_d, Sigma_d)`.
pub fn discretize_parts(
    a: &DMatrix<f64>,
    g: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    dt: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let k = g.ncols();

    // Van Loan: exp([[-A, Σ], [0, Aᵀ]] dt) = [[·, F12], [0, F22]] with
    // A_d = F22ᵀ and Σ_d = F22ᵀ F12.
    let mut vl = DMatrix::<f64>::zeros(2 * n, 2 * n);
    vl.view_mut((0, 0), (n, n)).copy_from(&(-a * dt));
    vl.view_mut((0, n), (n, n)).copy_from(&(sigma * dt));
    vl.view_mut((n, n), (n, n)).copy_from(&(a.transpose() * dt));
    let e = linalg::expm(&vl)?;
    let a_d = e.view((n, n), (n, n)).transpose();
    let sigma_d = linalg::symmetrize(&(&a_d * e.view((0, n), (n, n))));

    let g_d = if k == 0 {
        DMatrix::zeros(n, 0)
    } else {
        let mut blk = DMatrix::<f64>::zeros(n + k, n + k);
        blk.view_mut((0, 0), (n, n)).copy_from(&(a * dt));
        blk.view_mut((0, n), (n, k)).copy_from(&(g * dt));
        linalg::expm(&blk)?.view((0, n), (n, k)).into_owned()
    };
    if a_d.iter().chain(sigma_d.iter()).chain(g_d.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("discretization overflowed".into()));
    }
    Ok((a_d, g_d, sigma_d))
}

/// Converts a continuous-time model to the discrete model over step `dt`.
pub fn discretize(spec: &ModelSpec, dt: f64) -> Result<ModelSpec> {
    require_mode(spec, TimeMode::Continuous)?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let (a, g, sigma) = discretize_parts(&spec.a, &spec.g, &spec.sigma, dt)?;
    let mut out = spec.clone();
    out.a = a;
    out.g = g;
    out.sigma = sigma;
    out.time_mode = TimeMode::Discrete;
    for &i in &spec.random_walk_states {
        out.a.row_mut(i).fill(0.0);
        out.a[(i, i)] = 1.0;
    }
    Ok(out)
}

/// Inverse of [`discretize`]: `A_c = log(A_d) / dt`, with `G` and `Σ` mapped
/// back through the same integrals.
pub fn to_continuous(spec: &ModelSpec, dt: f64) -> Result<ModelSpec> {
    require_mode(spec, TimeMode::Discrete)?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let n = spec.n_states;
    let a_c = linalg::logm(&spec.a)? / dt;

    // Σ_d = M vec(Σ_c) with M = ∫₀^dt exp((A⊕A) s) ds.
    let ident = DMatrix::<f64>::identity(n, n);
    let ksum = a_c.kronecker(&ident) + ident.kronecker(&a_c);
    let integral = |mat: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let d = mat.nrows();
        let mut blk = DMatrix::<f64>::zeros(2 * d, 2 * d);
        blk.view_mut((0, 0), (d, d)).copy_from(&(mat * dt));
        blk.view_mut((0, d), (d, d)).copy_from(&(DMatrix::<f64>::identity(d, d) * dt));
        Ok(linalg::expm(&blk)?.view((0, d), (d, d)).into_owned())
    };
    let m = integral(&ksum)?;
    let vec_sigma = DVector::from_column_slice(spec.sigma.as_slice());
    let sol = m
        .lu()
        .solve(&vec_sigma)
        .ok_or_else(|| Error::NonFinite("singular noise map in to_continuous".into()))?;
    let sigma_c = linalg::symmetrize(&DMatrix::from_column_slice(n, n, sol.as_slice()));

    let g_c = if spec.n_inputs == 0 {
        DMatrix::zeros(n, 0)
    } else {
        integral(&a_c)?
            .lu()
            .solve(&spec.g)
            .ok_or_else(|| Error::NonFinite("singular input map in to_continuous".into()))?
    };

    let mut out = spec.clone();
    out.a = a_c;
    out.g = g_c;
    out.sigma = sigma_c;
    out.time_mode = TimeMode::Continuous;
    for &i in &spec.random_walk_states {
        out.a.row_mut(i).fill(0.0);
    }
    Ok(out)
}

/// Stationary mean and covariance of a stable discrete model with `u ≡ 0`.
pub fn stationary_moments(spec: &ModelSpec) -> Result<(DVector<f64>, DMatrix<f64>)> {
    require_mode(spec, TimeMode::Discrete)?;
    let rho = linalg::spectral_radius(&spec.a);
    if rho >= 1.0 || !spec.random_walk_states.is_empty() {
        return Err(Error::NotStationary(rho));
    }
    let cov = linalg::solve_discrete_lyapunov(&spec.a, &spec.sigma)
        .ok_or(Error::NotStationary(rho))?;
    Ok((DVector::zeros(spec.n_states), cov))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingAdvice {
    Adequate,
    Inadequate,
}

/// Sampling must be strictly faster than half the process period.
pub fn nyquist_check(process_period: f64, sampling_interval: f64) -> Result<SamplingAdvice> {
    if !(process_period > 0.0) || !(sampling_interval > 0.0) {
        return Err(Error::InvalidInput("period and interval must be positive".into()));
    }
    Ok(if sampling_interval < process_period / 2.0 {
        SamplingAdvice::Adequate
    } else {
        SamplingAdvice::Inadequate
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, v)
    }

    fn two_state() -> ModelSpec {
        ModelSpec::gaussian(
            m(2, 2, &[0.5, 0.2, 0.0, 0.5]),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
        )
    }

    #[test]
    fn valid_two_state_model_has_no_errors() {
        let r = validate_model(&two_state());
        assert!(r.errors.is_empty(), "{r:?}");
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn indefinite_sigma_is_rejected() {
        let mut s = two_state();
        s.sigma = m(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(validate_model(&s).has_error("NON_PSD_SIGMA"));
    }

    #[test]
    fn explosive_root_only_warns() {
        let s = ModelSpec::scalar(1.05, 1.0, 1.0);
        let r = validate_model(&s);
        assert!(r.errors.is_empty());
        assert!(r.has_warning("UNSTABLE_DYNAMICS"));
    }

    #[test]
    fn random_walk_row_must_be_unit() {
        let mut s = ModelSpec::scalar(0.5, 1.0, 1.0).with_random_walk(&[0]);
        assert!(validate_model(&s).is_ok());
        assert!(validate_model(&s).warnings.is_empty());
        s.a[(0, 0)] = 0.9;
        assert!(validate_model(&s).has_error("RANDOM_WALK_ROW"));
    }

    #[test]
    fn channel_invariants() {
        let mut s = ModelSpec::scalar(0.5, 1.0, 1.0);
        s.channels[0] = MeasurementChannel::graded_response(0, 1.0, vec![0.0, -1.0]);
        assert!(validate_model(&s).has_error("BAD_THRESHOLDS"));
        s.channels[0] = MeasurementChannel::graded_response(0, -1.0, vec![-1.0, 0.0]);
        assert!(validate_model(&s).has_error("BAD_DISCRIMINATION"));
        s.channels[0] = MeasurementChannel::poisson(0, 0.0, Link::Identity);
        assert!(validate_model(&s).has_error("BAD_SCALE"));
        s.channels[0] = MeasurementChannel::poisson(3, 1.0, Link::Log);
        assert!(validate_model(&s).has_error("BAD_STATE_INDEX"));
    }

    #[test]
    fn validation_is_pure() {
        let mut s = two_state();
        s.sigma = m(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let before = s.clone();
        assert_eq!(validate_model(&s), validate_model(&s));
        assert_eq!(s, before);
    }

    #[test]
    fn zero_drift_discretizes_to_identity() {
        let s = ModelSpec::gaussian(DMatrix::zeros(2, 2), DMatrix::identity(2, 2), DMatrix::identity(2, 2), DMatrix::identity(2, 2))
            .with_time_mode(TimeMode::Continuous);
        let d = discretize(&s, 3.7).unwrap();
        assert_abs_diff_eq!(d.a, DMatrix::identity(2, 2), epsilon = 1e-15);
        // Brownian motion: Σ_d = Σ_c dt
        assert_abs_diff_eq!(d.sigma, DMatrix::identity(2, 2) * 3.7, epsilon = 1e-12);
    }

    #[test]
    fn continuous_example_maps_to_paper_matrix() {
        let ln2 = std::f64::consts::LN_2;
        let s = ModelSpec::gaussian(m(2, 2, &[-ln2, 0.4, 0.0, -ln2]), DMatrix::identity(2, 2), DMatrix::identity(2, 2), DMatrix::identity(2, 2))
            .with_time_mode(TimeMode::Continuous);
        let d = discretize(&s, 1.0).unwrap();
        assert_abs_diff_eq!(d.a, m(2, 2, &[0.5, 0.2, 0.0, 0.5]), epsilon = 1e-6);
    }

    #[test]
    fn to_continuous_inverts_and_rejects() {
        let c = to_continuous(&two_state(), 1.0).unwrap();
        assert_abs_diff_eq!(c.a, m(2, 2, &[-0.69, 0.4, 0.0, -0.69]), epsilon = 5e-3);
        let back = discretize(&c, 1.0).unwrap();
        assert_abs_diff_eq!(back.a, two_state().a, epsilon = 1e-8);
        assert_abs_diff_eq!(back.sigma, two_state().sigma, epsilon = 1e-8);

        let ident = ModelSpec::gaussian(DMatrix::identity(2, 2), DMatrix::identity(2, 2), DMatrix::identity(2, 2), DMatrix::identity(2, 2));
        assert_abs_diff_eq!(to_continuous(&ident, 1.0).unwrap().a, DMatrix::zeros(2, 2), epsilon = 1e-14);

        let neg = ModelSpec::scalar(-0.5, 1.0, 1.0);
        assert!(matches!(to_continuous(&neg, 1.0), Err(Error::NoPrincipalLog(_))));
    }

    #[test]
    fn input_map_round_trips() {
        let s = two_state().with_inputs(m(2, 1, &[1.0, -0.5]));
        let c = to_continuous(&s, 2.0).unwrap();
        let d = discretize(&c, 2.0).unwrap();
        assert_abs_diff_eq!(d.g, s.g, epsilon = 1e-10);
    }

    #[test]
    fn stationary_examples() {
        let (_, p) = stationary_moments(&ModelSpec::scalar(0.0, 1.0, 1.0)).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], 1.0, epsilon = 1e-14);
        let (mean, p) = stationary_moments(&ModelSpec::scalar(0.5, 1.0, 1.0)).unwrap();
        assert_eq!(mean[0], 0.0);
        assert_abs_diff_eq!(p[(0, 0)], 4.0 / 3.0, epsilon = 1e-14);
        let rw = ModelSpec::scalar(1.0, 1.0, 1.0);
        assert!(matches!(stationary_moments(&rw), Err(Error::NotStationary(_))));
    }

    #[test]
    fn default_initial_is_diffuse_for_unit_roots() {
        let rw = ModelSpec::scalar(1.0, 1.0, 1.0);
        assert_eq!(rw.initial_cov[(0, 0)], DIFFUSE_VARIANCE);
        let ar = ModelSpec::scalar(0.5, 1.0, 1.0);
        assert_abs_diff_eq!(ar.initial_cov[(0, 0)], 4.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn nyquist_examples() {
        assert_eq!(nyquist_check(24.0, 12.0).unwrap(), SamplingAdvice::Inadequate);
        assert_eq!(nyquist_check(24.0, 6.0).unwrap(), SamplingAdvice::Adequate);
        assert_eq!(nyquist_check(7.0 * 24.0, 24.0).unwrap(), SamplingAdvice::Adequate);
        assert!(nyquist_check(0.0, 1.0).is_err());
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let s = two_state().with_inputs(m(2, 1, &[1.0, 0.0]));
        let text = s.to_json();
        assert!(text.contains("\"Sigma\"") && text.contains("\"random_walk_states\""));
        assert_eq!(ModelSpec::from_json(&text).unwrap(), s);

        let bad = text.replacen("\"n_obs\"", "\"bogus\": 1, \"n_obs\"", 1);
        assert!(matches!(ModelSpec::from_json(&bad), Err(Error::Parse { .. })));
    }

    #[test]
    fn missing_initial_state_gets_default() {
        let text = r#"{"n_states":1,"n_obs":1,"n_inputs":0,"A":[[0.5]],"G":[],"H":[[1]],
            "Sigma":[[1]],"Theta":[[1]],"channels":[{"family":"gaussian"}],"time_mode":"discrete"}"#;
        let s = ModelSpec::from_json(text).unwrap();
        assert_abs_diff_eq!(s.initial_cov[(0, 0)], 4.0 / 3.0, epsilon = 1e-12);
    }
}
