//! Maximum-likelihood estimation and model comparison.

mod compare;
mod fit;
pub mod optim;
pub mod params;

pub use compare::{compare_disturbance_codings, compare_templates, comparison_table, ComparisonRow};
pub use fit::{evaluate, fit, log_likelihood, FitMode, FitOptions, FitResult, Likelihood, Template};
pub use optim::OptimOptions;
pub use params::{InitialStatus, MatrixStatus, ParameterMap, Parameterization, Status};

/// `(AIC, BIC)` for a log-likelihood with `k` free parameters and `n`
/// observed measurements.
pub fn information_criteria(log_likelihood: f64, k: usize, n_obs_used: usize) -> (f64, f64) {
    let k = k as f64;
    (2.0 * k - 2.0 * log_likelihood, k * (n_obs_used as f64).ln() - 2.0 * log_likelihood)
}
