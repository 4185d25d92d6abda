//! Observation densities for the non-Gaussian measurement families.

use statrs::function::gamma::ln_gamma;

use crate::model::{Family, Link, MeasurementChannel};

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `P(y > i) = 1 / (1 + exp(-α (x - β_i)))` for each threshold.
pub fn grm_exceedance(x: f64, discrimination: f64, thresholds: &[f64]) -> Vec<f64> {
    thresholds
        .iter()
        .map(|b| logistic(discrimination * (x - b)))
        .collect()
}

/// Category probabilities for categories `1..=K` of a graded-response item.
pub fn grm_category_probs(x: f64, discrimination: f64, thresholds: &[f64]) -> Vec<f64> {
    let exceed = grm_exceedance(x, discrimination, thresholds);
    let k = thresholds.len() + 1;
    (0..k)
        .map(|c| {
            let upper = if c == 0 { 1.0 } else { exceed[c - 1] };
            let lower = if c + 1 == k { 0.0 } else { exceed[c] };
            (upper - lower).max(0.0)
        })
        .collect()
}

/// Poisson rate implied by the driving state value.
pub fn poisson_rate(channel: &MeasurementChannel, x: f64) -> f64 {
    match channel.link {
        Link::Identity => channel.scale * x,
        Link::Log => channel.scale * x.exp(),
    }
}

pub fn poisson_log_pmf(rate: f64, y: f64) -> f64 {
    if rate < 0.0 || !rate.is_finite() {
        return f64::NEG_INFINITY;
    }
    if rate == 0.0 {
        return if y == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    y * rate.ln() - rate - ln_gamma(y + 1.0)
}

/// Log-probability of `y` under a non-Gaussian channel whose driving state is `x`.
///
/// Gaussian channels are handled jointly by the callers because their noise
/// may be correlated; calling this with one returns `NaN`.
pub fn channel_log_pmf(channel: &MeasurementChannel, x: f64, y: f64) -> f64 {
    match channel.family {
        Family::Gaussian => f64::NAN,
        Family::Poisson => poisson_log_pmf(poisson_rate(channel, x), y),
        Family::GradedResponse => {
            let probs = grm_category_probs(x, channel.discrimination, &channel.thresholds);
            let k = y.round() as i64;
            if k < 1 || k as usize > probs.len() || (y - k as f64).abs() > 1e-9 {
                return f64::NEG_INFINITY;
            }
            probs[k as usize - 1].ln()
        }
        Family::BernoulliLogistic => {
            let z = channel.discrimination * (x - channel.thresholds[0]);
            // log σ(z) and log(1 − σ(z)) without cancellation
            let log_p1 = -(1.0 + (-z).exp()).ln();
            let log_p0 = -(1.0 + z.exp()).ln();
            if y == 1.0 {
                if z < -30.0 { z } else { log_p1 }
            } else if y == 0.0 {
                if z > 30.0 { -z } else { log_p0 }
            } else {
                f64::NEG_INFINITY
            }
        }
    }
}
