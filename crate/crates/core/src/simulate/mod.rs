//! Synthetic EMA data generation.

pub mod covariates;
pub mod missingness;
pub mod schedule;

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use covariates::{
    apply_trends, encode_disturbance, weekday, DisturbanceCoding, DisturbanceEvent, TrendKind, TrendSpec,
};
pub use missingness::{in_clock_window, inject_missingness, Mechanism, MissingnessSpec};
pub use schedule::{generate_schedule, PingSchedule, ScheduleKind, HOURS_PER_DAY};

use crate::data::{EmaDataset, Participant, ParticipantMeta};
use crate::error::{Error, Result};
use crate::linalg;
use crate::measurement::{grm_exceedance, logistic, poisson_rate};
use crate::model::{self, validate_model, Family, Link, ModelSpec, TimeMode};
use crate::rng::{self, derive_seed};

/// Parameter overrides active from a breakpoint onwards.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeOverride {
    #[serde(default, rename = "A", skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_offset: Option<Vec<f64>>,
}

/// Piecewise-constant regimes. `regimes[0]` applies before the first
/// breakpoint; a regime takes effect at the first ping at or after its
/// breakpoint. Within a regime the state reverts towards `mean_offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeSchedule {
    pub breakpoints: Vec<f64>,
    pub regimes: Vec<RegimeOverride>,
}

impl RegimeSchedule {
    pub fn mean_shifts(breakpoints: Vec<f64>, means: &[f64]) -> Self {
        Self {
            breakpoints,
            regimes: means
                .iter()
                .map(|&m| RegimeOverride { a: None, mean_offset: Some(vec![m]) })
                .collect(),
        }
    }

    pub fn regime_at(&self, t: f64) -> usize {
        self.breakpoints.iter().filter(|&&b| t >= b).count()
    }

    fn check(&self, n_states: usize, horizon: f64) -> Result<()> {
        if self.regimes.len() != self.breakpoints.len() + 1 {
            return Err(Error::InvalidInput("regimes must have one more entry than breakpoints".into()));
        }
        if self.breakpoints.windows(2).any(|w| !(w[0] < w[1]))
            || self.breakpoints.iter().any(|&b| !(0.0..=horizon).contains(&b))
        {
            return Err(Error::InvalidInput("breakpoints must be strictly increasing within the horizon".into()));
        }
        for r in &self.regimes {
            if let Some(a) = &r.a {
                model::matrix_from_rows("regime A", a, n_states, n_states).map_err(Error::InvalidInput)?;
            }
            if matches!(&r.mean_offset, Some(m) if m.len() != n_states) {
                return Err(Error::InvalidInput("regime mean_offset length must equal n_states".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TvpTrajectory {
    Sigmoid,
}

/// Time-varying entry of `A` (simulation only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TvpSchedule {
    pub target: [usize; 2],
    pub trajectory: TvpTrajectory,
    pub start_value: f64,
    pub end_value: f64,
    pub midpoint: f64,
    pub steepness: f64,
}

impl TvpSchedule {
    pub fn value(&self, t: f64) -> f64 {
        match self.trajectory {
            TvpTrajectory::Sigmoid => {
                self.start_value
                    + (self.end_value - self.start_value) * logistic(self.steepness * (t - self.midpoint))
            }
        }
    }
}

fn default_participants() -> usize {
    1
}

/// Everything besides the model needed to generate a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schedule: PingSchedule,
    #[serde(default)]
    pub trends: Vec<TrendSpec>,
    #[serde(default)]
    pub events: Vec<DisturbanceEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regimes: Option<RegimeSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tvp: Option<TvpSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub missingness: Option<MissingnessSpec>,
    #[serde(default = "default_participants")]
    pub n_participants: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub study_start_weekday: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_names: Option<Vec<String>>,
}

impl Scenario {
    pub fn new(schedule: PingSchedule) -> Self {
        Self {
            schedule,
            trends: Vec::new(),
            events: Vec::new(),
            regimes: None,
            tvp: None,
            missingness: None,
            n_participants: 1,
            seed: None,
            study_start_weekday: 0,
            channel_names: None,
            input_names: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })
    }
}

/// One simulated participant together with its latent states (`T × n_states`).
#[derive(Debug, Clone)]
pub struct SimulatedSeries {
    pub participant: Participant,
    pub states: DMatrix<f64>,
}

fn draw_normal(factor: &DMatrix<f64>, rng: &mut rng::Rng) -> DVector<f64> {
    let z = DVector::from_fn(factor.ncols(), |_, _| StandardNormal.sample(rng));
    factor * z
}

/// Simulates the state and measurement recursion on given ping times and
/// inputs `u` (`T × n_inputs`).
pub fn simulate_series(
    spec: &ModelSpec,
    timestamps: &[f64],
    u: &DMatrix<f64>,
    regimes: Option<&RegimeSchedule>,
    tvp: Option<&TvpSchedule>,
    rng: &mut rng::Rng,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = spec.n_states;
    let t_len = timestamps.len();
    if u.nrows() != t_len || u.ncols() != spec.n_inputs {
        return Err(Error::InvalidInput("input matrix shape disagrees with schedule/model".into()));
    }
    let regime_a: Vec<Option<DMatrix<f64>>> = regimes
        .map(|r| {
            r.regimes
                .iter()
                .map(|o| o.a.as_ref().map(|rows| DMatrix::from_fn(n, n, |i, j| rows[i][j])))
                .collect()
        })
        .unwrap_or_default();
    let offset = |r: usize| -> DVector<f64> {
        regimes
            .and_then(|s| s.regimes[r].mean_offset.as_ref())
            .map(|m| DVector::from_column_slice(m))
            .unwrap_or_else(|| DVector::zeros(n))
    };
    let regime_of = |t: f64| regimes.map_or(0, |r| r.regime_at(t));
    let effective_a = |k: usize| -> DMatrix<f64> {
        let r = regime_of(timestamps[k]);
        let mut a = regime_a.get(r).cloned().flatten().unwrap_or_else(|| spec.a.clone());
        if let Some(tv) = tvp {
            a[(tv.target[0], tv.target[1])] = tv.value(timestamps[k]);
        }
        a
    };

    let sigma_factor = linalg::psd_factor(&spec.sigma);
    let mut ct_cache: HashMap<(usize, u64, u64), (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> = HashMap::new();

    let mut states = DMatrix::zeros(t_len, n);
    let mut x = offset(regime_of(timestamps[0])) + &spec.initial_mean
        + draw_normal(&linalg::psd_factor(&spec.initial_cov), rng);
    states.row_mut(0).copy_from(&x.transpose());
    for k in 1..t_len {
        let r = regime_of(timestamps[k]);
        let mu = offset(r);
        let a = effective_a(k);
        let u_prev = u.row(k - 1).transpose();
        let dev = &x - &mu;
        x = match spec.time_mode {
            TimeMode::Discrete => &mu + &a * dev + &spec.g * u_prev + draw_normal(&sigma_factor, rng),
            TimeMode::Continuous => {
                let dt = timestamps[k] - timestamps[k - 1];
                let tv_bits = tvp.map_or(0, |tv| tv.value(timestamps[k]).to_bits());
                let key = (r, dt.to_bits(), tv_bits);
                if !ct_cache.contains_key(&key) {
                    let (ad, gd, sd) = model::discretize_parts(&a, &spec.g, &spec.sigma, dt)?;
                    ct_cache.insert(key, (ad, gd, linalg::psd_factor(&sd)));
                }
                let (ad, gd, sf) = &ct_cache[&key];
                &mu + ad * dev + gd * u_prev + draw_normal(sf, rng)
            }
        };
        states.row_mut(k).copy_from(&x.transpose());
    }

    let gauss = spec.gaussian_channel_indices();
    let theta_g = DMatrix::from_fn(gauss.len(), gauss.len(), |i, j| spec.theta[(gauss[i], gauss[j])]);
    let theta_factor = linalg::psd_factor(&theta_g);
    let mut y = DMatrix::zeros(t_len, spec.n_obs);
    for k in 0..t_len {
        let xk = states.row(k).transpose();
        let noise = draw_normal(&theta_factor, rng);
        for (gi, &j) in gauss.iter().enumerate() {
            y[(k, j)] = (spec.h.row(j) * &xk)[0] + noise[gi];
        }
        for (j, ch) in spec.channels.iter().enumerate() {
            let xs = xk[ch.state_index.min(n - 1)];
            y[(k, j)] = match ch.family {
                Family::Gaussian => continue,
                Family::Poisson => {
                    let rate = poisson_rate(ch, xs);
                    if ch.link == Link::Identity && rate <= 0.0 {
                        return Err(Error::NegativeRate { rate, ping: k, channel: j });
                    }
                    if !rate.is_finite() {
                        return Err(Error::NonFinite(format!("Poisson rate at ping {k}")));
                    }
                    Poisson::new(rate)
                        .map_err(|e| Error::NonFinite(e.to_string()))?
                        .sample(rng)
                }
                Family::GradedResponse => {
                    let exceed = grm_exceedance(xs, ch.discrimination, &ch.thresholds);
                    let draw: f64 = rng.random();
                    // invert the cumulative distribution P(y ≤ c) = 1 − P(y > c)
                    let c = exceed.iter().take_while(|&&p| draw > 1.0 - p).count();
                    (c + 1) as f64
                }
                Family::BernoulliLogistic => {
                    let p = logistic(ch.discrimination * (xs - ch.thresholds[0]));
                    let draw: f64 = rng.random();
                    if draw < p { 1.0 } else { 0.0 }
                }
            };
        }
    }
    Ok((states, y))
}

fn participant_id(i: usize, n: usize) -> String {
    let width = n.to_string().len();
    format!("p{:0width$}", i + 1)
}

/// Simulates participant `index` of a scenario (no missingness applied).
pub fn simulate_participant(spec: &ModelSpec, scenario: &Scenario, index: usize, seed: u64) -> Result<SimulatedSeries> {
    let pseed = derive_seed(seed, index as u64);
    let timestamps = generate_schedule(&scenario.schedule, derive_seed(pseed, 0))?;
    let mut u = encode_disturbance(&scenario.events, &timestamps, spec.n_inputs)?;
    apply_trends(&mut u, &scenario.trends, &timestamps, scenario.study_start_weekday)?;
    let mut rng = rng::rng_from(derive_seed(pseed, 1));
    let (states, y) = simulate_series(spec, &timestamps, &u, scenario.regimes.as_ref(), scenario.tvp.as_ref(), &mut rng)?;
    let t_len = timestamps.len();
    let mut participant = Participant::new(participant_id(index, scenario.n_participants), timestamps, y, u);
    participant.meta = ParticipantMeta {
        seed: Some(pseed),
        study_start_weekday: scenario.study_start_weekday,
        inserted: vec![false; t_len],
    };
    Ok(SimulatedSeries { participant, states })
}

/// Generates a complete dataset; participant `i` uses a seed derived from
/// `(seed, i)` so the result does not depend on evaluation order.
pub fn simulate_dataset(spec: &ModelSpec, scenario: &Scenario, seed: u64) -> Result<EmaDataset> {
    validate_model(spec).into_result()?;
    if spec.time_mode == TimeMode::Discrete && scenario.schedule.kind != ScheduleKind::Fixed {
        return Err(Error::ScheduleModeMismatch(format!(
            "discrete-time models need a fixed schedule, got {:?}",
            scenario.schedule.kind
        )));
    }
    if scenario.n_participants == 0 {
        return Err(Error::InvalidInput("n_participants must be at least 1".into()));
    }
    if let Some(r) = &scenario.regimes {
        r.check(spec.n_states, scenario.schedule.horizon)?;
    }
    if let Some(tv) = &scenario.tvp {
        if tv.target[0] >= spec.n_states || tv.target[1] >= spec.n_states {
            return Err(Error::InvalidInput("tvp target outside A".into()));
        }
    }
    for ev in &scenario.events {
        if !(0.0..=scenario.schedule.horizon).contains(&ev.onset) {
            return Err(Error::InvalidInput(format!("event onset {} outside horizon", ev.onset)));
        }
    }
    let participants = (0..scenario.n_participants)
        .into_par_iter()
        .map(|i| simulate_participant(spec, scenario, i, seed).map(|s| s.participant))
        .collect::<Result<Vec<_>>>()?;
    let (default_c, default_u) = EmaDataset::default_names(spec.n_obs, spec.n_inputs);
    let channel_names = scenario
        .channel_names
        .clone()
        .or_else(|| {
            let named: Option<Vec<String>> = spec.channels.iter().map(|c| c.name.clone()).collect();
            named
        })
        .unwrap_or(default_c);
    let input_names = scenario.input_names.clone().unwrap_or(default_u);
    if channel_names.len() != spec.n_obs || input_names.len() != spec.n_inputs {
        return Err(Error::InvalidInput("channel/input name counts disagree with the model".into()));
    }
    let mut data = EmaDataset::new(channel_names, input_names, participants);
    data.schedule = Some(scenario.schedule.clone());
    Ok(data)
}

/// Simulation followed by the scenario's missingness mechanism, if any.
pub fn run_scenario(spec: &ModelSpec, scenario: &Scenario, seed: u64) -> Result<EmaDataset> {
    let data = simulate_dataset(spec, scenario, seed)?;
    match &scenario.missingness {
        Some(m) => inject_missingness(&data, m, derive_seed(seed, u64::MAX)),
        None => Ok(data),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MeasurementChannel;

    #[test]
    fn noiseless_null_system_is_zero() {
        let mut spec = ModelSpec::gaussian(
            DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3]),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 2),
        );
        spec.initial_cov = DMatrix::zeros(2, 2);
        let sc = Scenario { n_participants: 3, ..Scenario::new(PingSchedule::fixed(1.0, 50.0)) };
        let d = simulate_dataset(&spec, &sc, 11).unwrap();
        for p in &d.participants {
            assert!(p.y.iter().all(|&v| v == 0.0));
        }
        let s = simulate_participant(&spec, &sc, 0, 11).unwrap();
        assert!(s.states.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_seeds_are_bit_identical() {
        let spec = ModelSpec::scalar(0.5, 1.0, 0.5);
        let sc = Scenario { n_participants: 4, ..Scenario::new(PingSchedule::fixed(1.0, 30.0)) };
        let a = simulate_dataset(&spec, &sc, 3).unwrap();
        let b = simulate_dataset(&spec, &sc, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, simulate_dataset(&spec, &sc, 4).unwrap());
    }

    #[test]
    fn discrete_model_rejects_irregular_schedule() {
        let spec = ModelSpec::scalar(0.5, 1.0, 0.5);
        let sc = Scenario::new(PingSchedule::event_driven(1.0, 30.0));
        assert_eq!(simulate_dataset(&spec, &sc, 0).unwrap_err().code(), "SCHEDULE_MODE_MISMATCH");
    }

    #[test]
    fn identity_poisson_with_negative_state_fails() {
        let mut spec = ModelSpec::scalar(0.5, 1.0, 0.5);
        spec.channels[0] = MeasurementChannel::poisson(0, 1.0, Link::Identity);
        let sc = Scenario::new(PingSchedule::fixed(1.0, 200.0));
        assert_eq!(simulate_dataset(&spec, &sc, 0).unwrap_err().code(), "NEGATIVE_RATE");
    }

    #[test]
    fn non_gaussian_values_are_in_range() {
        let mut spec = ModelSpec::gaussian(
            DMatrix::from_element(1, 1, 0.6),
            DMatrix::from_row_slice(3, 1, &[1.0, 0.0, 0.0]),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::identity(3, 3),
        );
        spec.channels[1] = MeasurementChannel::graded_response(0, 1.5, vec![-1.0, 0.0, 1.0]);
        spec.channels[2] = MeasurementChannel::poisson(0, 1.0, Link::Log);
        spec.reset_initial_state();
        let sc = Scenario::new(PingSchedule::fixed(1.0, 300.0));
        let d = simulate_dataset(&spec, &sc, 5).unwrap();
        let p = &d.participants[0];
        for t in 0..p.len() {
            let g = p.y[(t, 1)];
            assert!(g.fract() == 0.0 && (1.0..=4.0).contains(&g));
            let c = p.y[(t, 2)];
            assert!(c.fract() == 0.0 && c >= 0.0);
        }
    }

    #[test]
    fn regime_means_follow_declared_direction() {
        let mut spec = ModelSpec::scalar(0.5, 0.5, 0.1);
        spec.initial_cov = DMatrix::from_element(1, 1, 0.5);
        let mut sc = Scenario::new(PingSchedule::fixed(1.0, 100.0));
        sc.regimes = Some(RegimeSchedule::mean_shifts(vec![33.0, 66.0], &[0.0, 3.0, -3.0]));
        let s = simulate_participant(&spec, &sc, 0, 21).unwrap();
        let seg = |a: usize, b: usize| s.states.rows(a, b - a).mean();
        let (early, mid, late) = (seg(0, 33), seg(33, 66), seg(66, 100));
        assert!(mid > early && early > late, "{early} {mid} {late}");
    }

    #[test]
    fn continuous_mode_on_irregular_schedule() {
        let spec = ModelSpec::scalar(-0.3, 1.0, 0.2).with_time_mode(TimeMode::Continuous);
        let spec = ModelSpec { initial_cov: DMatrix::from_element(1, 1, 1.0), ..spec };
        let sc = Scenario::new(PingSchedule::event_driven(0.5, 100.0));
        let d = simulate_dataset(&spec, &sc, 2).unwrap();
        assert!(d.participants[0].len() > 10);
        assert!(d.participants[0].y.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn tvp_sigmoid_endpoints() {
        let tv = TvpSchedule {
            target: [0, 0],
            trajectory: TvpTrajectory::Sigmoid,
            start_value: 0.0,
            end_value: 1.0,
            midpoint: 50.0,
            steepness: 0.15,
        };
        assert!(tv.value(0.0) < 0.001);
        assert!((tv.value(50.0) - 0.5).abs() < 1e-12);
        assert!(tv.value(100.0) > 0.999);
    }
}
