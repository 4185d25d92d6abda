//! Series reproducing the generating processes behind the illustrative
//! figures: sampling-rate thinning, time trends and three kinds of
//! non-stationarity.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::rng;
use crate::simulate::{simulate_series, RegimeSchedule, TvpSchedule, TvpTrajectory};

pub const FIGURES: [&str; 5] = ["fig1a", "fig1b", "fig3a", "fig3b", "fig3c"];

/// Length of the fig1a series.
pub const FIG1A_LENGTH: usize = 500;
/// Onset and size of the fig3c shock.
pub const FIG3C_SHOCK_TIME: usize = 50;
pub const FIG3C_SHOCK_SIZE: f64 = 10.0;

/// Named numeric columns; NaN cells are written as `NA`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotTable {
    pub columns: Vec<String>,
    pub data: Vec<Vec<f64>>,
}

impl PlotTable {
    fn new(columns: Vec<(&str, Vec<f64>)>) -> Self {
        let (names, data) = columns.into_iter().map(|(n, c)| (n.to_string(), c)).unzip();
        Self { columns: names, data }
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().position(|c| c == name).map(|i| self.data[i].as_slice())
    }

    pub fn n_rows(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for r in 0..self.n_rows() {
            for (i, col) in self.data.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let v = col[r];
                if v.is_nan() {
                    out.push_str("NA");
                } else {
                    let _ = write!(out, "{v}");
                }
            }
            out.push('\n');
        }
        out
    }
}

fn grid(n: usize, step: f64) -> Vec<f64> {
    (0..n).map(|i| i as f64 * step).collect()
}

fn state_column(states: &DMatrix<f64>) -> Vec<f64> {
    states.column(0).iter().copied().collect()
}

fn pinned_start(spec: ModelSpec) -> ModelSpec {
    let n = spec.n_states;
    spec.with_initial(DVector::zeros(n), DMatrix::zeros(n, n))
}

/// Every `factor`-th value with linear interpolation in between; values after
/// the last retained point carry it forward.
pub fn thin_and_interpolate(series: &[f64], factor: usize) -> (Vec<f64>, Vec<f64>) {
    let n = series.len();
    let thinned: Vec<f64> = (0..n).map(|i| if i % factor == 0 { series[i] } else { f64::NAN }).collect();
    let interp = (0..n)
        .map(|i| {
            let lo = i - i % factor;
            let hi = lo + factor;
            if hi >= n {
                return series[lo];
            }
            let w = (i - lo) as f64 / factor as f64;
            series[lo] * (1.0 - w) + series[hi] * w
        })
        .collect();
    (thinned, interp)
}

fn fig1a(seed: u64) -> Result<PlotTable> {
    let spec = ModelSpec::scalar(0.9, 1.0, 0.0);
    let t = grid(FIG1A_LENGTH, 1.0);
    let (states, _) = simulate_series(&spec, &t, &DMatrix::zeros(t.len(), 0), None, None, &mut rng::rng_from(seed))?;
    let full = state_column(&states);
    let (thin5, interp5) = thin_and_interpolate(&full, 5);
    let (thin10, interp10) = thin_and_interpolate(&full, 10);
    Ok(PlotTable::new(vec![
        ("t", t),
        ("full", full),
        ("thin5", thin5),
        ("thin10", thin10),
        ("interp5", interp5),
        ("interp10", interp10),
    ]))
}

fn fig1b(seed: u64) -> Result<PlotTable> {
    // daily pings for eight weeks starting on a Monday
    let days = 56;
    let t = grid(days, 24.0);
    let spec = pinned_start(ModelSpec::scalar(0.5, 0.25, 0.0).with_inputs(DMatrix::from_element(1, 1, 1.0)));
    let linear = DMatrix::from_fn(days, 1, |i, _| 0.05 * (i + 1) as f64);
    let weekend = DMatrix::from_fn(days, 1, |i, _| {
        let wd = crate::simulate::weekday(t[i], 0);
        // u[t] moves x[t+1]; this lifts Saturday and Sunday
        if wd == 4 || wd == 5 { 2.0 } else { 0.0 }
    });
    let (x_lin, _) = simulate_series(&spec, &t, &linear, None, None, &mut rng::rng_from(seed))?;
    let (x_wkd, _) = simulate_series(&spec, &t, &weekend, None, None, &mut rng::rng_from(seed))?;
    Ok(PlotTable::new(vec![
        ("day", (0..days).map(|d| d as f64).collect()),
        ("weekday", t.iter().map(|&x| crate::simulate::weekday(x, 0) as f64).collect()),
        ("linear_trend", state_column(&x_lin)),
        ("weekend_trend", state_column(&x_wkd)),
    ]))
}

fn fig3a(seed: u64) -> Result<PlotTable> {
    let t = grid(101, 1.0);
    let spec = pinned_start(ModelSpec::scalar(0.0, 1.0, 0.0));
    let tvp = TvpSchedule {
        target: [0, 0],
        trajectory: TvpTrajectory::Sigmoid,
        start_value: 0.0,
        end_value: 1.0,
        midpoint: 50.0,
        steepness: 0.12,
    };
    let (states, _) = simulate_series(&spec, &t, &DMatrix::zeros(t.len(), 0), None, Some(&tvp), &mut rng::rng_from(seed))?;
    let a: Vec<f64> = t.iter().map(|&x| tvp.value(x)).collect();
    Ok(PlotTable::new(vec![("t", t), ("a", a), ("x", state_column(&states))]))
}

fn fig3b(seed: u64) -> Result<PlotTable> {
    let t = grid(100, 1.0);
    let spec = pinned_start(ModelSpec::scalar(0.5, 1.0, 0.0));
    let regimes = RegimeSchedule::mean_shifts(vec![33.0, 66.0], &[0.0, 3.0, -3.0]);
    let (states, _) = simulate_series(&spec, &t, &DMatrix::zeros(t.len(), 0), Some(&regimes), None, &mut rng::rng_from(seed))?;
    let mean = t.iter().map(|&x| [0.0, 3.0, -3.0][regimes.regime_at(x)]).collect();
    Ok(PlotTable::new(vec![("t", t), ("regime_mean", mean), ("x", state_column(&states))]))
}

fn fig3c(seed: u64) -> Result<PlotTable> {
    let n = 100;
    let t = grid(n, 1.0);
    let g = DMatrix::from_element(1, 1, 1.0);
    let stationary = pinned_start(ModelSpec::scalar(0.5, 0.1, 0.0).with_inputs(g.clone()));
    let walk = pinned_start(ModelSpec::scalar(0.5, 0.1, 0.0).with_inputs(g).with_random_walk(&[0]));
    // u[t] moves x[t+1]
    let u = DMatrix::from_fn(n, 1, |i, _| if i + 1 == FIG3C_SHOCK_TIME { FIG3C_SHOCK_SIZE } else { 0.0 });
    let (xs, _) = simulate_series(&stationary, &t, &u, None, None, &mut rng::sub_rng(seed, 0))?;
    let (xw, _) = simulate_series(&walk, &t, &u, None, None, &mut rng::sub_rng(seed, 1))?;
    Ok(PlotTable::new(vec![
        ("t", t),
        ("shock", u.column(0).iter().copied().collect()),
        ("stationary", state_column(&xs)),
        ("random_walk", state_column(&xw)),
    ]))
}

pub fn figure(id: &str, seed: u64) -> Result<PlotTable> {
    match id {
        "fig1a" => fig1a(seed),
        "fig1b" => fig1b(seed),
        "fig3a" => fig3a(seed),
        "fig3b" => fig3b(seed),
        "fig3c" => fig3c(seed),
        other => Err(Error::UnknownFigure(other.to_string())),
    }
}
