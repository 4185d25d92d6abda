use rand::Rng as _;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const HOURS_PER_DAY: f64 = 24.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Fixed,
    Jittered,
    RandomWindow,
    EventDriven,
}

/// Observation-time grid. All durations are in hours.
///
/// `fixed`/`jittered` use `interval` (and `max_jitter`); when `day_length`
/// and `night_length` are both set, pings only fall in the first
/// `day_length` hours of each `day_length + night_length` cycle, starting at
/// clock time `wake`. `random_window` draws `pings_per_day` uniform times in
/// the union of the daily clock `windows`; `event_driven` uses exponential
/// inter-arrival times with rate `event_rate` per hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PingSchedule {
    pub kind: ScheduleKind,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_jitter: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub windows: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pings_per_day: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub day_length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub night_length: Option<f64>,
    #[serde(default)]
    pub wake: f64,
}

impl PingSchedule {
    fn base(kind: ScheduleKind, horizon: f64) -> Self {
        Self {
            kind,
            horizon,
            interval: None,
            max_jitter: None,
            windows: Vec::new(),
            pings_per_day: None,
            event_rate: None,
            day_length: None,
            night_length: None,
            wake: 0.0,
        }
    }

    pub fn fixed(interval: f64, horizon: f64) -> Self {
        Self { interval: Some(interval), ..Self::base(ScheduleKind::Fixed, horizon) }
    }

    pub fn jittered(interval: f64, max_jitter: f64, horizon: f64) -> Self {
        Self {
            interval: Some(interval),
            max_jitter: Some(max_jitter),
            ..Self::base(ScheduleKind::Jittered, horizon)
        }
    }

    pub fn random_window(windows: Vec<[f64; 2]>, pings_per_day: usize, horizon: f64) -> Self {
        Self {
            windows,
            pings_per_day: Some(pings_per_day),
            ..Self::base(ScheduleKind::RandomWindow, horizon)
        }
    }

    pub fn event_driven(event_rate: f64, horizon: f64) -> Self {
        Self { event_rate: Some(event_rate), ..Self::base(ScheduleKind::EventDriven, horizon) }
    }

    /// Restricts pings to a daily waking window.
    pub fn with_day_night(mut self, wake: f64, day_length: f64, night_length: f64) -> Self {
        self.wake = wake;
        self.day_length = Some(day_length);
        self.night_length = Some(night_length);
        self
    }

    fn positive(name: &str, v: Option<f64>) -> Result<f64> {
        match v {
            Some(x) if x > 0.0 && x.is_finite() => Ok(x),
            _ => Err(Error::InvalidInput(format!("schedule needs a positive {name}"))),
        }
    }

    fn grid(&self, interval: f64) -> Vec<f64> {
        let mut out = Vec::new();
        match (self.day_length, self.night_length) {
            (Some(day), Some(night)) => {
                let cycle = day + night;
                let mut d = 0.0;
                while d * cycle + self.wake < self.horizon {
                    let mut k = 0.0;
                    while k * interval < day - 1e-9 {
                        let t = d * cycle + self.wake + k * interval;
                        if t >= self.horizon {
                            break;
                        }
                        out.push(t);
                        k += 1.0;
                    }
                    d += 1.0;
                }
            }
            _ => {
                let mut k = 0.0;
                while self.wake + k * interval < self.horizon {
                    out.push(self.wake + k * interval);
                    k += 1.0;
                }
            }
        }
        out
    }
}

/// Draws the ping times for one participant.
pub fn generate_schedule(sched: &PingSchedule, seed: u64) -> Result<Vec<f64>> {
    if !(sched.horizon > 0.0) {
        return Err(Error::EmptySchedule(format!("horizon {} admits no pings", sched.horizon)));
    }
    let mut rng = rng::rng_from(seed);
    let times = match sched.kind {
        ScheduleKind::Fixed => {
            let interval = PingSchedule::positive("interval", sched.interval)?;
            sched.grid(interval)
        }
        ScheduleKind::Jittered => {
            let interval = PingSchedule::positive("interval", sched.interval)?;
            let jitter = sched.max_jitter.unwrap_or(0.0);
            if !(0.0..interval / 2.0).contains(&jitter) {
                return Err(Error::InvalidInput("max_jitter must lie in [0, interval/2)".into()));
            }
            sched
                .grid(interval)
                .into_iter()
                .map(|t| t + rng.random_range(-jitter..=jitter))
                .filter(|t| (0.0..sched.horizon).contains(t))
                .collect()
        }
        ScheduleKind::RandomWindow => {
            let per_day = sched.pings_per_day.unwrap_or(0);
            if per_day == 0 || sched.windows.is_empty() {
                return Err(Error::InvalidInput("random_window needs windows and pings_per_day".into()));
            }
            for w in &sched.windows {
                if !(0.0 <= w[0] && w[0] < w[1] && w[1] <= HOURS_PER_DAY) {
                    return Err(Error::InvalidInput(format!("window {w:?} must satisfy 0 <= start < end <= 24")));
                }
            }
            let total: f64 = sched.windows.iter().map(|w| w[1] - w[0]).sum();
            let days = (sched.horizon / HOURS_PER_DAY).ceil() as usize;
            let mut out = Vec::with_capacity(days * per_day);
            for d in 0..days {
                let mut day: Vec<f64> = (0..per_day)
                    .map(|_| {
                        let mut r = rng.random_range(0.0..total);
                        for w in &sched.windows {
                            let len = w[1] - w[0];
                            if r < len {
                                return w[0] + r;
                            }
                            r -= len;
                        }
                        sched.windows.last().unwrap()[1] - f64::EPSILON
                    })
                    .map(|clock| d as f64 * HOURS_PER_DAY + clock)
                    .filter(|&t| t < sched.horizon)
                    .collect();
                day.sort_by(f64::total_cmp);
                out.extend(day);
            }
            out.dedup();
            out
        }
        ScheduleKind::EventDriven => {
            let rate = PingSchedule::positive("event_rate", sched.event_rate)?;
            let exp = Exp::new(rate).map_err(|e| Error::InvalidInput(e.to_string()))?;
            let mut out = Vec::new();
            let mut t = 0.0;
            loop {
                t += exp.sample(&mut rng);
                if t >= sched.horizon {
                    break;
                }
                out.push(t);
            }
            out
        }
    };
    if times.is_empty() {
        return Err(Error::EmptySchedule(format!("no pings within horizon {}", sched.horizon)));
    }
    Ok(times)
}
