//! Simulation, filtering and maximum-likelihood estimation of state-space
//! models for ecological momentary assessment (EMA) time series.
//!
//! The crate is organised by workflow stage:
//!
//! * [`model`]: model specification, validation, continuous/discrete conversion
//! * [`simulate`]: ping schedules, covariates, disturbances, missingness, datasets
//! * [`filter`]: Kalman filter/smoother and a bootstrap particle filter
//! * [`estimate`]: parameter maps, quasi-Newton fitting, information criteria
//! * [`io`]: dataset files, night-gap augmentation, time covariates
//! * [`plotdata`]: series that regenerate the illustrative figures
//! * [`cli`]: the `emastate` command-line front end

pub mod cli;
pub mod data;
pub mod error;
pub mod estimate;
pub mod filter;
pub mod io;
pub mod linalg;
pub mod measurement;
pub mod model;
pub mod plotdata;
pub mod rng;
pub mod simulate;

pub use data::{EmaDataset, Participant};
pub use error::{Error, ErrorKind, Result};
pub use model::{Family, Link, MeasurementChannel, ModelSpec, TimeMode, ValidationReport};
