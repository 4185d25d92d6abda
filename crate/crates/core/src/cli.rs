//! The `emastate` command-line front end.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, ErrorKind, Result};
use crate::estimate::{self, FitMode, FitOptions, Likelihood, OptimOptions, Template};
use crate::filter::{self, FilterMethod};
use crate::io::{read_dataset, write_atomic, write_dataset};
use crate::model::{validate_model, ModelSpec, TimeMode};
use crate::plotdata;
use crate::simulate::{run_scenario, Scenario};

#[derive(Debug, Parser)]
#[command(name = "emastate", version, about = "State-space modeling toolkit for EMA time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Idiographic,
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodArg {
    Kalman,
    Particle,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset from a model and a scenario.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Fit a template to a dataset by maximum likelihood.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        template: PathBuf,
        #[arg(long, value_enum, default_value = "pooled")]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "kalman")]
        likelihood: LikelihoodArg,
        #[arg(long, default_value_t = 5)]
        restarts: usize,
        #[arg(long)]
        out: PathBuf,
        /// Required with more than one restart or a particle likelihood.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1000)]
        particles: usize,
        #[arg(long, default_value_t = 200)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
    /// Filter (and optionally smooth) a dataset under a fixed model.
    Filter {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        smooth: bool,
        /// Particle count for models with non-Gaussian channels.
        #[arg(long, default_value_t = 1000)]
        particles: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit several templates and tabulate AIC/BIC.
    Compare {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        templates: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        restarts: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write the series behind one of the illustrative figures.
    Plotdata {
        #[arg(long)]
        figure: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Check a model file (and optionally a scenario file).
    Validate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    flags: BTreeMap<&'a str, serde_json::Value>,
    seed: Option<u64>,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    version: &'a str,
}

fn read(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(OsString::from).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn write_manifest(
    command: &str,
    flags: BTreeMap<&str, serde_json::Value>,
    seed: Option<u64>,
    inputs: &[&Path],
    output: &Path,
) -> Result<()> {
    let mut hashes = BTreeMap::new();
    for p in inputs {
        hashes.insert(p.display().to_string(), sha256_hex(p)?);
    }
    let m = Manifest {
        command,
        flags,
        seed,
        inputs: hashes,
        outputs: vec![output.display().to_string()],
        version: env!("CARGO_PKG_VERSION"),
    };
    let mut text = serde_json::to_string_pretty(&m).expect("manifest serializes");
    text.push('\n');
    write_atomic(&manifest_path(output), text.as_bytes())
}

fn flag<T: Serialize>(v: T) -> serde_json::Value {
    serde_json::to_value(v).expect("flag serializes")
}

fn path_flag(p: &Path) -> serde_json::Value {
    flag(p.display().to_string())
}

fn require_seed(seed: Option<u64>, why: &str) -> Result<u64> {
    seed.ok_or_else(|| Error::InvalidInput(format!("--seed is required {why}")))
}

fn simulate(model: &Path, scenario: &Path, out: &Path, seed: u64) -> Result<()> {
    let spec = ModelSpec::from_json(&read(model)?)?;
    let scen = Scenario::from_json(&read(scenario)?)?;
    if scen.seed.is_some_and(|s| s != seed) {
        eprintln!("warning: scenario seed ignored in favour of --seed {seed}");
    }
    let data = run_scenario(&spec, &scen, seed)?;
    write_dataset(&data, out)?;
    let flags = BTreeMap::from([
        ("model", path_flag(model)),
        ("scenario", path_flag(scenario)),
        ("out", path_flag(out)),
        ("seed", flag(seed)),
    ]);
    write_manifest("simulate", flags, Some(seed), &[model, scenario], out)?;
    let pings: usize = data.participants.iter().map(|p| p.len()).sum();
    println!(
        "simulated {} participant(s), {pings} pings, {:.1}% missing -> {}",
        data.participants.len(),
        100.0 * data.missing_fraction(),
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn fit(
    data_path: &Path,
    template_path: &Path,
    mode: ModeArg,
    likelihood: LikelihoodArg,
    restarts: usize,
    out: &Path,
    seed: Option<u64>,
    particles: usize,
    max_iter: usize,
    tol: f64,
) -> Result<()> {
    let data = read_dataset(data_path)?;
    let template = Template::from_json(&read(template_path)?)?;
    let needs_seed = restarts > 1 || likelihood == LikelihoodArg::Particle;
    let seed = if needs_seed { require_seed(seed, "with several restarts or a particle likelihood")? } else { seed.unwrap_or(0) };
    let lik = match likelihood {
        LikelihoodArg::Kalman => Likelihood::Kalman,
        LikelihoodArg::Particle => {
            if template.model.all_gaussian() {
                eprintln!("warning: every channel is Gaussian; --likelihood kalman is exact and faster");
            }
            Likelihood::Particle { n_particles: particles, seed }
        }
    };
    let opts = FitOptions { n_restarts: restarts, optim: OptimOptions { max_iter, tol }, likelihood: lik, seed };
    let fit_mode = match mode {
        ModeArg::Idiographic => FitMode::Idiographic,
        ModeArg::Pooled => FitMode::Pooled,
    };
    let results = estimate::fit(&template, &data, fit_mode, &opts)?;
    let mut text = serde_json::to_string_pretty(&results).map_err(|e| Error::InvalidInput(e.to_string()))?;
    text.push('\n');
    write_atomic(out, text.as_bytes())?;
    let flags = BTreeMap::from([
        ("data", path_flag(data_path)),
        ("template", path_flag(template_path)),
        ("mode", flag(mode)),
        ("likelihood", flag(likelihood)),
        ("restarts", flag(restarts)),
        ("out", path_flag(out)),
        ("seed", flag(seed)),
        ("particles", flag(particles)),
        ("max_iter", flag(max_iter)),
        ("tol", flag(tol)),
    ]);
    write_manifest("fit", flags, Some(seed), &[data_path, template_path], out)?;
    for r in &results {
        println!(
            "{}: loglik {:.4}  k {}  AIC {:.3}  BIC {:.3}  converged {}",
            r.participant.as_deref().unwrap_or("pooled"),
            r.log_likelihood,
            r.n_free,
            r.aic,
            r.bic,
            r.converged
        );
    }
    Ok(())
}

fn filter_cmd(model: &Path, data_path: &Path, out: &Path, smooth: bool, particles: usize, seed: Option<u64>) -> Result<()> {
    let spec = ModelSpec::from_json(&read(model)?)?;
    validate_model(&spec).into_result()?;
    let data = read_dataset(data_path)?;
    let method = if spec.all_gaussian() {
        FilterMethod::Kalman
    } else {
        if smooth {
            return Err(Error::InvalidInput("--smooth needs an all-Gaussian model".into()));
        }
        FilterMethod::Particle { n_particles: particles, seed: require_seed(seed, "for particle filtering")? }
    };
    let mut rows = Vec::with_capacity(data.participants.len());
    let mut total = 0.0;
    for (i, p) in data.participants.iter().enumerate() {
        let m = match method {
            FilterMethod::Particle { n_particles, seed } => {
                FilterMethod::Particle { n_particles, seed: crate::rng::derive_seed(seed, i as u64) }
            }
            k => k,
        };
        let f = filter::run_filter(&spec, p, m)?;
        total += f.log_likelihood;
        let s = if smooth { Some(filter::kalman_smooth(&spec, p)?) } else { None };
        rows.push((p.id.clone(), f, s));
    }
    write_atomic(out, filter::export_table(&rows, spec.n_states, &data.channel_names).as_bytes())?;
    let seed_used = match method {
        FilterMethod::Particle { seed, .. } => Some(seed),
        FilterMethod::Kalman => None,
    };
    let flags = BTreeMap::from([
        ("model", path_flag(model)),
        ("data", path_flag(data_path)),
        ("out", path_flag(out)),
        ("smooth", flag(smooth)),
        ("particles", flag(particles)),
        ("seed", flag(seed)),
    ]);
    write_manifest("filter", flags, seed_used, &[model, data_path], out)?;
    let kind = match (method, spec.time_mode) {
        (FilterMethod::Particle { .. }, _) => "particle",
        (_, TimeMode::Continuous) => "continuous-time Kalman",
        _ => "Kalman",
    };
    println!("{kind} filter over {} participant(s): total loglik {total:.4} -> {}", rows.len(), out.display());
    Ok(())
}

fn compare(data_path: &Path, templates: &[PathBuf], out: &Path, restarts: usize, seed: Option<u64>) -> Result<()> {
    let data = read_dataset(data_path)?;
    let seed = if restarts > 1 { require_seed(seed, "with several restarts")? } else { seed.unwrap_or(0) };
    let mut parsed = Vec::with_capacity(templates.len());
    for (i, path) in templates.iter().enumerate() {
        let mut t = Template::from_json(&read(path)?)?;
        if t.id.is_none() {
            t.id = Some(path.file_stem().map_or_else(|| format!("model{}", i + 1), |s| s.to_string_lossy().into_owned()));
        }
        parsed.push(t);
    }
    let opts = FitOptions { n_restarts: restarts, seed, ..FitOptions::default() };
    let rows = estimate::compare_templates(&parsed, &data, &opts)?;
    write_atomic(out, estimate::comparison_table(&rows).as_bytes())?;
    let mut flags = BTreeMap::from([
        ("data", path_flag(data_path)),
        ("out", path_flag(out)),
        ("restarts", flag(restarts)),
        ("seed", flag(seed)),
    ]);
    flags.insert("templates", flag(templates.iter().map(|p| p.display().to_string()).collect::<Vec<_>>()));
    let mut inputs: Vec<&Path> = vec![data_path];
    inputs.extend(templates.iter().map(PathBuf::as_path));
    write_manifest("compare", flags, Some(seed), &inputs, out)?;
    println!("{:<20} {:>4} {:>14} {:>12} {:>12}", "model", "k", "loglik", "AIC", "BIC");
    for r in &rows {
        let mark = |rank: usize| if rank == 1 { "*" } else { " " };
        println!(
            "{:<20} {:>4} {:>14.4} {:>11.3}{} {:>11.3}{}",
            r.model_id,
            r.k,
            r.loglik,
            r.aic,
            mark(r.rank_aic),
            r.bic,
            mark(r.rank_bic)
        );
    }
    println!("* = minimum");
    Ok(())
}

fn plotdata_cmd(figure: &str, out: &Path, seed: u64) -> Result<()> {
    let table = plotdata::figure(figure, seed)?;
    std::fs::create_dir_all(out)?;
    let path = out.join(format!("{figure}.csv"));
    write_atomic(&path, table.to_csv().as_bytes())?;
    let flags = BTreeMap::from([("figure", flag(figure)), ("out", path_flag(out)), ("seed", flag(seed))]);
    write_manifest("plotdata", flags, Some(seed), &[], &path)?;
    println!("{figure}: {} rows x {} columns -> {}", table.n_rows(), table.columns.len(), path.display());
    Ok(())
}

fn validate(model: &Path, scenario: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let spec = ModelSpec::from_json(&read(model)?)?;
    let report = validate_model(&spec);
    if let Some(s) = scenario {
        Scenario::from_json(&read(s)?)?;
    }
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    match out {
        Some(path) => {
            write_atomic(path, text.as_bytes())?;
            let mut flags = BTreeMap::from([("model", path_flag(model)), ("out", path_flag(path))]);
            let mut inputs = vec![model];
            if let Some(s) = scenario {
                flags.insert("scenario", path_flag(s));
                inputs.push(s);
            }
            write_manifest("validate", flags, None, &inputs, path)?;
        }
        None => print!("{text}"),
    }
    for issue in &report.warnings {
        eprintln!("warning {}: {}", issue.code, issue.message);
    }
    for issue in &report.errors {
        eprintln!("error {}: {}", issue.code, issue.message);
    }
    if report.is_ok() {
        eprintln!("model is valid");
    }
    report.into_result()
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { model, scenario, out, seed } => simulate(&model, &scenario, &out, seed),
        Command::Fit { data, template, mode, likelihood, restarts, out, seed, particles, max_iter, tol } => {
            fit(&data, &template, mode, likelihood, restarts, &out, seed, particles, max_iter, tol)
        }
        Command::Filter { model, data, out, smooth, particles, seed } => {
            filter_cmd(&model, &data, &out, smooth, particles, seed)
        }
        Command::Compare { data, templates, out, restarts, seed } => compare(&data, &templates, &out, restarts, seed),
        Command::Plotdata { figure, out, seed } => plotdata_cmd(&figure, &out, seed),
        Command::Validate { model, scenario, out } => validate(&model, scenario.as_deref(), out.as_deref()),
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::Validation => 2,
        ErrorKind::Numerical => 3,
        ErrorKind::Io => 4,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
