//! Mapping between model matrices and the unconstrained optimizer vector.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::semidefinite_cholesky;
use crate::model::{Family, ModelSpec};

/// Status of one parameter entry.
///
/// In files: `"free"`, `"template"` (keep the template value), a number
/// (fixed at that value) or `{"tie": "group"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStatus", into = "RawStatus")]
pub enum Status {
    Free,
    Template,
    Fixed(f64),
    Tied(String),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawStatus {
    Word(String),
    Number(f64),
    Tie { tie: String },
}

impl TryFrom<RawStatus> for Status {
    type Error = String;

    fn try_from(raw: RawStatus) -> std::result::Result<Self, String> {
        match raw {
            RawStatus::Word(w) if w == "free" => Ok(Status::Free),
            RawStatus::Word(w) if w == "template" => Ok(Status::Template),
            RawStatus::Word(w) => Err(format!("unknown parameter status {w:?}")),
            RawStatus::Number(v) => Ok(Status::Fixed(v)),
            RawStatus::Tie { tie } => Ok(Status::Tied(tie)),
        }
    }
}

impl From<Status> for RawStatus {
    fn from(s: Status) -> Self {
        match s {
            Status::Free => RawStatus::Word("free".into()),
            Status::Template => RawStatus::Word("template".into()),
            Status::Fixed(v) => RawStatus::Number(v),
            Status::Tied(t) => RawStatus::Tie { tie: t },
        }
    }
}

/// One status for every entry, or a full grid of statuses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixStatus {
    Uniform(Status),
    Entries(Vec<Vec<Status>>),
}

impl MatrixStatus {
    fn get(&self, name: &str, i: usize, j: usize, nrows: usize, ncols: usize) -> Result<Status> {
        match self {
            MatrixStatus::Uniform(s) => Ok(s.clone()),
            MatrixStatus::Entries(rows) => {
                if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
                    return Err(Error::InvalidInput(format!("parameter map for {name} must be {nrows}x{ncols}")));
                }
                Ok(rows[i][j].clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelStatus {
    #[serde(default = "template_status")]
    pub scale: Status,
    #[serde(default = "template_status")]
    pub discrimination: Status,
}

impl Default for Status {
    fn default() -> Self {
        Status::Template
    }
}

fn template_status() -> Status {
    Status::Template
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialStatus {
    /// Stationary moments of each candidate (diffuse if non-stationary).
    #[default]
    Default,
    Template,
}

/// Which entries of a template are estimated.
///
/// Omitted matrices keep their template values. `Sigma` and `Theta` statuses
/// refer to the lower-triangular factor `L` with `Σ = L Lᵀ`; a free diagonal
/// factor entry is optimized on the log scale, so covariances stay positive
/// semidefinite. Random-walk rows of `A` and measurement parameters of
/// channels that do not use them are always kept at the template.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterMap {
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<MatrixStatus>,
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    pub g: Option<MatrixStatus>,
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub h: Option<MatrixStatus>,
    #[serde(rename = "Sigma", default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<MatrixStatus>,
    #[serde(rename = "Theta", default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<MatrixStatus>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channels: Vec<ChannelStatus>,
    #[serde(default)]
    pub initial: InitialStatus,
}

impl ParameterMap {
    pub fn free(names: &[&str]) -> Self {
        let free = || Some(MatrixStatus::Uniform(Status::Free));
        let mut map = Self::default();
        for name in names {
            match *name {
                "A" => map.a = free(),
                "G" => map.g = free(),
                "H" => map.h = free(),
                "Sigma" => map.sigma = free(),
                "Theta" => map.theta = free(),
                _ => {}
            }
        }
        map
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Target {
    A(usize, usize),
    G(usize, usize),
    H(usize, usize),
    SigmaL(usize, usize),
    ThetaL(usize, usize),
    Scale(usize),
    Discrimination(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Source {
    Fixed(f64),
    Param(usize),
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    target: Target,
    source: Source,
    positive: bool,
}

/// A parameter map bound to a template.
#[derive(Debug, Clone)]
pub struct Parameterization {
    template: ModelSpec,
    entries: Vec<Entry>,
    n_params: usize,
    names: Vec<String>,
    sigma_l: DMatrix<f64>,
    theta_l: DMatrix<f64>,
    touches_sigma: bool,
    touches_theta: bool,
    initial: InitialStatus,
}

struct Builder {
    entries: Vec<Entry>,
    groups: BTreeMap<String, (usize, bool)>,
    names: Vec<String>,
}

impl Builder {
    fn add(&mut self, target: Target, status: Status, positive: bool, label: String) -> Result<()> {
        let source = match status {
            Status::Template => return Ok(()),
            Status::Fixed(v) => {
                if !v.is_finite() || (positive && v < 0.0) {
                    return Err(Error::InvalidInput(format!("invalid fixed value {v} for {label}")));
                }
                Source::Fixed(v)
            }
            Status::Free => {
                self.names.push(label);
                Source::Param(self.names.len() - 1)
            }
            Status::Tied(group) => match self.groups.get(&group) {
                Some(&(idx, pos)) => {
                    if pos != positive {
                        return Err(Error::InvalidInput(format!(
                            "tie group {group:?} mixes log-scale and plain entries"
                        )));
                    }
                    Source::Param(idx)
                }
                None => {
                    self.names.push(format!("tie:{group}"));
                    let idx = self.names.len() - 1;
                    self.groups.insert(group, (idx, positive));
                    Source::Param(idx)
                }
            },
        };
        self.entries.push(Entry { target, source, positive });
        Ok(())
    }
}

impl Parameterization {
    pub fn new(template: &ModelSpec, map: &ParameterMap) -> Result<Self> {
        let s = template;
        let (n, m, k) = (s.n_states, s.n_obs, s.n_inputs);
        let mut b = Builder { entries: Vec::new(), groups: BTreeMap::new(), names: Vec::new() };
        let status = |ms: &Option<MatrixStatus>, name: &str, i, j, r, c| -> Result<Status> {
            ms.as_ref().map_or(Ok(Status::Template), |ms| ms.get(name, i, j, r, c))
        };
        for i in 0..n {
            for j in 0..n {
                let st = if s.random_walk_states.contains(&i) {
                    Status::Template
                } else {
                    status(&map.a, "A", i, j, n, n)?
                };
                b.add(Target::A(i, j), st, false, format!("A[{},{}]", i + 1, j + 1))?;
            }
        }
        for i in 0..n {
            for j in 0..k {
                b.add(Target::G(i, j), status(&map.g, "G", i, j, n, k)?, false, format!("G[{},{}]", i + 1, j + 1))?;
            }
        }
        for i in 0..m {
            for j in 0..n {
                let st = if s.channels[i].is_gaussian() { status(&map.h, "H", i, j, m, n)? } else { Status::Template };
                b.add(Target::H(i, j), st, false, format!("H[{},{}]", i + 1, j + 1))?;
            }
        }
        let n_entries = b.entries.len();
        for i in 0..n {
            for j in 0..=i {
                let st = status(&map.sigma, "Sigma", i, j, n, n)?;
                b.add(Target::SigmaL(i, j), st, i == j, format!("L_Sigma[{},{}]", i + 1, j + 1))?;
            }
        }
        let touches_sigma = b.entries.len() > n_entries;
        let n_entries = b.entries.len();
        for i in 0..m {
            for j in 0..=i {
                let st = if s.channels[i].is_gaussian() && s.channels[j].is_gaussian() {
                    status(&map.theta, "Theta", i, j, m, m)?
                } else {
                    Status::Template
                };
                b.add(Target::ThetaL(i, j), st, i == j, format!("L_Theta[{},{}]", i + 1, j + 1))?;
            }
        }
        let touches_theta = b.entries.len() > n_entries;
        if !map.channels.is_empty() && map.channels.len() != m {
            return Err(Error::InvalidInput(format!("parameter map lists {} channels, model has {m}", map.channels.len())));
        }
        for (c, cs) in map.channels.iter().enumerate() {
            let fam = s.channels[c].family;
            let scale = if fam == Family::Poisson { cs.scale.clone() } else { Status::Template };
            b.add(Target::Scale(c), scale, true, format!("scale[{}]", c + 1))?;
            let disc = if matches!(fam, Family::GradedResponse | Family::BernoulliLogistic) {
                cs.discrimination.clone()
            } else {
                Status::Template
            };
            b.add(Target::Discrimination(c), disc, true, format!("discrimination[{}]", c + 1))?;
        }
        Ok(Self {
            template: template.clone(),
            entries: b.entries,
            n_params: b.names.len(),
            names: b.names,
            sigma_l: semidefinite_cholesky(&template.sigma),
            theta_l: semidefinite_cholesky(&template.theta),
            touches_sigma,
            touches_theta,
            initial: map.initial,
        })
    }

    /// Number of free parameters (each tie group counts once).
    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn template(&self) -> &ModelSpec {
        &self.template
    }

    /// Model at the unconstrained point `theta`.
    pub fn apply(&self, theta: &[f64]) -> ModelSpec {
        let mut spec = self.template.clone();
        let mut sl = self.sigma_l.clone();
        let mut tl = self.theta_l.clone();
        for e in &self.entries {
            let v = match e.source {
                Source::Fixed(v) => v,
                Source::Param(i) if e.positive => theta[i].exp(),
                Source::Param(i) => theta[i],
            };
            match e.target {
                Target::A(i, j) => spec.a[(i, j)] = v,
                Target::G(i, j) => spec.g[(i, j)] = v,
                Target::H(i, j) => spec.h[(i, j)] = v,
                Target::SigmaL(i, j) => sl[(i, j)] = v,
                Target::ThetaL(i, j) => tl[(i, j)] = v,
                Target::Scale(c) => spec.channels[c].scale = v,
                Target::Discrimination(c) => spec.channels[c].discrimination = v,
            }
        }
        if self.touches_sigma {
            spec.sigma = &sl * sl.transpose();
        }
        if self.touches_theta {
            spec.theta = &tl * tl.transpose();
        }
        if self.initial == InitialStatus::Default {
            spec.reset_initial_state();
        }
        spec
    }

    /// Unconstrained point reproducing `spec` as closely as the map allows;
    /// tied entries start at their average.
    pub fn point_from(&self, spec: &ModelSpec) -> Vec<f64> {
        let sl = semidefinite_cholesky(&spec.sigma);
        let tl = semidefinite_cholesky(&spec.theta);
        let mut sum = vec![0.0; self.n_params];
        let mut count = vec![0usize; self.n_params];
        for e in &self.entries {
            let Source::Param(i) = e.source else { continue };
            let v = match e.target {
                Target::A(r, c) => spec.a[(r, c)],
                Target::G(r, c) => spec.g[(r, c)],
                Target::H(r, c) => spec.h[(r, c)],
                Target::SigmaL(r, c) => sl[(r, c)],
                Target::ThetaL(r, c) => tl[(r, c)],
                Target::Scale(c) => spec.channels[c].scale,
                Target::Discrimination(c) => spec.channels[c].discrimination,
            };
            sum[i] += if e.positive { v.max(1e-4).ln() } else { v };
            count[i] += 1;
        }
        sum.iter().zip(&count).map(|(s, &c)| s / c.max(1) as f64).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn statuses_parse() {
        let map: ParameterMap =
            serde_json::from_str(r#"{"A": [["free", 0.0], [{"tie": "b"}, {"tie": "b"}]], "Sigma": "free"}"#).unwrap();
        let spec = ModelSpec::gaussian(dmatrix![0.5, 0.1; 0.0, 0.5], DMatrix::identity(2, 2), DMatrix::identity(2, 2), DMatrix::identity(2, 2));
        let p = Parameterization::new(&spec, &map).unwrap();
        // A11, tie b, three factor entries of Sigma
        assert_eq!(p.n_params(), 5);
        assert!(serde_json::from_str::<ParameterMap>(r#"{"A": "maybe"}"#).is_err());
    }

    #[test]
    fn round_trip_through_point() {
        let spec = ModelSpec::gaussian(
            dmatrix![0.4, 0.2; -0.1, 0.3],
            DMatrix::identity(2, 2),
            dmatrix![1.0, 0.3; 0.3, 0.5],
            dmatrix![0.2, 0.0; 0.0, 0.4],
        );
        let p = Parameterization::new(&spec, &ParameterMap::free(&["A", "Sigma", "Theta"])).unwrap();
        let back = p.apply(&p.point_from(&spec));
        assert_relative_eq!(back.a, spec.a, epsilon = 1e-12);
        assert_relative_eq!(back.sigma, spec.sigma, epsilon = 1e-12);
        assert_relative_eq!(back.theta, spec.theta, epsilon = 1e-12);
    }

    #[test]
    fn random_walk_rows_stay_fixed() {
        let spec = ModelSpec::scalar(0.5, 1.0, 1.0).with_random_walk(&[0]);
        let p = Parameterization::new(&spec, &ParameterMap::free(&["A"])).unwrap();
        assert_eq!(p.n_params(), 0);
    }

    #[test]
    fn covariances_stay_psd_anywhere() {
        let spec = ModelSpec::gaussian(DMatrix::identity(3, 3) * 0.5, DMatrix::identity(3, 3), DMatrix::identity(3, 3), DMatrix::identity(3, 3));
        let p = Parameterization::new(&spec, &ParameterMap::free(&["Sigma"])).unwrap();
        let theta: Vec<f64> = (0..p.n_params()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let s = p.apply(&theta);
        assert!(crate::linalg::is_psd(&s.sigma));
    }
}
