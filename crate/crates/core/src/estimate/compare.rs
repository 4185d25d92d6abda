use std::fmt::Write as _;

use serde::Serialize;

use super::fit::{fit, FitMode, FitOptions, FitResult, Template};
use crate::data::EmaDataset;
use crate::error::{Error, Result};
use crate::simulate::covariates::DisturbanceEvent;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub model_id: String,
    pub k: usize,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub rank_aic: usize,
    pub rank_bic: usize,
    pub converged: bool,
    #[serde(skip)]
    pub fit: FitResult,
}

fn ranks(rows: &[ComparisonRow], key: impl Fn(&ComparisonRow) -> f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| key(&rows[a]).total_cmp(&key(&rows[b])).then(rows[a].k.cmp(&rows[b].k)).then(a.cmp(&b)));
    let mut rank = vec![0; rows.len()];
    for (pos, &i) in order.iter().enumerate() {
        rank[i] = pos + 1;
    }
    rank
}

/// Fits every template as a pooled model and ranks them by AIC and BIC.
/// Ties go to fewer free parameters, then to the earlier template.
pub fn compare_templates(templates: &[Template], data: &EmaDataset, opts: &FitOptions) -> Result<Vec<ComparisonRow>> {
    if templates.is_empty() {
        return Err(Error::InvalidInput("nothing to compare".into()));
    }
    let mut rows = Vec::with_capacity(templates.len());
    for (i, t) in templates.iter().enumerate() {
        let r = fit(t, data, FitMode::Pooled, opts)?.remove(0);
        rows.push(ComparisonRow {
            model_id: t.id.clone().unwrap_or_else(|| format!("model{}", i + 1)),
            k: r.n_free,
            loglik: r.log_likelihood,
            aic: r.aic,
            bic: r.bic,
            rank_aic: 0,
            rank_bic: 0,
            converged: r.converged,
            fit: r,
        });
    }
    let ra = ranks(&rows, |r| r.aic);
    let rb = ranks(&rows, |r| r.bic);
    for (i, row) in rows.iter_mut().enumerate() {
        row.rank_aic = ra[i];
        row.rank_bic = rb[i];
    }
    Ok(rows)
}

/// One fit per disturbance coding, everything else shared with `base`.
pub fn compare_disturbance_codings(
    base: &Template,
    data: &EmaDataset,
    candidates: &[(String, Vec<DisturbanceEvent>)],
    opts: &FitOptions,
) -> Result<Vec<ComparisonRow>> {
    let templates: Vec<Template> = candidates
        .iter()
        .map(|(id, events)| Template { id: Some(id.clone()), disturbances: events.clone(), ..base.clone() })
        .collect();
    compare_templates(&templates, data, opts)
}

pub fn comparison_table(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("model_id,k,loglik,aic,bic,rank_aic,rank_bic,converged\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.model_id, r.k, r.loglik, r.aic, r.bic, r.rank_aic, r.rank_bic, r.converged
        );
    }
    out
}
