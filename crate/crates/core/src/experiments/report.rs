//! JSON and plain-text reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::StudyKind;
use super::metrics::MetricsTable;
use super::study::{SelectionShare, StudyOutcome};
use crate::error::ModelError;
use crate::estimation::{AssociationValue, FitResult, HessianStatus};
use crate::likelihood::SubjectModel;
use crate::margins::{HazardRatioEstimate, Z_95};
use crate::simulation::CensoringSummary;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub schema_version: String,
    pub kind: StudyKind,
    pub generating_model: String,
    pub truth: Vec<f64>,
    pub parameter_names: Vec<String>,
    pub seed: u64,
    pub n: usize,
    pub replications: usize,
    pub mean_censoring: CensoringSummary,
    pub tables: Vec<MetricsTable>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub selection: Vec<SelectionShare>,
    pub flagged: bool,
}

impl StudyReport {
    pub fn from_outcome<R>(outcome: &StudyOutcome<R>) -> Self {
        let plan = &outcome.plan;
        Self {
            schema_version: SCHEMA_VERSION.into(),
            kind: plan.kind,
            generating_model: plan.sim.spec.label(),
            truth: plan.sim.truth.0.clone(),
            parameter_names: plan.sim.spec.param_names(),
            seed: plan.sim.seed,
            n: plan.sim.n,
            replications: plan.replications,
            mean_censoring: outcome.mean_censoring,
            tables: outcome.tables.clone(),
            selection: outcome.selection.clone(),
            flagged: outcome.flagged,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:?} study: {} generating, n = {}, {} replications, seed {}",
            self.kind, self.generating_model, self.n, self.replications, self.seed
        );
        let c = &self.mean_censoring;
        let _ = writeln!(
            out,
            "mean censoring: d1=0 {:.3}, d2=0 {:.3}, both {:.3}",
            c.nonterminal_censored, c.terminal_censored, c.both_censored
        );
        for t in &self.tables {
            let _ = writeln!(out, "\n{} (failed {} of {})", t.title, t.failed, t.replications);
            let header = ["estimand", "truth", "mean", "bias", "MSE", "CP%", "used"];
            let body: Vec<Vec<String>> = t
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.estimand.clone(),
                        format!("{:.3}", r.truth),
                        format!("{:.3}", r.mean_estimate),
                        format!("{:.3}", r.bias),
                        format!("{:.4}", r.mse),
                        format!("{:.1}", r.coverage),
                        r.used.to_string(),
                    ]
                })
                .collect();
            out.push_str(&align(&header, &body));
        }
        if !self.selection.is_empty() {
            let _ = writeln!(out, "\npercent chosen by AIC");
            let body: Vec<Vec<String>> = self
                .selection
                .iter()
                .map(|s| vec![s.model.clone(), s.count.to_string(), format!("{:.1}", s.percent)])
                .collect();
            out.push_str(&align(&["model", "count", "percent"], &body));
        }
        if self.flagged {
            let _ = writeln!(out, "\nWARNING: more than 5% of replications failed for at least one model");
        }
        out
    }
}

/// Column-aligned table: first column left aligned, the rest right aligned.
pub fn align(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(header.to_vec(), &mut out);
    for row in rows {
        line(row.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedEstimate {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedHazardRatio {
    pub covariate: String,
    #[serde(flatten)]
    pub estimate: HazardRatioEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HazardRow {
    pub pattern: String,
    pub time: f64,
    pub nonterminal: f64,
    pub terminal: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: String,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hessian_status: Option<HessianStatus>,
    pub loglik: f64,
    pub aic: f64,
    /// 1 for the lowest AIC among successful fits.
    pub aic_rank: Option<usize>,
    pub coefficients: Vec<NamedEstimate>,
    pub hr_nonterminal: Vec<NamedHazardRatio>,
    pub hr_terminal: Vec<NamedHazardRatio>,
    pub association: Vec<AssociationValue>,
    /// Natural-scale shapes with Delta-method intervals.
    pub shapes: Vec<NamedEstimate>,
    pub hazards: Vec<HazardRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub schema_version: String,
    pub n: usize,
    pub covariates: Vec<String>,
    pub censoring: CensoringSummary,
    pub models: Vec<ModelReport>,
}

fn pattern_label(w: &[f64], names: &[String]) -> String {
    let on: Vec<&str> = w.iter().zip(names).filter(|(v, _)| **v != 0.0).map(|(_, n)| n.as_str()).collect();
    if on.is_empty() {
        "reference".into()
    } else {
        on.join("+")
    }
}

impl ModelReport {
    pub fn from_fit(fit: &FitResult, names: &[String], time_grid: &[f64]) -> Self {
        let spec = &fit.spec;
        let param_names = spec.param_names();
        let coefficients = (0..spec.n_params())
            .map(|i| {
                let (ci_low, ci_high) = fit.coef_ci(i);
                NamedEstimate {
                    name: param_names[i].clone(),
                    estimate: fit.params_hat.0[i],
                    std_error: fit.std_error(i),
                    ci_low,
                    ci_high,
                }
            })
            .collect();
        let named = |hrs: &[HazardRatioEstimate]| {
            hrs.iter().zip(names).map(|(h, n)| NamedHazardRatio { covariate: n.clone(), estimate: *h }).collect()
        };
        let shapes = match spec.shape_indices() {
            Some((i, j)) => [(i, "nonterminal"), (j, "terminal")]
                .iter()
                .map(|&(k, label)| {
                    let stored = fit.params_hat.0[k];
                    let value = spec.natural_shape(stored);
                    let jac = if spec.margin == crate::margins::MarginFamily::Weibull { value } else { 1.0 };
                    let se = jac * fit.std_error(k);
                    NamedEstimate {
                        name: format!("shape_{label}"),
                        estimate: value,
                        std_error: se,
                        ci_low: value - Z_95 * se,
                        ci_high: value + Z_95 * se,
                    }
                })
                .collect(),
            None => Vec::new(),
        };
        let unpacked = spec.unpack(fit.params_hat.as_slice());
        let mut hazards = Vec::new();
        for a in &fit.theta_by_group {
            let model = SubjectModel::resolve(spec, &unpacked, &a.w);
            for &t in time_grid {
                hazards.push(HazardRow {
                    pattern: pattern_label(&a.w, names),
                    time: t,
                    nonterminal: model.nonterminal.hazard(t),
                    terminal: model.terminal.hazard(t),
                });
            }
        }
        Self {
            model: spec.label(),
            converged: fit.converged,
            error: None,
            hessian_status: Some(fit.hessian_status),
            loglik: fit.loglik,
            aic: fit.aic,
            aic_rank: None,
            coefficients,
            hr_nonterminal: named(&fit.hr_nonterminal),
            hr_terminal: named(&fit.hr_terminal),
            association: fit.theta_by_group.clone(),
            shapes,
            hazards,
        }
    }

    pub fn failed(model: String, error: &ModelError) -> Self {
        Self {
            model,
            converged: false,
            error: Some(error.to_string()),
            hessian_status: None,
            loglik: f64::NAN,
            aic: f64::NAN,
            aic_rank: None,
            coefficients: Vec::new(),
            hr_nonterminal: Vec::new(),
            hr_terminal: Vec::new(),
            association: Vec::new(),
            shapes: Vec::new(),
            hazards: Vec::new(),
        }
    }
}

impl FitReport {
    /// Assigns AIC ranks among converged models.
    pub fn new(n: usize, covariates: Vec<String>, censoring: CensoringSummary, mut models: Vec<ModelReport>) -> Self {
        let mut order: Vec<usize> = (0..models.len()).filter(|&i| models[i].converged && models[i].aic.is_finite()).collect();
        order.sort_by(|&i, &j| {
            models[i]
                .aic
                .total_cmp(&models[j].aic)
                .then(models[i].coefficients.len().cmp(&models[j].coefficients.len()))
                .then(i.cmp(&j))
        });
        for (rank, &i) in order.iter().enumerate() {
            models[i].aic_rank = Some(rank + 1);
        }
        Self { schema_version: SCHEMA_VERSION.into(), n, covariates, censoring, models }
    }

    pub fn failed_models(&self) -> usize {
        self.models.iter().filter(|m| !m.converged).count()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} subjects, covariates: {}", self.n, self.covariates.join(", "));
        let body: Vec<Vec<String>> = self
            .models
            .iter()
            .map(|m| {
                vec![
                    m.model.clone(),
                    m.aic_rank.map_or("-".into(), |r| r.to_string()),
                    format!("{:.2}", m.loglik),
                    format!("{:.2}", m.aic),
                    if m.converged { "yes".into() } else { "no".into() },
                ]
            })
            .collect();
        out.push_str(&align(&["model", "rank", "logL", "AIC", "converged"], &body));
        for m in &self.models {
            let _ = writeln!(out, "\n== {} ==", m.model);
            if let Some(e) = &m.error {
                let _ = writeln!(out, "fit failed: {e}");
                continue;
            }
            let hr_rows = |label: &str, hrs: &[NamedHazardRatio]| -> Vec<Vec<String>> {
                hrs.iter()
                    .map(|h| {
                        vec![
                            format!("{label}({})", h.covariate),
                            format!("{:.3}", h.estimate.hr),
                            format!("({:.3}, {:.3})", h.estimate.ci_low, h.estimate.ci_high),
                        ]
                    })
                    .collect()
            };
            let mut rows = hr_rows("HR_NT", &m.hr_nonterminal);
            rows.extend(hr_rows("HR_T", &m.hr_terminal));
            rows.extend(m.coefficients.iter().filter(|c| c.name.starts_with('b')).map(|c| {
                vec![c.name.clone(), format!("{:.3}", c.estimate), format!("({:.3}, {:.3})", c.ci_low, c.ci_high)]
            }));
            rows.extend(m.association.iter().map(|a| {
                vec![
                    format!("theta[{}]", pattern_label(&a.w, &self.covariates)),
                    format!("{:.3}", a.theta),
                    format!("({:.3}, {:.3})", a.ci_low, a.ci_high),
                ]
            }));
            rows.extend(m.shapes.iter().map(|s| {
                vec![s.name.clone(), format!("{:.3}", s.estimate), format!("({:.3}, {:.3})", s.ci_low, s.ci_high)]
            }));
            out.push_str(&align(&["estimand", "estimate", "95% CI"], &rows));
            if !m.hazards.is_empty() {
                let rows: Vec<Vec<String>> = m
                    .hazards
                    .iter()
                    .map(|h| vec![h.pattern.clone(), format!("{}", h.time), format!("{:.5}", h.nonterminal), format!("{:.5}", h.terminal)])
                    .collect();
                out.push_str(&align(&["pattern", "time", "h_nonterminal", "h_terminal"], &rows));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligned_columns() {
        let t = align(&["a", "bb"], &[vec!["long".into(), "1".into()], vec!["x".into(), "22.5".into()]]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "a       bb");
        assert_eq!(lines[1], "long     1");
        assert_eq!(lines[2], "x     22.5");
    }

    #[test]
    fn ranks_skip_failures() {
        let mut a = ModelReport::failed("x".into(), &ModelError::EmptyData);
        a.converged = true;
        a.aic = 10.0;
        let mut b = a.clone();
        b.aic = 5.0;
        let c = ModelReport::failed("y".into(), &ModelError::EmptyData);
        let censoring = CensoringSummary { nonterminal_censored: 0.0, terminal_censored: 0.0, both_censored: 0.0 };
        let r = FitReport::new(3, vec![], censoring, vec![a, b, c]);
        assert_eq!(r.models.iter().map(|m| m.aic_rank).collect::<Vec<_>>(), vec![Some(2), Some(1), None]);
        assert_eq!(r.failed_models(), 1);
    }
}
