//! Replicated simulation studies and fits of observed data.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::StudyPlan;
use super::metrics::{Accumulator, MetricsTable};
use crate::cox::{cox_fit, CoxFit, CoxOptions};
use crate::error::{ModelError, Result};
use crate::estimation::{fit, select_best_by, FitOptions, FitResult, HessianStatus};
use crate::likelihood::{ModelSpec, SubjectRecord};
use crate::margins::predictor_unchecked;
use crate::simulation::{simulate_stream, summarize_censoring, CensoringSummary};

/// Share of failed replications above which a table is flagged.
pub const FAILURE_THRESHOLD: f64 = 0.05;

/// Converged with a positive definite information matrix and finite variances.
pub fn usable(fit: &FitResult) -> bool {
    fit.converged
        && fit.hessian_status == HessianStatus::PositiveDefinite
        && fit.covariance.diagonal().iter().all(|v| v.is_finite() && *v >= 0.0)
}

fn usable_cox(fit: &Option<CoxFit>) -> Option<&CoxFit> {
    fit.as_ref().filter(|f| f.converged && !f.singular_information)
}

fn run_pool<T: Send>(threads: usize, reps: usize, job: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| ModelError::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| (0..reps).into_par_iter().map(&job).collect())
}

fn fit_or_log(spec: &ModelSpec, data: &[SubjectRecord], options: &FitOptions, rep: usize) -> Option<FitResult> {
    match fit(spec, data, options) {
        Ok(f) => Some(f),
        Err(e) => {
            log::warn!("replication {rep}: {} fit failed: {e}", spec.label());
            None
        }
    }
}

#[derive(Clone, Debug)]
pub struct ModelPair {
    /// Association constant across covariates.
    pub model1: Option<FitResult>,
    pub model2: Option<FitResult>,
}

#[derive(Clone, Debug)]
pub struct Study1Replication {
    pub index: usize,
    pub censoring: CensoringSummary,
    pub cox_nonterminal: Option<CoxFit>,
    pub cox_terminal: Option<CoxFit>,
    /// One pair per planned model.
    pub fits: Vec<ModelPair>,
}

#[derive(Clone, Debug)]
pub struct StudyOutcome<R> {
    pub plan: StudyPlan,
    pub replications: Vec<R>,
    pub tables: Vec<MetricsTable>,
    pub selection: Vec<SelectionShare>,
    pub mean_censoring: CensoringSummary,
    /// Some table lost more than [`FAILURE_THRESHOLD`] of its replications.
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionShare {
    pub model: String,
    pub count: usize,
    pub percent: f64,
}

fn study1_replication(plan: &StudyPlan, index: usize) -> Result<Study1Replication> {
    let sim = simulate_stream(&plan.sim, index as u64)?;
    let data = &sim.records;
    let w: Vec<&[f64]> = data.iter().map(|r| r.w.as_slice()).collect();
    let cox = |times: Vec<f64>, events: Vec<bool>| match cox_fit(&times, &events, &w, &CoxOptions::default()) {
        Ok(f) => Some(f),
        Err(e) => {
            log::warn!("replication {index}: Cox fit failed: {e}");
            None
        }
    };
    let cox_nonterminal = cox(data.iter().map(|r| r.x).collect(), data.iter().map(|r| r.d1).collect());
    let cox_terminal = cox(data.iter().map(|r| r.y).collect(), data.iter().map(|r| r.d2).collect());
    let fits = plan
        .models
        .iter()
        .map(|spec| {
            let full = FitOptions::default();
            let model2 = fit_or_log(spec, data, &full, index);
            let model1 = fit_or_log(spec, data, &FitOptions::default().constant_association(spec), index);
            ModelPair { model1, model2 }
        })
        .collect();
    Ok(Study1Replication { index, censoring: summarize_censoring(data), cox_nonterminal, cox_terminal, fits })
}

/// Cox and copula models 1 and 2 on replicated data.
pub fn run_study1(plan: &StudyPlan) -> Result<StudyOutcome<Study1Replication>> {
    let replications = run_pool(plan.threads, plan.replications, |r| study1_replication(plan, r))?;
    let truth = plan.sim.spec.unpack(plan.sim.truth.as_slice());
    let names = &plan.covariate_names;
    let reps = replications.len();
    let mut tables = Vec::new();

    // Cox rows per endpoint
    let mut rows = Vec::new();
    let mut cox_failed = 0;
    for (label, coefs, pick) in [
        ("HR_NT", truth.a, (|r: &Study1Replication| &r.cox_nonterminal) as fn(&Study1Replication) -> &Option<CoxFit>),
        ("HR_T", truth.c, |r: &Study1Replication| &r.cox_terminal),
    ] {
        let ok: Vec<&CoxFit> = replications.iter().filter_map(|r| usable_cox(pick(r))).collect();
        cox_failed = cox_failed.max(reps - ok.len());
        for (k, name) in names.iter().enumerate() {
            let mut acc = Accumulator::default();
            for f in &ok {
                let hr = &f.hr[k];
                acc.push(hr.hr, hr.ci_low, hr.ci_high);
            }
            rows.push(acc.row(&format!("{label}({name})"), coefs[k + 1].exp(), reps - ok.len()));
        }
    }
    tables.push(MetricsTable { title: "Cox".into(), rows, replications: reps, failed: cox_failed });

    for (m, spec) in plan.models.iter().enumerate() {
        for (which, title) in [(1, "copula model 1"), (2, "copula model 2")] {
            let ok: Vec<&FitResult> = replications
                .iter()
                .filter_map(|r| {
                    let pair = &r.fits[m];
                    if which == 1 { pair.model1.as_ref() } else { pair.model2.as_ref() }
                })
                .filter(|f| usable(f))
                .collect();
            let excluded = reps - ok.len();
            let mut rows = hr_rows(&ok, names, truth.a, truth.c, excluded);
            if which == 2 && spec.copula == plan.sim.spec.copula {
                for (k, &b_true) in truth.b.iter().enumerate() {
                    let mut acc = Accumulator::default();
                    for f in &ok {
                        let i = spec.b_range().start + k;
                        let (lo, hi) = f.coef_ci(i);
                        acc.push(f.params_hat.0[i], lo, hi);
                    }
                    rows.push(acc.row(&format!("b{k}"), b_true, excluded));
                }
            }
            tables.push(MetricsTable {
                title: format!("{title} ({})", spec.label()),
                rows,
                replications: reps,
                failed: excluded,
            });
        }
    }
    let mean_censoring = mean_censoring(replications.iter().map(|r| &r.censoring));
    let flagged = tables.iter().any(|t| t.failure_rate() > FAILURE_THRESHOLD);
    Ok(StudyOutcome { plan: plan.clone(), replications, tables, selection: Vec::new(), mean_censoring, flagged })
}

fn hr_rows(fits: &[&FitResult], names: &[String], a: &[f64], c: &[f64], excluded: usize) -> Vec<super::metrics::MetricsRow> {
    let mut rows = Vec::new();
    for (label, truth, nonterminal) in [("HR_NT", a, true), ("HR_T", c, false)] {
        for (k, name) in names.iter().enumerate() {
            let mut acc = Accumulator::default();
            for f in fits {
                let hr = if nonterminal { &f.hr_nonterminal[k] } else { &f.hr_terminal[k] };
                acc.push(hr.hr, hr.ci_low, hr.ci_high);
            }
            rows.push(acc.row(&format!("{label}({name})"), truth[k + 1].exp(), excluded));
        }
    }
    rows
}

fn mean_censoring<'a>(items: impl Iterator<Item = &'a CensoringSummary>) -> CensoringSummary {
    let mut n = 0.0;
    let mut acc = CensoringSummary { nonterminal_censored: 0.0, terminal_censored: 0.0, both_censored: 0.0 };
    for c in items {
        n += 1.0;
        acc.nonterminal_censored += c.nonterminal_censored;
        acc.terminal_censored += c.terminal_censored;
        acc.both_censored += c.both_censored;
    }
    if n > 0.0 {
        acc.nonterminal_censored /= n;
        acc.terminal_censored /= n;
        acc.both_censored /= n;
    }
    acc
}

#[derive(Clone, Debug)]
pub struct Study2Replication {
    pub index: usize,
    pub censoring: CensoringSummary,
    /// One entry per planned model.
    pub fits: Vec<Option<FitResult>>,
    /// Index into the planned models of the lowest-AIC usable fit.
    pub selected: Option<usize>,
}

fn study2_replication(plan: &StudyPlan, index: usize) -> Result<Study2Replication> {
    let sim = simulate_stream(&plan.sim, index as u64)?;
    let fits: Vec<Option<FitResult>> = plan
        .models
        .iter()
        .map(|spec| fit_or_log(spec, &sim.records, &FitOptions::default(), index))
        .collect();
    let selected = select_best_by(fits.iter().map(|f| match f {
        Some(f) if usable(f) => (f.aic, f.free_params),
        _ => (f64::NAN, usize::MAX),
    }));
    Ok(Study2Replication { index, censoring: summarize_censoring(&sim.records), fits, selected })
}

/// Fits every planned margin, selects by AIC and scores the selected model.
pub fn run_study2(plan: &StudyPlan) -> Result<StudyOutcome<Study2Replication>> {
    let replications = run_pool(plan.threads, plan.replications, |r| study2_replication(plan, r))?;
    let reps = replications.len();
    let truth_spec = plan.sim.spec;
    let truth = truth_spec.unpack(plan.sim.truth.as_slice());
    let chosen: Vec<&FitResult> = replications
        .iter()
        .filter_map(|r| r.selected.and_then(|i| r.fits[i].as_ref()))
        .collect();
    let excluded = reps - chosen.len();
    let mut rows = hr_rows(&chosen, &plan.covariate_names, truth.a, truth.c, excluded);
    let same_copula = plan.models.iter().all(|m| m.copula == truth_spec.copula);
    if same_copula {
        for (g, w) in crate::estimation::reporting_patterns(truth_spec.p).iter().enumerate() {
            let theta_true = truth_spec.copula.theta_from_predictor(predictor_unchecked(truth.b, w));
            let mut acc = Accumulator::default();
            for f in &chosen {
                let a = &f.theta_by_group[g];
                acc.push(a.theta, a.ci_low, a.ci_high);
            }
            let label = if g == 0 { "theta(reference)".to_string() } else { format!("theta({})", plan.covariate_names[g - 1]) };
            rows.push(acc.row(&label, theta_true, excluded));
        }
    }
    let tables = vec![MetricsTable { title: "selected model".into(), rows, replications: reps, failed: excluded }];
    let selection = plan
        .models
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let count = replications.iter().filter(|r| r.selected == Some(i)).count();
            SelectionShare {
                model: spec.label(),
                count,
                percent: 100.0 * count as f64 / (reps - excluded).max(1) as f64,
            }
        })
        .collect();
    let mean_censoring = mean_censoring(replications.iter().map(|r| &r.censoring));
    let flagged = tables.iter().any(|t| t.failure_rate() > FAILURE_THRESHOLD);
    Ok(StudyOutcome { plan: plan.clone(), replications, tables, selection, mean_censoring, flagged })
}

/// One fit per model on observed data; failures are kept per model.
pub fn run_fit(models: &[ModelSpec], data: &[SubjectRecord], threads: usize) -> Result<Vec<std::result::Result<FitResult, ModelError>>> {
    run_pool(threads, models.len(), |i| Ok(fit(&models[i], data, &FitOptions::default())))
}
