//! JSON study configuration.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::presets;
use crate::copulas::CopulaFamily;
use crate::error::{ModelError, Result};
use crate::likelihood::{ModelSpec, ParameterVector};
use crate::margins::MarginFamily;
use crate::simulation::SimConfig;

pub const DEFAULT_REPLICATIONS: usize = 200;
pub const DEFAULT_N: usize = 1000;
pub const DEFAULT_SEED: u64 = 20_240_517;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Fit,
    Study1,
    Study2,
}

/// Coefficients of a generating model; shapes are natural (alpha or gamma).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSection {
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(default)]
    pub shapes: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_copula")]
    pub copula: CopulaFamily,
    #[serde(default = "default_margin")]
    pub margin: MarginFamily,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_censor_max")]
    pub censor_max: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Defaults to the preset prevalences of the study kind.
    #[serde(default)]
    pub covariate_prevalences: Option<Vec<f64>>,
    /// Defaults to the preset truth of the study kind.
    #[serde(default)]
    pub truth: Option<TruthSection>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            copula: default_copula(),
            margin: default_margin(),
            n: DEFAULT_N,
            censor_max: presets::CENSOR_MAX,
            seed: DEFAULT_SEED,
            covariate_prevalences: None,
            truth: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelChoice {
    pub copula: CopulaFamily,
    pub margin: MarginFamily,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default)]
    pub kind: Option<StudyKind>,
    #[serde(default = "default_reps")]
    pub replications: usize,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub models_to_fit: Vec<ModelChoice>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "default_threads")]
    pub threads: usize,
    /// CSV dataset for `fit`.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub covariate_names: Option<Vec<String>>,
    /// Times at which fitted hazards are tabulated.
    #[serde(default)]
    pub time_grid: Vec<f64>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            kind: None,
            replications: DEFAULT_REPLICATIONS,
            sim: SimSection::default(),
            models_to_fit: Vec::new(),
            output: None,
            threads: 1,
            data: None,
            covariate_names: None,
            time_grid: Vec::new(),
        }
    }
}

fn default_copula() -> CopulaFamily {
    CopulaFamily::Clayton
}
fn default_margin() -> MarginFamily {
    MarginFamily::Exponential
}
fn default_n() -> usize {
    DEFAULT_N
}
fn default_censor_max() -> f64 {
    presets::CENSOR_MAX
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_reps() -> usize {
    DEFAULT_REPLICATIONS
}
fn default_threads() -> usize {
    1
}

/// Everything a study run needs, resolved from a [`StudyConfig`].
#[derive(Clone, Debug, PartialEq)]
pub struct StudyPlan {
    pub kind: StudyKind,
    pub sim: SimConfig,
    pub replications: usize,
    pub models: Vec<ModelSpec>,
    pub threads: usize,
    pub covariate_names: Vec<String>,
}

impl StudyConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ModelError::InvalidConfig(e.to_string()))
    }

    /// Resolves defaults for `kind` and checks consistency.
    pub fn plan(&self, kind: StudyKind) -> Result<StudyPlan> {
        if self.replications == 0 {
            return Err(ModelError::InvalidConfig("replications must be at least 1".into()));
        }
        if self.threads == 0 {
            return Err(ModelError::InvalidConfig("threads must be at least 1".into()));
        }
        let sim = self.sim_config(kind)?;
        let p = sim.spec.p;
        let models: Vec<ModelSpec> = if self.models_to_fit.is_empty() {
            match kind {
                StudyKind::Study2 => MarginFamily::ALL.iter().map(|&m| ModelSpec::new(sim.spec.copula, m, p)).collect(),
                _ => vec![sim.spec],
            }
        } else {
            self.models_to_fit.iter().map(|m| ModelSpec::new(m.copula, m.margin, p)).collect()
        };
        if kind == StudyKind::Study2 {
            let mut margins: Vec<MarginFamily> = Vec::new();
            for m in &models {
                if !margins.contains(&m.margin) {
                    margins.push(m.margin);
                }
            }
            if margins.len() < 2 {
                return Err(ModelError::InvalidConfig("study2 needs at least two margin families in models_to_fit".into()));
            }
        }
        let covariate_names = self.covariate_names(p)?;
        Ok(StudyPlan { kind, sim, replications: self.replications, models, threads: self.threads, covariate_names })
    }

    pub fn covariate_names(&self, p: usize) -> Result<Vec<String>> {
        match &self.covariate_names {
            Some(names) if names.len() == p => Ok(names.clone()),
            Some(names) => Err(ModelError::InvalidConfig(format!(
                "covariate_names has {} entries for {p} covariates",
                names.len()
            ))),
            None => Ok(default_covariate_names(p)),
        }
    }

    /// Generating configuration; preset truth and prevalences fill gaps.
    pub fn sim_config(&self, kind: StudyKind) -> Result<SimConfig> {
        let s = &self.sim;
        let prevalences = match &s.covariate_prevalences {
            Some(p) => p.clone(),
            None => match kind {
                StudyKind::Study2 => presets::STUDY2_PREVALENCES.to_vec(),
                _ => presets::STUDY1_PREVALENCES.to_vec(),
            },
        };
        let spec = ModelSpec::new(s.copula, s.margin, prevalences.len());
        let truth = match &s.truth {
            Some(t) => ParameterVector::from_parts(&spec, &t.a, &t.c, &t.b, &t.shapes)?,
            None => preset_truth(&spec, kind)?,
        };
        let cfg = SimConfig {
            spec,
            truth,
            n: s.n,
            covariate_prevalences: prevalences,
            censor_max: s.censor_max,
            seed: s.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn preset_truth(spec: &ModelSpec, kind: StudyKind) -> Result<ParameterVector> {
    let missing = || {
        ModelError::InvalidConfig(format!(
            "no preset truth for {} with {} covariates; give sim.truth",
            spec.label(),
            spec.p
        ))
    };
    match (kind, spec.p, spec.margin) {
        (StudyKind::Study2, 1, m) => Ok(presets::study2_truth(spec.copula, m)),
        (_, 3, MarginFamily::Exponential) => Ok(presets::study1_truth(spec.copula)),
        (_, 1, m) => Ok(presets::study2_truth(spec.copula, m)),
        _ => Err(missing()),
    }
}

pub fn default_covariate_names(p: usize) -> Vec<String> {
    match p {
        3 => vec!["age".into(), "female".into(), "living_donor".into()],
        1 => vec!["age".into()],
        _ => (1..=p).map(|k| format!("w{k}")).collect(),
    }
}
