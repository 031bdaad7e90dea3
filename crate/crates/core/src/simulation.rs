//! Semi-competing-risks data generation by the conditional distribution method.

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::likelihood::{ModelSpec, ParameterVector, SubjectModel, SubjectRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub spec: ModelSpec,
    pub truth: ParameterVector,
    pub n: usize,
    pub covariate_prevalences: Vec<f64>,
    /// Censoring times are Uniform(0, censor_max).
    pub censor_max: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.check_params(self.truth.as_slice())?;
        if self.covariate_prevalences.len() != self.spec.p {
            return Err(ModelError::DimensionMismatch {
                expected: self.spec.p,
                actual: self.covariate_prevalences.len(),
            });
        }
        if let Some(&bad) = self.covariate_prevalences.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(ModelError::ProbabilityOutOfRange(bad));
        }
        if !(self.censor_max > 0.0 && self.censor_max.is_finite()) {
            return Err(ModelError::InvalidConfig(format!("censor_max must be positive, got {}", self.censor_max)));
        }
        if self.n == 0 {
            return Err(ModelError::InvalidConfig("n must be at least 1".into()));
        }
        Ok(())
    }
}

/// Latent quantities behind one simulated record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentDraw {
    /// `+inf` when the survival level lies below a Gompertz survival floor.
    pub t1: f64,
    pub t2: f64,
    pub c: f64,
    pub u: f64,
    pub v: f64,
    pub q: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    pub records: Vec<SubjectRecord>,
    pub latent: Vec<LatentDraw>,
    pub infinite_t1: usize,
    pub infinite_t2: usize,
}

/// Generator for replication `stream` of a configuration's seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Observed records for stream 0 of `config.seed`.
pub fn simulate(config: &SimConfig) -> Result<Vec<SubjectRecord>> {
    Ok(simulate_stream(config, 0)?.records)
}

/// Records plus latent trace for one replication stream.
pub fn simulate_stream(config: &SimConfig, stream: u64) -> Result<Simulation> {
    config.validate()?;
    let mut rng = stream_rng(config.seed, stream);
    let spec = &config.spec;
    let params = spec.unpack(config.truth.as_slice());
    let mut out = Simulation {
        records: Vec::with_capacity(config.n),
        latent: Vec::with_capacity(config.n),
        infinite_t1: 0,
        infinite_t2: 0,
    };
    for _ in 0..config.n {
        let w: Vec<f64> = config
            .covariate_prevalences
            .iter()
            .map(|&p| if rng.gen_bool(p) { 1.0 } else { 0.0 })
            .collect();
        let model = SubjectModel::resolve(spec, &params, &w);
        let u: f64 = rng.sample(Open01);
        let q: f64 = rng.sample(Open01);
        let c = config.censor_max * rng.sample::<f64, _>(Open01);
        let v = model.copula.conditional_inverse(u, q)?;
        let t1 = latent_time(model.nonterminal.inverse_survival(u))?;
        let t2 = latent_time(model.terminal.inverse_survival(v))?;
        out.infinite_t1 += usize::from(t1.is_infinite());
        out.infinite_t2 += usize::from(t2.is_infinite());
        let y = t2.min(c);
        let x = t1.min(y);
        out.records.push(SubjectRecord { x, d1: t1 <= y, y, d2: t2 <= c, w });
        out.latent.push(LatentDraw { t1, t2, c, u, v, q });
    }
    Ok(out)
}

fn latent_time(t: Result<f64>) -> Result<f64> {
    match t {
        Err(ModelError::BelowSurvivalFloor { .. }) => Ok(f64::INFINITY),
        other => other,
    }
}

/// Proportions of records with `d1 = 0`, `d2 = 0`, and both zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensoringSummary {
    pub nonterminal_censored: f64,
    pub terminal_censored: f64,
    pub both_censored: f64,
}

pub fn summarize_censoring(data: &[SubjectRecord]) -> CensoringSummary {
    let n = data.len().max(1) as f64;
    let count = |pred: &dyn Fn(&SubjectRecord) -> bool| data.iter().filter(|r| pred(r)).count() as f64 / n;
    CensoringSummary {
        nonterminal_censored: count(&|r| !r.d1),
        terminal_censored: count(&|r| !r.d2),
        both_censored: count(&|r| !r.d1 && !r.d2),
    }
}
