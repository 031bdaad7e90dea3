//! Cox proportional hazards fit by Newton-Raphson on the Breslow partial likelihood.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::margins::{hazard_ratio, HazardRatioEstimate};

/// Coefficients beyond this magnitude are treated as a monotone likelihood.
pub const SEPARATION_BOUND: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoxOptions {
    pub max_iter: usize,
    /// Tolerance on the largest absolute score component.
    pub tol: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-9 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub coefficients: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub hr: Vec<HazardRatioEstimate>,
    pub loglik: f64,
    pub null_loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub separation: bool,
    pub singular_information: bool,
    pub score_norm: f64,
}

struct PartialLikelihood<'a> {
    times: &'a [f64],
    events: &'a [bool],
    w: &'a [&'a [f64]],
    /// Indices by decreasing time.
    order: Vec<usize>,
}

impl PartialLikelihood<'_> {
    /// Log partial likelihood, score and information at `beta`.
    fn evaluate(&self, beta: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let p = beta.len();
        let mut ll = 0.0;
        let mut score = DVector::zeros(p);
        let mut info = DMatrix::zeros(p, p);
        let (mut s0, mut s1, mut s2) = (0.0, DVector::zeros(p), DMatrix::zeros(p, p));
        let mut i = 0;
        while i < self.order.len() {
            // add the whole tied group to the risk set before scoring its events
            let t = self.times[self.order[i]];
            let mut j = i;
            while j < self.order.len() && self.times[self.order[j]] == t {
                let k = self.order[j];
                let wk = DVector::from_column_slice(self.w[k]);
                let r = wk.dot(&DVector::from_column_slice(beta)).exp();
                s0 += r;
                s1 += &wk * r;
                s2 += &wk * wk.transpose() * r;
                j += 1;
            }
            let mean = &s1 / s0;
            for &k in &self.order[i..j] {
                if self.events[k] {
                    let wk = DVector::from_column_slice(self.w[k]);
                    ll += wk.dot(&DVector::from_column_slice(beta)) - s0.ln();
                    score += &wk - &mean;
                    info += &s2 / s0 - &mean * mean.transpose();
                }
            }
            i = j;
        }
        (ll, score, info)
    }
}

/// Fits the Cox model; `w[i]` holds subject `i`'s covariates.
pub fn cox_fit(times: &[f64], events: &[bool], w: &[&[f64]], options: &CoxOptions) -> Result<CoxFit> {
    let n = times.len();
    if n == 0 {
        return Err(ModelError::EmptyData);
    }
    if events.len() != n || w.len() != n {
        return Err(ModelError::DimensionMismatch { expected: n, actual: events.len().min(w.len()) });
    }
    let p = w[0].len();
    for (index, (&t, wi)) in times.iter().zip(w).enumerate() {
        if !(t > 0.0 && t.is_finite()) {
            return Err(ModelError::InvalidRecord { index, reason: format!("time must be positive, got {t}") });
        }
        if wi.len() != p {
            return Err(ModelError::DimensionMismatch { expected: p, actual: wi.len() });
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
    let pl = PartialLikelihood { times, events, w, order };

    let mut beta = vec![0.0; p];
    let (null_loglik, mut score, mut info) = pl.evaluate(&beta);
    let mut ll = null_loglik;
    let mut iterations = 0;
    let mut converged = false;
    let mut separation = false;
    loop {
        if score.amax() <= options.tol {
            converged = true;
            break;
        }
        if iterations >= options.max_iter {
            break;
        }
        iterations += 1;
        let Some(step) = info.clone().cholesky().map(|c| c.solve(&score)) else {
            separation = true;
            break;
        };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            let (ll_t, score_t, info_t) = pl.evaluate(&trial);
            // near the optimum the gain is below rounding in ll; a smaller score decides
            let flat = ll_t >= ll - 1e-12 * (1.0 + ll.abs()) && score_t.amax() < score.amax();
            if ll_t.is_finite() && (ll_t > ll || flat) {
                moved = trial != beta;
                beta = trial;
                ll = ll_t;
                score = score_t;
                info = info_t;
                break;
            }
            t *= 0.5;
        }
        if beta.iter().any(|b| b.abs() > SEPARATION_BOUND) {
            separation = true;
            break;
        }
        if !moved {
            break;
        }
    }
    let converged = converged && !separation;
    let (covariance, singular_information) = invert(&info);
    let hr = (0..p).map(|k| hazard_ratio(beta[k], covariance[(k, k)])).collect();
    Ok(CoxFit {
        covariance: (0..p).map(|i| (0..p).map(|j| covariance[(i, j)]).collect()).collect(),
        hr,
        loglik: ll,
        null_loglik,
        iterations,
        converged,
        separation,
        singular_information,
        score_norm: score.amax(),
        coefficients: beta,
    })
}

fn invert(info: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    if info.nrows() == 0 {
        return (DMatrix::zeros(0, 0), false);
    }
    if let Some(c) = info.clone().cholesky() {
        let inv = c.inverse();
        return ((&inv + inv.transpose()) * 0.5, false);
    }
    let eig = SymmetricEigen::new(info.clone());
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let floor = if max > 0.0 { 1e-10 * max } else { 1e-10 };
    let vals = eig.eigenvalues.map(|l| 1.0 / l.max(floor));
    let q = &eig.eigenvectors;
    (q * DMatrix::from_diagonal(&vals) * q.transpose(), true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_subjects_separate() {
        let w: [&[f64]; 2] = [&[1.0], &[0.0]];
        let fit = cox_fit(&[1.0, 2.0], &[true, true], &w, &CoxOptions::default()).unwrap();
        assert!(fit.separation);
        assert!(!fit.converged);
        assert!(fit.coefficients[0] > 10.0);
    }

    #[test]
    fn zero_covariates_give_null_fit() {
        let times = [3.0, 1.0, 2.0, 2.0, 5.0];
        let events = [true, false, true, true, false];
        let zeros = [0.0];
        let w: Vec<&[f64]> = vec![&zeros; 5];
        let fit = cox_fit(&times, &events, &w, &CoxOptions::default()).unwrap();
        assert_eq!(fit.coefficients, vec![0.0]);
        assert_eq!(fit.loglik, fit.null_loglik);
        // Breslow: risk sets {t >= 2}: 4 subjects (two events), {t >= 3}: 2 subjects
        let expected = -2.0 * 4f64.ln() - 2f64.ln();
        assert!((fit.null_loglik - expected).abs() < 1e-12);
        assert!(fit.singular_information);
    }

    #[test]
    fn hand_checked_single_covariate() {
        // events at 1 (w=1) and 3 (w=0); censored at 2 (w=0) and 4 (w=1)
        let times = [1.0, 2.0, 3.0, 4.0];
        let events = [true, false, true, false];
        let w: Vec<&[f64]> = vec![&[1.0], &[0.0], &[0.0], &[1.0]];
        let fit = cox_fit(&times, &events, &w, &CoxOptions::default()).unwrap();
        assert!(fit.converged);
        // l(b) = b - ln(2e^b + 2) - ln(1 + e^b); score zero at e^b = sqrt(2)... solve numerically
        let l = |b: f64| b - (2.0 * b.exp() + 2.0).ln() - (1.0 + b.exp()).ln();
        let b = fit.coefficients[0];
        let h = 1e-5;
        assert!(((l(b + h) - l(b - h)) / (2.0 * h)).abs() < 1e-8);
        assert!((fit.loglik - l(b)).abs() < 1e-12);
        assert!(fit.score_norm <= 1e-9);
    }

    #[test]
    fn time_rescaling_leaves_coefficients_unchanged() {
        let times: Vec<f64> = (1..=30).map(|i| ((i * 37) % 101) as f64 / 10.0 + 0.1).collect();
        let events: Vec<bool> = (0..30).map(|i| i % 4 != 0).collect();
        let cov: Vec<[f64; 2]> = (0..30).map(|i| [(i % 2) as f64, ((i / 3) % 2) as f64]).collect();
        let w: Vec<&[f64]> = cov.iter().map(|c| c.as_slice()).collect();
        let a = cox_fit(&times, &events, &w, &CoxOptions::default()).unwrap();
        let scaled: Vec<f64> = times.iter().map(|t| t * 7.3).collect();
        let b = cox_fit(&scaled, &events, &w, &CoxOptions::default()).unwrap();
        assert!(a.converged);
        for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let w: Vec<&[f64]> = vec![&[1.0]];
        assert!(cox_fit(&[0.0], &[true], &w, &CoxOptions::default()).is_err());
        assert!(cox_fit(&[], &[], &[], &CoxOptions::default()).is_err());
    }
}
