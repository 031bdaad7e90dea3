//! Maximum-likelihood fitting, observed-information covariance, Delta-method
//! variances and AIC model selection.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::copulas::CopulaFamily;
use crate::error::{ModelError, Result};
use crate::likelihood::{univariate_loglik, validate_records, LogLikelihood, ModelSpec, ParameterVector, SubjectRecord};
use crate::margins::{hazard_ratio, predictor_unchecked, HazardRatioEstimate, MarginFamily, Z_95};
use crate::optimize::{bfgs, central_gradient, fd_step, nelder_mead, scaled_gradient_norm, BfgsOptions, NelderMeadOptions};

/// Relative eigenvalue floor applied to a non positive definite information matrix.
pub const EIGEN_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    pub simplex: NelderMeadOptions,
    pub polish: BfgsOptions,
    /// Packed start; [`initial_values`] when absent.
    pub start: Option<ParameterVector>,
    /// Indices held at their start value.
    pub fixed: Vec<usize>,
    /// Optimize Weibull shapes on the log scale (the packed convention) or on
    /// the natural scale.
    pub log_shape: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            simplex: NelderMeadOptions::default(),
            polish: BfgsOptions::default(),
            start: None,
            fixed: Vec::new(),
            log_shape: true,
        }
    }
}

impl FitOptions {
    /// Fixes `b_1..b_p` at zero so only the copula intercept is free.
    pub fn constant_association(mut self, spec: &ModelSpec) -> Self {
        self.fixed.extend(spec.b_range().skip(1));
        self
    }
}

/// Whether the covariance came straight from the inverted information matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianStatus {
    PositiveDefinite,
    EigenvalueFloored,
}

/// Association parameter at one covariate pattern with Delta-method variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssociationValue {
    pub w: Vec<f64>,
    pub theta: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub params_hat: ParameterVector,
    /// Covariance in the packed parameterization; rows of fixed entries are zero.
    pub covariance: DMatrix<f64>,
    pub loglik: f64,
    pub aic: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub gradient_norm: f64,
    pub hessian_status: HessianStatus,
    pub free_params: usize,
    pub hr_nonterminal: Vec<HazardRatioEstimate>,
    pub hr_terminal: Vec<HazardRatioEstimate>,
    pub theta_by_group: Vec<AssociationValue>,
}

impl FitResult {
    pub fn std_error(&self, index: usize) -> f64 {
        self.covariance[(index, index)].max(0.0).sqrt()
    }

    /// Wald 95% interval of a packed coefficient.
    pub fn coef_ci(&self, index: usize) -> (f64, f64) {
        let half = Z_95 * self.std_error(index);
        let v = self.params_hat.0[index];
        (v - half, v + half)
    }

    pub fn b_hat(&self) -> &[f64] {
        &self.params_hat.0[self.spec.b_range()]
    }

    /// Covariance block of the association coefficients.
    pub fn cov_b(&self) -> DMatrix<f64> {
        let r = self.spec.b_range();
        self.covariance.view((r.start, r.start), (r.len(), r.len())).into_owned()
    }
}

/// Objective in the optimizer's coordinates: free parameters only, Weibull
/// shapes optionally natural.
struct Objective<'a> {
    ll: LogLikelihood<'a>,
    base: Vec<f64>,
    free: Vec<usize>,
    natural_shapes: Vec<usize>,
}

impl Objective<'_> {
    fn expand(&self, z: &[f64]) -> Option<Vec<f64>> {
        let mut full = self.base.clone();
        for (&i, &v) in self.free.iter().zip(z) {
            full[i] = v;
        }
        for &i in &self.natural_shapes {
            if full[i] <= 0.0 {
                return None;
            }
            full[i] = full[i].ln();
        }
        Some(full)
    }

    fn to_optimizer(&self, packed: &[f64]) -> Vec<f64> {
        self.free
            .iter()
            .map(|&i| if self.natural_shapes.contains(&i) { packed[i].exp() } else { packed[i] })
            .collect()
    }

    fn loglik(&self, z: &[f64]) -> f64 {
        match self.expand(z) {
            Some(full) => self.ll.eval(&full),
            None => f64::NEG_INFINITY,
        }
    }
}

/// Maximizes the joint log-likelihood.
pub fn fit(spec: &ModelSpec, data: &[SubjectRecord], options: &FitOptions) -> Result<FitResult> {
    let p = validate_records(data)?;
    if p != spec.p {
        return Err(ModelError::DimensionMismatch { expected: spec.p, actual: p });
    }
    let start = match &options.start {
        Some(s) => {
            spec.check_params(s.as_slice())?;
            s.clone()
        }
        None => initial_values(spec, data)?,
    };
    let k = spec.n_params();
    if let Some(&bad) = options.fixed.iter().find(|&&i| i >= k) {
        return Err(ModelError::DimensionMismatch { expected: k, actual: bad + 1 });
    }
    let free: Vec<usize> = (0..k).filter(|i| !options.fixed.contains(i)).collect();
    let natural_shapes = match (spec.margin, spec.shape_indices(), options.log_shape) {
        (MarginFamily::Weibull, Some((i, j)), false) => {
            [i, j].into_iter().filter(|x| free.contains(x)).collect()
        }
        _ => Vec::new(),
    };
    let objective = Objective {
        ll: LogLikelihood::new(*spec, data),
        base: start.0.clone(),
        free,
        natural_shapes,
    };
    let neg = |z: &[f64]| -objective.loglik(z);

    let z0 = objective.to_optimizer(start.as_slice());
    let f0 = neg(&z0);
    if !f0.is_finite() {
        return Err(ModelError::NonFinite("log-likelihood at start"));
    }
    let mut neg_mut = neg;
    let g0 = central_gradient(&mut neg_mut, &z0);
    let mut evaluations = 1 + 2 * z0.len();
    let mut iterations = 0;
    let (z, f, converged) = if scaled_gradient_norm(&g0, &z0, f0) <= options.polish.grad_tol {
        (z0, f0, true)
    } else {
        let simplex = nelder_mead(neg, &z0, &options.simplex);
        let polish = bfgs(neg, &simplex.x, &options.polish);
        evaluations += simplex.evaluations + polish.evaluations;
        iterations += simplex.iterations + polish.iterations;
        log::debug!(
            "{}: simplex {} iters f={:.6}, polish {} iters f={:.6}",
            spec.label(),
            simplex.iterations,
            simplex.f,
            polish.iterations,
            polish.f
        );
        (polish.x, polish.f, polish.converged)
    };
    let mut neg_mut = neg;
    let grad = central_gradient(&mut neg_mut, &z);
    let gradient_norm = scaled_gradient_norm(&grad, &z, f);

    let hessian = hessian_of(|x| objective.loglik(x), &z)?;
    let (cov_free, hessian_status) = invert_information(&(-hessian));

    let full = objective.expand(&z).ok_or(ModelError::NonFinite("optimum"))?;
    let mut covariance = DMatrix::zeros(k, k);
    for (a, &i) in objective.free.iter().enumerate() {
        for (b, &j) in objective.free.iter().enumerate() {
            // natural-scale shapes map back to log scale through d log(x)/dx
            let si = if objective.natural_shapes.contains(&i) { 1.0 / z[a] } else { 1.0 };
            let sj = if objective.natural_shapes.contains(&j) { 1.0 / z[b] } else { 1.0 };
            covariance[(i, j)] = si * sj * cov_free[(a, b)];
        }
    }
    let loglik = -f;
    let free_params = objective.free.len();
    let params_hat = ParameterVector(full);

    let hr = |range: std::ops::Range<usize>| -> Vec<HazardRatioEstimate> {
        range.skip(1).map(|i| hazard_ratio(params_hat.0[i], covariance[(i, i)])).collect()
    };
    let hr_nonterminal = hr(spec.a_range());
    let hr_terminal = hr(spec.c_range());
    let b = &params_hat.0[spec.b_range()];
    let br = spec.b_range();
    let cov_b = covariance.view((br.start, br.start), (br.len(), br.len())).into_owned();
    let theta_by_group = reporting_patterns(spec.p)
        .into_iter()
        .map(|w| {
            let theta = spec.copula.theta_from_predictor(predictor_unchecked(b, &w));
            let variance = delta_var_theta(spec.copula, b, &cov_b, &w).unwrap_or(f64::NAN);
            let half = Z_95 * variance.max(0.0).sqrt();
            AssociationValue { w, theta, variance, ci_low: theta - half, ci_high: theta + half }
        })
        .collect();

    Ok(FitResult {
        spec: *spec,
        covariance,
        loglik,
        aic: aic(free_params, loglik),
        converged,
        iterations,
        evaluations,
        gradient_norm,
        hessian_status,
        free_params,
        hr_nonterminal,
        hr_terminal,
        theta_by_group,
        params_hat,
    })
}

/// The all-zero pattern followed by each single-covariate-on pattern.
pub fn reporting_patterns(p: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; p]];
    for k in 0..p {
        let mut w = vec![0.0; p];
        w[k] = 1.0;
        out.push(w);
    }
    out
}

/// Inverse of the information matrix, flooring eigenvalues when it is not
/// positive definite.
fn invert_information(info: &DMatrix<f64>) -> (DMatrix<f64>, HessianStatus) {
    let n = info.nrows();
    if n == 0 {
        return (DMatrix::zeros(0, 0), HessianStatus::PositiveDefinite);
    }
    if let Some(chol) = info.clone().cholesky() {
        let inv = chol.inverse();
        return (symmetrize(inv), HessianStatus::PositiveDefinite);
    }
    let eig = SymmetricEigen::new(info.clone());
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let floor = if max > 0.0 { EIGEN_FLOOR * max } else { EIGEN_FLOOR };
    let inv_vals = eig.eigenvalues.map(|l| 1.0 / l.max(floor));
    let q = &eig.eigenvectors;
    let inv = q * DMatrix::from_diagonal(&inv_vals) * q.transpose();
    (symmetrize(inv), HessianStatus::EigenvalueFloored)
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Symmetric central-difference Hessian of `f` with steps [`fd_step`].
pub fn hessian_of<F: Fn(&[f64]) -> f64>(f: F, x: &[f64]) -> Result<DMatrix<f64>> {
    let n = x.len();
    let f0 = f(x);
    let h: Vec<f64> = x.iter().map(|&v| fd_step(v)).collect();
    let mut probe = x.to_vec();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        probe[i] = x[i] + h[i];
        let up = f(&probe);
        probe[i] = x[i] - h[i];
        let down = f(&probe);
        probe[i] = x[i];
        out[(i, i)] = (up - 2.0 * f0 + down) / (h[i] * h[i]);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| {
                probe[i] = x[i] + si * h[i];
                probe[j] = x[j] + sj * h[j];
                let v = f(&probe);
                probe[i] = x[i];
                probe[j] = x[j];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * h[i] * h[j]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    for i in 0..n {
        for j in 0..n {
            if !out[(i, j)].is_finite() {
                return Err(ModelError::NonFiniteHessian { row: i, col: j });
            }
        }
    }
    Ok(symmetrize(out))
}

/// Hessian of the dataset log-likelihood in the packed parameterization.
pub fn numerical_hessian(spec: &ModelSpec, params: &ParameterVector, data: &[SubjectRecord]) -> Result<DMatrix<f64>> {
    spec.check_params(params.as_slice())?;
    let p = validate_records(data)?;
    if p != spec.p {
        return Err(ModelError::DimensionMismatch { expected: spec.p, actual: p });
    }
    let ll = LogLikelihood::new(*spec, data);
    if !ll.eval(params.as_slice()).is_finite() {
        return Err(ModelError::NonFinite("log-likelihood at Hessian centre"));
    }
    hessian_of(|x| ll.eval(x), params.as_slice())
}

/// Delta-method variance of `theta = g(b_0 + sum b_k w_k)`.
pub fn delta_var_theta(family: CopulaFamily, b_hat: &[f64], cov_b: &DMatrix<f64>, w: &[f64]) -> Result<f64> {
    let q = b_hat.len();
    if w.len() + 1 != q {
        return Err(ModelError::DimensionMismatch { expected: q - 1, actual: w.len() });
    }
    if cov_b.nrows() != q || cov_b.ncols() != q {
        return Err(ModelError::DimensionMismatch { expected: q, actual: cov_b.nrows() });
    }
    let eta = predictor_unchecked(b_hat, w);
    let slope = family.link_derivative(eta);
    let grad: Vec<f64> = std::iter::once(1.0).chain(w.iter().copied()).map(|wk| slope * wk).collect();
    let mut var = 0.0;
    for i in 0..q {
        for j in 0..q {
            var += grad[i] * cov_b[(i, j)] * grad[j];
        }
    }
    if !var.is_finite() {
        return Err(ModelError::NonFinite("delta variance"));
    }
    if var < -1e-12 {
        return Err(ModelError::NotPositiveSemidefinite(var));
    }
    Ok(var.max(0.0))
}

/// `2k - 2 logL`.
pub fn aic(k: usize, loglik: f64) -> f64 {
    2.0 * k as f64 - 2.0 * loglik
}

/// Index of the lowest AIC; ties go to fewer free parameters, then to the earlier fit.
pub fn select_best(fits: &[FitResult]) -> Option<usize> {
    select_best_by(fits.iter().map(|f| (f.aic, f.free_params)))
}

/// [`select_best`] over `(aic, parameter count)` pairs.
pub fn select_best_by(scores: impl IntoIterator<Item = (f64, usize)>) -> Option<usize> {
    let mut best: Option<(usize, f64, usize)> = None;
    for (i, (a, k)) in scores.into_iter().enumerate() {
        if a.is_nan() {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, ba, bk)) => a < ba || (a == ba && k < bk),
        };
        if better {
            best = Some((i, a, k));
        }
    }
    best.map(|(i, _, _)| i)
}

/// Start values from separate censored fits of each margin, with the copula
/// next to independence.
pub fn initial_values(spec: &ModelSpec, data: &[SubjectRecord]) -> Result<ParameterVector> {
    let p = validate_records(data)?;
    if p != spec.p {
        return Err(ModelError::DimensionMismatch { expected: spec.p, actual: p });
    }
    let covariates: Vec<&[f64]> = data.iter().map(|r| r.w.as_slice()).collect();
    let x: Vec<f64> = data.iter().map(|r| r.x).collect();
    let d1: Vec<bool> = data.iter().map(|r| r.d1).collect();
    let y: Vec<f64> = data.iter().map(|r| r.y).collect();
    let d2: Vec<bool> = data.iter().map(|r| r.d2).collect();
    let (a, s1) = univariate_fit(spec.margin, &x, &d1, &covariates);
    let (c, s2) = univariate_fit(spec.margin, &y, &d2, &covariates);

    let mut v = Vec::with_capacity(spec.n_params());
    v.extend(a);
    v.extend(c);
    v.push(spec.copula.initial_intercept());
    v.extend(std::iter::repeat_n(0.0, spec.p));
    if spec.shape_indices().is_some() {
        v.push(s1);
        v.push(s2);
    }
    spec.check_params(&v)?;
    Ok(ParameterVector(v))
}

/// Censored MLE of one margin: `(coefficients, stored shape)`.
pub fn univariate_fit(family: MarginFamily, times: &[f64], events: &[bool], covariates: &[&[f64]]) -> (Vec<f64>, f64) {
    let p = covariates.first().map_or(0, |w| w.len());
    let fallback = moment_rate(times, events);
    let mut z0 = vec![0.0; p + 1];
    z0[0] = fallback;
    let shaped = family.shape_count() == 1;
    if shaped {
        z0.push(0.0);
    }
    let neg = |z: &[f64]| {
        let shape = if shaped { z[p + 1] } else { 0.0 };
        -univariate_loglik(family, &z[..=p], shape, times, events, covariates)
    };
    let res = bfgs(neg, &z0, &BfgsOptions { max_iter: 200, grad_tol: 1e-7 });
    let usable = res.f.is_finite() && res.x.iter().all(|v| v.is_finite() && v.abs() < 30.0);
    let z = if usable { res.x } else { z0 };
    let shape = if shaped { z[p + 1] } else { 0.0 };
    (z[..=p].to_vec(), shape)
}

/// `log(events / total time)`, with half an event when none were observed.
fn moment_rate(times: &[f64], events: &[bool]) -> f64 {
    let total: f64 = times.iter().sum();
    let count = events.iter().filter(|&&d| d).count() as f64;
    (count.max(0.5) / total.max(f64::MIN_POSITIVE)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aic_arithmetic_and_ties() {
        assert_eq!(aic(8, -1000.0), 2016.0);
        assert_eq!(select_best_by([(10.0, 3), (10.0, 3)]), Some(0));
        assert_eq!(select_best_by([(10.0, 5), (10.0, 3)]), Some(1));
        assert_eq!(select_best_by([(11.0, 1), (10.0, 9), (12.0, 1)]), Some(1));
        assert_eq!(select_best_by(std::iter::empty()), None);
    }

    #[test]
    fn aic_order_ignores_constant_offset() {
        let lls = [-1000.0, -998.5, -1003.0, -999.0];
        let ks = [3, 5, 5, 4];
        let pick = |offset: f64| select_best_by(lls.iter().zip(ks).map(|(l, k)| (aic(k, l + offset), k)));
        assert_eq!(pick(0.0), pick(12345.678));
        assert_eq!(pick(0.0), pick(-77.0));
    }

    #[test]
    fn hessian_of_quadratic_is_exact() {
        let f = |x: &[f64]| 3.0 * x[0] * x[0] - 2.0 * x[0] * x[1] + 0.5 * x[1] * x[1] + 7.0 * x[2] * x[2] + x[0];
        let exact = DMatrix::from_row_slice(3, 3, &[6.0, -2.0, 0.0, -2.0, 1.0, 0.0, 0.0, 0.0, 14.0]);
        let h = hessian_of(f, &[0.0, 0.0, 0.0]).unwrap();
        assert!((h - &exact).abs().max() < 1e-6);
        // away from the origin the error is rounding in f over h^2
        let h = hessian_of(f, &[0.3, -1.2, 2.0]).unwrap();
        assert!((h - exact).abs().max() < 1e-3);
    }

    #[test]
    fn hessian_reports_non_finite_entry() {
        let f = |x: &[f64]| if x[1] > 1.0 { f64::NAN } else { x[0] * x[1] };
        assert!(matches!(hessian_of(f, &[0.0, 1.0]), Err(ModelError::NonFiniteHessian { .. })));
    }

    #[test]
    fn delta_variance_cases() {
        let zero = DMatrix::zeros(2, 2);
        for fam in CopulaFamily::ALL {
            assert_eq!(delta_var_theta(fam, &[0.3, 0.2], &zero, &[1.0]).unwrap(), 0.0);
        }
        let cov = DMatrix::from_row_slice(2, 2, &[0.04, -0.01, -0.01, 0.09]);
        let (b0, b1) = (0.35, 0.28);
        let eta: f64 = b0 + b1;
        let e2 = (2.0 * eta).exp();
        let expected = 16.0 * (4.0 * eta).exp() / (e2 + 1.0).powi(4) * (0.04 + 2.0 * -0.01 + 0.09);
        let got = delta_var_theta(CopulaFamily::Normal, &[b0, b1], &cov, &[1.0]).unwrap();
        assert!((got - expected).abs() < 1e-14);
        let frank = delta_var_theta(CopulaFamily::Frank, &[b0, b1], &cov, &[0.0]).unwrap();
        assert!((frank - 0.04).abs() < 1e-15);
        let clayton = delta_var_theta(CopulaFamily::Clayton, &[b0, b1], &cov, &[1.0]).unwrap();
        assert!((clayton - (2.0 * eta).exp() * 0.11).abs() < 1e-14);
        let gumbel = delta_var_theta(CopulaFamily::Gumbel, &[b0, b1], &cov, &[1.0]).unwrap();
        assert!((gumbel - clayton).abs() < 1e-15);
        let bad = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            delta_var_theta(CopulaFamily::Frank, &[0.0, 0.0], &bad, &[0.0]),
            Err(ModelError::NotPositiveSemidefinite(_))
        ));
        assert!(delta_var_theta(CopulaFamily::Frank, &[0.0, 0.0], &zero, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn floored_information_is_flagged() {
        let info = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let (cov, status) = invert_information(&info);
        assert_eq!(status, HessianStatus::EigenvalueFloored);
        let eig = SymmetricEigen::new(cov.clone());
        assert!(eig.eigenvalues.iter().all(|&l| l > 0.0));
        assert_eq!(cov, cov.transpose());
        let (_, ok) = invert_information(&DMatrix::identity(3, 3));
        assert_eq!(ok, HessianStatus::PositiveDefinite);
    }

    #[test]
    fn exponential_start_is_closed_form_mle() {
        let data: Vec<SubjectRecord> = (1..=20)
            .map(|i| {
                let t = i as f64 * 0.7;
                SubjectRecord::new(t, i % 3 != 0, t + 1.0, i % 2 == 0, vec![])
            })
            .collect();
        let spec = ModelSpec::new(CopulaFamily::Clayton, MarginFamily::Exponential, 0);
        let start = initial_values(&spec, &data).unwrap();
        let events = data.iter().filter(|r| r.d1).count() as f64;
        let total: f64 = data.iter().map(|r| r.x).sum();
        assert!((start.0[0] - (events / total).ln()).abs() < 1e-5);
        assert_eq!(start.0[2], 0.5f64.ln());
        assert_eq!(start.len(), spec.n_params());
    }
}
