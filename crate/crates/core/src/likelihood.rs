//! The four-case censored joint log-likelihood.
//!
//! Parameters are packed as `(a_0..a_p, c_0..c_p, b_0..b_p, [shape_1, shape_2])`
//! where `a` drives the non-terminal margin, `c` the terminal margin and `b`
//! the copula association. Weibull shapes are stored as `ln(alpha)`, Gompertz
//! shapes as `gamma` itself.

use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::copulas::{Copula, CopulaFamily};
use crate::error::{ModelError, Result};
use crate::margins::{cap_predictor, predictor_unchecked, Margin, MarginFamily};

/// Lower clamp for log copula factors, `ln(1e-300)`.
pub const LOG_FACTOR_FLOOR: f64 = -690.775_527_898_213_7;

/// One subject: first-event time `x` with indicator `d1`, second-event time
/// `y` with indicator `d2`, and binary covariates `w`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub x: f64,
    pub d1: bool,
    pub y: f64,
    pub d2: bool,
    pub w: Vec<f64>,
}

impl SubjectRecord {
    pub fn new(x: f64, d1: bool, y: f64, d2: bool, w: Vec<f64>) -> Self {
        Self { x, d1, y, d2, w }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.x.is_finite() && self.y.is_finite()) {
            return Err("times must be finite".into());
        }
        if self.x < 0.0 || self.y < 0.0 {
            return Err("times must be non-negative".into());
        }
        if self.x > self.y {
            return Err(format!("x = {} exceeds y = {}", self.x, self.y));
        }
        if self.w.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err("covariates must be 0/1".into());
        }
        Ok(())
    }
}

/// Checks every record and that all share one covariate dimension; returns it.
pub fn validate_records(data: &[SubjectRecord]) -> Result<usize> {
    let first = data.first().ok_or(ModelError::EmptyData)?;
    let p = first.w.len();
    for (index, rec) in data.iter().enumerate() {
        if rec.w.len() != p {
            return Err(ModelError::InvalidRecord {
                index,
                reason: format!("expected {p} covariates, found {}", rec.w.len()),
            });
        }
        rec.validate().map_err(|reason| ModelError::InvalidRecord { index, reason })?;
    }
    Ok(p)
}

/// Copula family, margin family and number of covariates (shared by all three predictors).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub copula: CopulaFamily,
    pub margin: MarginFamily,
    pub p: usize,
}

impl ModelSpec {
    pub fn new(copula: CopulaFamily, margin: MarginFamily, p: usize) -> Self {
        Self { copula, margin, p }
    }

    pub fn n_params(&self) -> usize {
        3 * (self.p + 1) + 2 * self.margin.shape_count()
    }

    pub fn a_range(&self) -> Range<usize> {
        0..self.p + 1
    }

    pub fn c_range(&self) -> Range<usize> {
        self.p + 1..2 * (self.p + 1)
    }

    pub fn b_range(&self) -> Range<usize> {
        2 * (self.p + 1)..3 * (self.p + 1)
    }

    /// Indices of `(shape_1, shape_2)` when the margin has shapes.
    pub fn shape_indices(&self) -> Option<(usize, usize)> {
        (self.margin.shape_count() == 1).then(|| (3 * (self.p + 1), 3 * (self.p + 1) + 1))
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.copula, self.margin)
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.n_params());
        for prefix in ["a", "c", "b"] {
            names.extend((0..=self.p).map(|k| format!("{prefix}{k}")));
        }
        match self.margin {
            MarginFamily::Exponential => {}
            MarginFamily::Weibull => names.extend(["log_alpha1".into(), "log_alpha2".into()]),
            MarginFamily::Gompertz => names.extend(["gamma1".into(), "gamma2".into()]),
        }
        names
    }

    /// Natural shape from its stored (optimizer) value.
    pub fn natural_shape(&self, stored: f64) -> f64 {
        match self.margin {
            MarginFamily::Exponential => 1.0,
            MarginFamily::Weibull => stored.exp(),
            MarginFamily::Gompertz => stored,
        }
    }

    /// Stored (optimizer) value of a natural shape.
    pub fn stored_shape(&self, natural: f64) -> f64 {
        match self.margin {
            MarginFamily::Exponential => 0.0,
            MarginFamily::Weibull => natural.ln(),
            MarginFamily::Gompertz => natural,
        }
    }

    pub fn unpack<'a>(&self, params: &'a [f64]) -> Unpacked<'a> {
        let (shape1, shape2) = match self.shape_indices() {
            Some((i, j)) => (self.natural_shape(params[i]), self.natural_shape(params[j])),
            None => (1.0, 1.0),
        };
        Unpacked {
            a: &params[self.a_range()],
            c: &params[self.c_range()],
            b: &params[self.b_range()],
            shape1,
            shape2,
        }
    }

    pub fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(ModelError::DimensionMismatch { expected: self.n_params(), actual: params.len() });
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("parameter vector"));
        }
        Ok(())
    }
}

/// Borrowed view of a packed parameter vector with natural shapes.
#[derive(Clone, Copy, Debug)]
pub struct Unpacked<'a> {
    pub a: &'a [f64],
    pub c: &'a [f64],
    pub b: &'a [f64],
    pub shape1: f64,
    pub shape2: f64,
}

/// Packed parameter vector for a [`ModelSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector(pub Vec<f64>);

impl ParameterVector {
    /// Packs coefficients and natural shapes (`alpha` or `gamma`; empty for Exponential).
    pub fn from_parts(spec: &ModelSpec, a: &[f64], c: &[f64], b: &[f64], shapes: &[f64]) -> Result<Self> {
        let q = spec.p + 1;
        for part in [a, c, b] {
            if part.len() != q {
                return Err(ModelError::DimensionMismatch { expected: q, actual: part.len() });
            }
        }
        let want = 2 * spec.margin.shape_count();
        if shapes.len() != want {
            return Err(ModelError::DimensionMismatch { expected: want, actual: shapes.len() });
        }
        if spec.margin == MarginFamily::Weibull && shapes.iter().any(|&s| s <= 0.0) {
            return Err(ModelError::InvalidConfig("Weibull shapes must be positive".into()));
        }
        let mut v = Vec::with_capacity(spec.n_params());
        v.extend_from_slice(a);
        v.extend_from_slice(c);
        v.extend_from_slice(b);
        v.extend(shapes.iter().map(|&s| spec.stored_shape(s)));
        spec.check_params(&v)?;
        Ok(Self(v))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Marginal distributions and copula for one covariate pattern.
#[derive(Clone, Copy, Debug)]
pub struct SubjectModel {
    pub nonterminal: Margin,
    pub terminal: Margin,
    pub copula: Copula,
}

impl SubjectModel {
    pub fn resolve(spec: &ModelSpec, params: &Unpacked<'_>, w: &[f64]) -> Self {
        let rate1 = cap_predictor(predictor_unchecked(params.a, w)).exp();
        let rate2 = cap_predictor(predictor_unchecked(params.c, w)).exp();
        let theta = spec.copula.theta_from_predictor(predictor_unchecked(params.b, w));
        Self {
            nonterminal: Margin::new(spec.margin, params.shape1, rate1),
            terminal: Margin::new(spec.margin, params.shape2, rate2),
            copula: Copula::from_link(spec.copula, theta),
        }
    }

    /// Log of the censoring-case factor selected by `(d1, d2)`.
    pub fn loglik(&self, x: f64, d1: bool, y: f64, d2: bool) -> f64 {
        let u = self.nonterminal.log_survival(x).exp();
        let v = self.terminal.log_survival(y).exp();
        let cop = &self.copula;
        let value = match (d1, d2) {
            (true, true) => {
                cop.log_density(u, v).max(LOG_FACTOR_FLOOR)
                    + self.nonterminal.log_density(x)
                    + self.terminal.log_density(y)
            }
            (true, false) => cop.log_partial_u(u, v).max(LOG_FACTOR_FLOOR) + self.nonterminal.log_density(x),
            (false, true) => cop.log_partial_v(u, v).max(LOG_FACTOR_FLOOR) + self.terminal.log_density(y),
            (false, false) => cop.log_cdf(u, v).max(LOG_FACTOR_FLOOR),
        };
        if value.is_nan() || value == f64::INFINITY {
            f64::NEG_INFINITY
        } else {
            value
        }
    }
}

/// Log-likelihood contribution of one record; `-inf` when any factor is not finite.
pub fn record_loglik(spec: &ModelSpec, params: &ParameterVector, rec: &SubjectRecord) -> Result<f64> {
    spec.check_params(params.as_slice())?;
    if rec.w.len() != spec.p {
        return Err(ModelError::DimensionMismatch { expected: spec.p, actual: rec.w.len() });
    }
    rec.validate().map_err(|reason| ModelError::InvalidRecord { index: 0, reason })?;
    let model = SubjectModel::resolve(spec, &spec.unpack(params.as_slice()), &rec.w);
    Ok(model.loglik(rec.x, rec.d1, rec.y, rec.d2))
}

/// Sum of [`record_loglik`] over a dataset.
pub fn dataset_loglik(spec: &ModelSpec, params: &ParameterVector, data: &[SubjectRecord]) -> Result<f64> {
    spec.check_params(params.as_slice())?;
    let p = validate_records(data)?;
    if p != spec.p {
        return Err(ModelError::DimensionMismatch { expected: spec.p, actual: p });
    }
    Ok(LogLikelihood::new(*spec, data).eval(params.as_slice()))
}

/// Reusable evaluator of the dataset log-likelihood.
///
/// Records are grouped by covariate pattern so margins and copula are resolved
/// once per distinct pattern per evaluation. Summation is in record order.
#[derive(Clone, Debug)]
pub struct LogLikelihood<'a> {
    spec: ModelSpec,
    data: &'a [SubjectRecord],
    patterns: Vec<Vec<f64>>,
    pattern_of: Vec<usize>,
}

impl<'a> LogLikelihood<'a> {
    /// Assumes records were validated against `spec.p`.
    pub fn new(spec: ModelSpec, data: &'a [SubjectRecord]) -> Self {
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut patterns = Vec::new();
        let pattern_of = data
            .iter()
            .map(|rec| {
                let key: Vec<u64> = rec.w.iter().map(|v| v.to_bits()).collect();
                *index.entry(key).or_insert_with(|| {
                    patterns.push(rec.w.clone());
                    patterns.len() - 1
                })
            })
            .collect();
        Self { spec, data, patterns, pattern_of }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn data(&self) -> &'a [SubjectRecord] {
        self.data
    }

    pub fn n_params(&self) -> usize {
        self.spec.n_params()
    }

    pub fn eval(&self, params: &[f64]) -> f64 {
        if params.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let unpacked = self.spec.unpack(params);
        if !(unpacked.shape1.is_finite() && unpacked.shape2.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let models: Vec<SubjectModel> = self
            .patterns
            .iter()
            .map(|w| SubjectModel::resolve(&self.spec, &unpacked, w))
            .collect();
        // Neumaier compensated sum keeps finite-difference noise low
        let (mut total, mut comp) = (0.0f64, 0.0f64);
        for (rec, &k) in self.data.iter().zip(&self.pattern_of) {
            let value = models[k].loglik(rec.x, rec.d1, rec.y, rec.d2);
            if value == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            let t = total + value;
            comp += if total.abs() >= value.abs() { (total - t) + value } else { (value - t) + total };
            total = t;
        }
        total + comp
    }
}

/// Censored log-likelihood of one margin on its own: `sum d log f(t) + (1 - d) log S(t)`.
///
/// `coeffs` are `(c_0..c_p)` and `stored_shape` uses the same convention as the
/// packed vector (log alpha for Weibull).
pub fn univariate_loglik(
    family: MarginFamily,
    coeffs: &[f64],
    stored_shape: f64,
    times: &[f64],
    events: &[bool],
    covariates: &[&[f64]],
) -> f64 {
    let shape = match family {
        MarginFamily::Exponential => 1.0,
        MarginFamily::Weibull => stored_shape.exp(),
        MarginFamily::Gompertz => stored_shape,
    };
    let mut total = 0.0;
    for ((&t, &d), w) in times.iter().zip(events).zip(covariates) {
        let rate = cap_predictor(predictor_unchecked(coeffs, w)).exp();
        let m = Margin::new(family, shape, rate);
        total += if d { m.log_density(t) } else { m.log_survival(t) };
    }
    if total.is_nan() {
        f64::NEG_INFINITY
    } else {
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(copula: CopulaFamily, margin: MarginFamily, p: usize) -> ModelSpec {
        ModelSpec::new(copula, margin, p)
    }

    #[test]
    fn packing_layout() {
        let s = spec(CopulaFamily::Frank, MarginFamily::Weibull, 3);
        assert_eq!(s.n_params(), 14);
        assert_eq!(s.a_range(), 0..4);
        assert_eq!(s.c_range(), 4..8);
        assert_eq!(s.b_range(), 8..12);
        assert_eq!(s.shape_indices(), Some((12, 13)));
        assert_eq!(s.param_names()[12], "log_alpha1");
        let e = spec(CopulaFamily::Normal, MarginFamily::Exponential, 0);
        assert_eq!(e.n_params(), 3);
        assert_eq!(e.shape_indices(), None);
        let pv = ParameterVector::from_parts(&s, &[1.0; 4], &[2.0; 4], &[3.0; 4], &[0.5, 2.0]).unwrap();
        assert!((pv.0[12] - 0.5f64.ln()).abs() < 1e-15);
        assert!(ParameterVector::from_parts(&s, &[1.0; 3], &[2.0; 4], &[3.0; 4], &[0.5, 2.0]).is_err());
    }

    fn independence_params(s: &ModelSpec, a: f64, c: f64) -> ParameterVector {
        let b0 = match s.copula {
            CopulaFamily::Normal | CopulaFamily::Frank => 0.0,
            CopulaFamily::Clayton | CopulaFamily::Gumbel => -50.0,
        };
        ParameterVector::from_parts(s, &[a], &[c], &[b0], &[]).unwrap()
    }

    #[test]
    fn independence_record_cases() {
        for fam in CopulaFamily::ALL {
            let s = spec(fam, MarginFamily::Exponential, 0);
            let pv = independence_params(&s, 0.2f64.ln(), 0.5f64.ln());
            let (m1, m2) = (Margin::exponential(0.2), Margin::exponential(0.5));
            let both = SubjectRecord::new(1.3, true, 2.1, true, vec![]);
            let got = record_loglik(&s, &pv, &both).unwrap();
            let expected = m1.density(1.3).ln() + m2.density(2.1).ln();
            assert!((got - expected).abs() < 1e-12, "{fam}: {got} vs {expected}");
            let neither = SubjectRecord::new(1.3, false, 1.3, false, vec![]);
            let got = record_loglik(&s, &pv, &neither).unwrap();
            let expected = m1.survival(1.3).ln() + m2.survival(1.3).ln();
            assert!((got - expected).abs() < 1e-12, "{fam}: {got} vs {expected}");
        }
    }

    #[test]
    fn clayton_censored_both_closed_form() {
        let s = spec(CopulaFamily::Clayton, MarginFamily::Exponential, 0);
        // theta = exp(0) = 1, lambda_1 = lambda_2 = 1
        let pv = ParameterVector::from_parts(&s, &[0.0], &[0.0], &[0.0], &[]).unwrap();
        let rec = SubjectRecord::new(1.0, false, 1.0, false, vec![]);
        let got = record_loglik(&s, &pv, &rec).unwrap();
        let e = std::f64::consts::E;
        assert!((got + (2.0 * e - 1.0).ln()).abs() < 1e-12);
        assert!((got + 1.48988).abs() < 1e-5);
    }

    #[test]
    fn dataset_sum_and_errors() {
        let s = spec(CopulaFamily::Gumbel, MarginFamily::Gompertz, 1);
        let pv = ParameterVector::from_parts(&s, &[-2.0, 0.3], &[-3.0, 1.0], &[-1.0, 0.5], &[0.05, -0.02]).unwrap();
        let rec = SubjectRecord::new(0.7, true, 3.2, false, vec![1.0]);
        let single = record_loglik(&s, &pv, &rec).unwrap();
        assert_eq!(dataset_loglik(&s, &pv, std::slice::from_ref(&rec)).unwrap(), single);
        let twice = dataset_loglik(&s, &pv, &[rec.clone(), rec.clone()]).unwrap();
        assert_eq!(twice, 2.0 * single);
        assert_eq!(dataset_loglik(&s, &pv, &[]), Err(ModelError::EmptyData));
        let bad = SubjectRecord::new(4.0, true, 3.0, true, vec![1.0]);
        assert!(matches!(dataset_loglik(&s, &pv, &[bad]), Err(ModelError::InvalidRecord { .. })));
    }

    #[test]
    fn extreme_parameters_never_nan() {
        for cop in CopulaFamily::ALL {
            for margin in MarginFamily::ALL {
                let s = spec(cop, margin, 1);
                let n = s.n_params();
                for scale in [-80.0, -10.0, 10.0, 80.0] {
                    let params: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { scale } else { -scale / 3.0 }).collect();
                    let data = [
                        SubjectRecord::new(0.5, true, 2.0, true, vec![1.0]),
                        SubjectRecord::new(0.5, true, 2.0, false, vec![0.0]),
                        SubjectRecord::new(1.5, false, 1.5, true, vec![1.0]),
                        SubjectRecord::new(20.0, false, 20.0, false, vec![0.0]),
                    ];
                    let ll = LogLikelihood::new(s, &data).eval(&params);
                    assert!(!ll.is_nan(), "{cop}-{margin} scale {scale}");
                    assert!(ll < f64::INFINITY);
                }
            }
        }
    }

    #[test]
    fn censored_tail_record_lowers_loglik() {
        let s = spec(CopulaFamily::Normal, MarginFamily::Weibull, 0);
        let pv = ParameterVector::from_parts(&s, &[-2.0], &[-3.0], &[0.4], &[0.8, 1.1]).unwrap();
        let mut data = vec![
            SubjectRecord::new(1.0, true, 4.0, true, vec![]),
            SubjectRecord::new(2.0, false, 2.0, true, vec![]),
        ];
        let before = dataset_loglik(&s, &pv, &data).unwrap();
        data.push(SubjectRecord::new(40.0, false, 60.0, false, vec![]));
        let after = dataset_loglik(&s, &pv, &data).unwrap();
        assert!(after < before);
    }
}
