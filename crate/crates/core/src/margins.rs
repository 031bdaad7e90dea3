//! Parametric marginal survival models with log-linear covariate effects.
//!
//! All three families share the same link: the rate (Exponential), scale
//! (Weibull) or rate (Gompertz) parameter is `exp(c_0 + c_1 w_1 + ... + c_p w_p)`.
//! Shapes are constant across subjects.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Linear predictors are capped at this magnitude before exponentiation.
pub const PREDICTOR_CAP: f64 = 50.0;

/// Below this |gamma| the Gompertz cumulative hazard uses its Taylor expansion.
const GOMPERTZ_SMALL_SHAPE: f64 = 1e-8;

/// Two-sided 95% normal quantile used for every Wald interval in the crate.
pub const Z_95: f64 = 1.959964;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginFamily {
    Exponential,
    Weibull,
    Gompertz,
}

impl MarginFamily {
    pub const ALL: [MarginFamily; 3] = [
        MarginFamily::Exponential,
        MarginFamily::Weibull,
        MarginFamily::Gompertz,
    ];

    /// Extra shape parameters carried per margin (0 or 1).
    pub fn shape_count(self) -> usize {
        match self {
            MarginFamily::Exponential => 0,
            MarginFamily::Weibull | MarginFamily::Gompertz => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MarginFamily::Exponential => "exponential",
            MarginFamily::Weibull => "weibull",
            MarginFamily::Gompertz => "gompertz",
        }
    }
}

impl std::fmt::Display for MarginFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Intercept and slopes `(c_0, ..., c_p)` of one margin's log-linear predictor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginCoefficients(Vec<f64>);

impl MarginCoefficients {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(ModelError::DimensionMismatch { expected: 1, actual: 0 });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("margin coefficients"));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn covariate_count(&self) -> usize {
        self.0.len() - 1
    }
}

/// `c_0 + sum_k c_k w_k`.
pub fn linear_predictor(coeffs: &[f64], w: &[f64]) -> Result<f64> {
    if coeffs.len() != w.len() + 1 {
        return Err(ModelError::DimensionMismatch {
            expected: coeffs.len().saturating_sub(1),
            actual: w.len(),
        });
    }
    Ok(predictor_unchecked(coeffs, w))
}

#[inline]
pub(crate) fn predictor_unchecked(coeffs: &[f64], w: &[f64]) -> f64 {
    coeffs[0] + coeffs[1..].iter().zip(w).map(|(c, x)| c * x).sum::<f64>()
}

#[inline]
pub(crate) fn cap_predictor(eta: f64) -> f64 {
    eta.clamp(-PREDICTOR_CAP, PREDICTOR_CAP)
}

/// Rate/scale parameter `exp(eta)` with the predictor capped at +/-50.
pub fn rate_param(_family: MarginFamily, coeffs: &[f64], w: &[f64]) -> Result<f64> {
    let eta = linear_predictor(coeffs, w)?;
    if !eta.is_finite() {
        return Err(ModelError::NonFinite("linear predictor"));
    }
    Ok(cap_predictor(eta).exp())
}

/// `(exp(gamma t) - 1) / gamma`, continuous through gamma = 0.
#[inline]
fn gompertz_integral(gamma: f64, t: f64) -> f64 {
    if gamma.abs() < GOMPERTZ_SMALL_SHAPE {
        let gt = gamma * t;
        t * (1.0 + gt / 2.0 + gt * gt / 6.0)
    } else {
        (gamma * t).exp_m1() / gamma
    }
}

/// One subject's marginal distribution: family, natural shape and rate.
///
/// `shape` is the Weibull alpha or the Gompertz gamma; it is ignored for the
/// Exponential family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Margin {
    pub family: MarginFamily,
    pub shape: f64,
    pub rate: f64,
}

impl Margin {
    pub fn new(family: MarginFamily, shape: f64, rate: f64) -> Self {
        Self { family, shape, rate }
    }

    pub fn exponential(rate: f64) -> Self {
        Self::new(MarginFamily::Exponential, 1.0, rate)
    }

    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        match self.family {
            MarginFamily::Exponential => self.rate * t,
            MarginFamily::Weibull => self.rate * t.powf(self.shape),
            MarginFamily::Gompertz => self.rate * gompertz_integral(self.shape, t),
        }
    }

    pub fn log_hazard(&self, t: f64) -> f64 {
        match self.family {
            MarginFamily::Exponential => self.rate.ln(),
            MarginFamily::Weibull => {
                let alpha = self.shape;
                if alpha == 1.0 {
                    self.rate.ln()
                } else {
                    self.rate.ln() + alpha.ln() + (alpha - 1.0) * t.ln()
                }
            }
            MarginFamily::Gompertz => self.rate.ln() + self.shape * t,
        }
    }

    pub fn log_survival(&self, t: f64) -> f64 {
        -self.cumulative_hazard(t)
    }

    pub fn log_density(&self, t: f64) -> f64 {
        self.log_hazard(t) - self.cumulative_hazard(t)
    }

    pub fn survival(&self, t: f64) -> f64 {
        (-self.cumulative_hazard(t)).exp()
    }

    pub fn density(&self, t: f64) -> f64 {
        self.log_density(t).exp()
    }

    pub fn hazard(&self, t: f64) -> f64 {
        self.log_hazard(t).exp()
    }

    /// Survival probability as `t -> infinity`; positive only for Gompertz with gamma < 0.
    pub fn survival_floor(&self) -> f64 {
        match self.family {
            MarginFamily::Gompertz if self.shape < 0.0 => (self.rate / self.shape).exp(),
            _ => 0.0,
        }
    }

    /// Time `t` with `S(t) = u`.
    pub fn inverse_survival(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u <= 1.0) {
            return Err(ModelError::ProbabilityOutOfRange(u));
        }
        let target = -u.ln();
        if target == 0.0 {
            return Ok(0.0);
        }
        let t = match self.family {
            MarginFamily::Exponential => target / self.rate,
            MarginFamily::Weibull => (target / self.rate).powf(1.0 / self.shape),
            MarginFamily::Gompertz => {
                let gamma = self.shape;
                let x = gamma * target / self.rate;
                if gamma.abs() < GOMPERTZ_SMALL_SHAPE && x.abs() < 1e-4 {
                    target / self.rate * (1.0 - x / 2.0 + x * x / 3.0)
                } else if x <= -1.0 {
                    return Err(ModelError::BelowSurvivalFloor { u, floor: self.survival_floor() });
                } else {
                    x.ln_1p() / gamma
                }
            }
        };
        Ok(t)
    }
}

/// Free-function form of [`Margin::survival`].
pub fn survival(family: MarginFamily, shape: f64, rate: f64, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(Margin::new(family, shape, rate).survival(t))
}

/// Free-function form of [`Margin::density`].
pub fn density(family: MarginFamily, shape: f64, rate: f64, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(Margin::new(family, shape, rate).density(t))
}

/// Free-function form of [`Margin::hazard`].
pub fn hazard(family: MarginFamily, shape: f64, rate: f64, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(Margin::new(family, shape, rate).hazard(t))
}

/// Free-function form of [`Margin::inverse_survival`].
pub fn inverse_survival(family: MarginFamily, shape: f64, rate: f64, u: f64) -> Result<f64> {
    Margin::new(family, shape, rate).inverse_survival(u)
}

fn check_time(t: f64) -> Result<()> {
    if t.is_nan() {
        Err(ModelError::NonFinite("time"))
    } else if t < 0.0 {
        Err(ModelError::NegativeTime(t))
    } else {
        Ok(())
    }
}

/// Hazard ratio `exp(coef)` with its Delta-method variance and 95% Wald interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HazardRatioEstimate {
    pub hr: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl HazardRatioEstimate {
    pub fn covers(&self, truth: f64) -> bool {
        self.ci_low <= truth && truth <= self.ci_high
    }
}

/// Hazard ratio of a binary covariate with coefficient `coef` whose estimated
/// variance is `coef_var`: `Var(HR) = exp(2 coef) Var(coef)`, interval on the HR scale.
pub fn hazard_ratio(coef: f64, coef_var: f64) -> HazardRatioEstimate {
    let hr = coef.exp();
    let variance = (2.0 * coef).exp() * coef_var.max(0.0);
    let half = Z_95 * variance.sqrt();
    HazardRatioEstimate {
        hr,
        variance,
        ci_low: (hr - half).max(0.0),
        ci_high: hr + half,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn linear_predictor_examples() {
        assert_eq!(linear_predictor(&[-3.30, 0.11, 0.02, -0.51], &[0.0, 0.0, 0.0]).unwrap(), -3.30);
        assert_eq!(linear_predictor(&[0.0, 0.0], &[1.0]).unwrap(), 0.0);
        let eta = linear_predictor(&[-3.28, 0.32, 0.00, -0.53], &[1.0, 0.0, 1.0]).unwrap();
        assert!((eta + 3.49).abs() < 1e-12);
        assert!(matches!(
            linear_predictor(&[1.0, 2.0], &[1.0, 1.0]),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rate_param_examples() {
        let fam = MarginFamily::Exponential;
        let r = rate_param(fam, &[-3.30], &[]).unwrap();
        assert!((r - 0.036883167401240).abs() < 1e-12);
        assert_eq!(rate_param(fam, &[0.0], &[]).unwrap(), 1.0);
        let r = rate_param(fam, &[-4.15, 1.32], &[1.0]).unwrap();
        assert!((r - (-2.83f64).exp()).abs() < 1e-15);
        // capped instead of overflowing
        assert_eq!(rate_param(fam, &[1e4], &[]).unwrap(), 50f64.exp());
        assert!(rate_param(fam, &[f64::NAN], &[]).is_err());
    }

    #[test]
    fn survival_examples() {
        let e = MarginFamily::Exponential;
        assert_eq!(survival(e, 1.0, 0.5, 0.0).unwrap(), 1.0);
        assert!((survival(e, 1.0, 0.5, 2.0).unwrap() - (-1f64).exp()).abs() < 1e-15);
        let w = MarginFamily::Weibull;
        assert!((survival(w, 2.0, 1.0, 1.0).unwrap() - 0.36787944117144233).abs() < 1e-15);
        assert!(survival(e, 1.0, 0.5, -1.0).is_err());
    }

    #[test]
    fn density_examples() {
        let lam = 0.37;
        assert!((density(MarginFamily::Exponential, 1.0, lam, 0.0).unwrap() - lam).abs() < 1e-15);
        // Gompertz closed form vs numeric derivative of 1 - S
        let g = Margin::new(MarginFamily::Gompertz, 0.06, 0.01);
        let t: f64 = 10.0;
        let closed = 0.01 * (0.06 * t - (0.01 / 0.06) * ((0.06 * t).exp() - 1.0)).exp();
        assert!(close(g.density(t), closed, 1e-13));
        let h = 1e-5;
        let numeric = (g.survival(t - h) - g.survival(t + h)) / (2.0 * h);
        assert!(close(g.density(t), numeric, 1e-8));
        for &t in &[0.1, 1.0, 7.5] {
            let wb = density(MarginFamily::Weibull, 1.0, lam, t).unwrap();
            let ex = density(MarginFamily::Exponential, 1.0, lam, t).unwrap();
            assert!(close(wb, ex, 1e-14));
        }
    }

    #[test]
    fn hazard_examples() {
        for &t in &[0.0, 0.5, 30.0] {
            assert!(close(hazard(MarginFamily::Exponential, 1.0, 0.2, t).unwrap(), 0.2, 1e-15));
        }
        assert!(close(hazard(MarginFamily::Weibull, 2.0, 1.0, 3.0).unwrap(), 6.0, 1e-14));
        assert!(close(hazard(MarginFamily::Gompertz, 0.0, 0.3, 4.0).unwrap(), 0.3, 1e-15));
    }

    #[test]
    fn inverse_survival_examples() {
        let lam = 0.25;
        let u = 0.3;
        let t = inverse_survival(MarginFamily::Exponential, 1.0, lam, u).unwrap();
        assert!(close(t, -u.ln() / lam, 1e-15));
        for fam in MarginFamily::ALL {
            assert_eq!(inverse_survival(fam, 0.7, 0.2, 1.0).unwrap(), 0.0);
            assert!(inverse_survival(fam, 0.7, 0.2, 0.0).is_err());
            assert!(inverse_survival(fam, 0.7, 0.2, -0.1).is_err());
        }
        let t = inverse_survival(MarginFamily::Weibull, 2.0, 1.0, (-4f64).exp()).unwrap();
        assert!(close(t, 2.0, 1e-14));
    }

    #[test]
    fn gompertz_negative_shape_floor() {
        let m = Margin::new(MarginFamily::Gompertz, -0.5, 0.2);
        let floor = (0.2f64 / -0.5).exp();
        assert!(close(m.survival_floor(), floor, 1e-15));
        assert!(close(m.survival(1e6), floor, 1e-12));
        assert!(matches!(
            m.inverse_survival(floor * 0.9),
            Err(ModelError::BelowSurvivalFloor { .. })
        ));
        let t = m.inverse_survival(floor * 1.1).unwrap();
        assert!(close(m.survival(t), floor * 1.1, 1e-10));
    }

    #[test]
    fn gompertz_small_shape_matches_exponential() {
        let lam = 0.04;
        let ex = Margin::exponential(lam);
        for &gamma in &[0.0, 1e-12, -3e-10, 5e-10] {
            let g = Margin::new(MarginFamily::Gompertz, gamma, lam);
            for &t in &[0.0, 0.3, 5.0, 25.0] {
                assert!((g.survival(t) - ex.survival(t)).abs() < 1e-8);
                assert!((g.density(t) - ex.density(t)).abs() < 1e-8);
            }
        }
        // continuity across the expansion threshold
        let below = Margin::new(MarginFamily::Gompertz, 0.9999e-8, lam).cumulative_hazard(20.0);
        let above = Margin::new(MarginFamily::Gompertz, 1.0001e-8, lam).cumulative_hazard(20.0);
        assert!(close(below, above, 1e-9));
    }

    #[test]
    fn hazard_ratio_examples() {
        let hr = hazard_ratio(0.0, 0.01);
        assert_eq!(hr.hr, 1.0);
        assert!((hr.variance - 0.01).abs() < 1e-15);
        assert!(hr.ci_low <= hr.hr && hr.hr <= hr.ci_high);
        assert!((hazard_ratio(-0.58, 0.0).hr - 0.560).abs() < 5e-4);
        assert!((hazard_ratio(1.32, 0.0).hr - 3.743).abs() < 5e-4);
        let h = hazard_ratio(0.3, 0.04);
        assert!(close(h.variance, (0.6f64).exp() * 0.04, 1e-14));
        assert!(close(h.ci_high - h.hr, Z_95 * h.variance.sqrt(), 1e-14));
    }

    fn any_margin() -> impl Strategy<Value = Margin> {
        prop_oneof![
            (0.01f64..3.0).prop_map(Margin::exponential),
            (0.3f64..3.0, 0.01f64..2.0).prop_map(|(a, b)| Margin::new(MarginFamily::Weibull, a, b)),
            (-0.2f64..0.3, 0.01f64..1.0).prop_map(|(g, l)| Margin::new(MarginFamily::Gompertz, g, l)),
        ]
    }

    proptest! {
        #[test]
        fn density_is_hazard_times_survival(m in any_margin(), t in 0.01f64..20.0) {
            let s = m.survival(t);
            prop_assume!(s > 1e-300);
            let lhs = m.density(t);
            let rhs = m.hazard(t) * s;
            prop_assert!(close(lhs, rhs, 1e-12), "{lhs} vs {rhs}");
            prop_assert!(lhs >= 0.0);
        }

        #[test]
        fn survival_decreasing_from_one(m in any_margin(), t in 0.0f64..10.0, dt in 1e-3f64..5.0) {
            prop_assert_eq!(m.survival(0.0), 1.0);
            let (a, b) = (m.survival(t), m.survival(t + dt));
            prop_assert!(b < a || (a <= m.survival_floor() * (1.0 + 1e-12)));
        }

        #[test]
        fn density_is_minus_survival_slope(m in any_margin(), t in 0.2f64..8.0) {
            let h = 1e-4 * t;
            let numeric = (m.survival(t - h) - m.survival(t + h)) / (2.0 * h);
            let f = m.density(t);
            prop_assume!(f > 1e-3);
            prop_assert!(close(numeric, f, 1e-6), "{numeric} vs {f}");
        }

        #[test]
        fn inverse_round_trip(m in any_margin(), exponent in -6.0f64..-1e-6) {
            // u on a log grid from 1e-6 to 1 - 1e-6
            let u = 10f64.powf(exponent).min(1.0 - 1e-6);
            prop_assume!(u > m.survival_floor() * 1.001);
            let t = m.inverse_survival(u).unwrap();
            prop_assert!(close(m.survival(t), u, 1e-10));
        }

        #[test]
        fn weibull_shape_one_is_exponential(rate in 0.01f64..3.0, t in 0.0f64..20.0) {
            let w = Margin::new(MarginFamily::Weibull, 1.0, rate);
            let e = Margin::exponential(rate);
            prop_assert!(close(w.survival(t), e.survival(t), 1e-14));
            prop_assert!(close(w.density(t), e.density(t), 1e-14));
        }

        #[test]
        fn hazard_ratio_constant_in_time(
            shape in 0.4f64..2.5, gamma in -0.1f64..0.2, eta in -4.0f64..0.0,
            coef in -1.0f64..1.5, t in 0.05f64..20.0,
        ) {
            let base = eta.exp();
            let shifted = (eta + coef).exp();
            for (fam, s) in [(MarginFamily::Weibull, shape), (MarginFamily::Gompertz, gamma)] {
                let r = Margin::new(fam, s, shifted).hazard(t) / Margin::new(fam, s, base).hazard(t);
                prop_assert!(close(r, coef.exp(), 1e-12));
            }
        }
    }
}
