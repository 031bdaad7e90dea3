//! Normal, Clayton, Frank and Gumbel copulas on survival probabilities.
//!
//! Every family is exchangeable, so `partial_v(u, v) = partial_u(v, u)`.
//! Evaluation happens in log space where possible; arguments are clamped to
//! `[1e-12, 1 - 1e-12]` first.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::margins::{cap_predictor, linear_predictor};
use crate::special::{bivariate_norm_cdf, log_norm_cdf, norm_cdf, norm_quantile};

pub const UNIT_CLAMP: f64 = 1e-12;
/// Frank parameters smaller than this in magnitude use the expansion around independence.
const FRANK_SMALL: f64 = 1e-5;
/// Largest |rho| produced by the Normal link.
const RHO_MAX: f64 = 1.0 - 1e-10;
const ROOT_MAX_ITER: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CopulaFamily {
    Normal,
    Clayton,
    Frank,
    Gumbel,
}

impl CopulaFamily {
    pub const ALL: [CopulaFamily; 4] = [
        CopulaFamily::Normal,
        CopulaFamily::Clayton,
        CopulaFamily::Frank,
        CopulaFamily::Gumbel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CopulaFamily::Normal => "normal",
            CopulaFamily::Clayton => "clayton",
            CopulaFamily::Frank => "frank",
            CopulaFamily::Gumbel => "gumbel",
        }
    }

    /// Association parameter as a function of the linear predictor `eta`.
    pub fn theta_from_predictor(self, eta: f64) -> f64 {
        let eta = cap_predictor(eta);
        match self {
            CopulaFamily::Normal => eta.tanh().clamp(-RHO_MAX, RHO_MAX),
            CopulaFamily::Clayton => eta.exp(),
            CopulaFamily::Frank => eta,
            CopulaFamily::Gumbel => eta.exp() + 1.0,
        }
    }

    /// Derivative of the link `d theta / d eta`.
    pub fn link_derivative(self, eta: f64) -> f64 {
        match self {
            CopulaFamily::Normal => {
                let e2 = (2.0 * eta).exp();
                if e2.is_infinite() {
                    0.0
                } else {
                    4.0 * e2 / ((e2 + 1.0) * (e2 + 1.0))
                }
            }
            CopulaFamily::Clayton | CopulaFamily::Gumbel => eta.exp(),
            CopulaFamily::Frank => 1.0,
        }
    }

    /// Starting value of `b_0` next to independence.
    pub fn initial_intercept(self) -> f64 {
        match self {
            CopulaFamily::Normal => 0.0,
            CopulaFamily::Clayton => 0.5f64.ln(),
            CopulaFamily::Frank => 0.1,
            CopulaFamily::Gumbel => 0.1f64.ln(),
        }
    }

    pub fn in_range(self, theta: f64) -> bool {
        match self {
            CopulaFamily::Normal => theta > -1.0 && theta < 1.0,
            CopulaFamily::Clayton => theta > 0.0 && theta.is_finite(),
            CopulaFamily::Frank => theta.is_finite(),
            CopulaFamily::Gumbel => theta >= 1.0 && theta.is_finite(),
        }
    }
}

impl std::fmt::Display for CopulaFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Coefficients `(b_0, ..., b_p)` of the association link.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssociationCoefficients(Vec<f64>);

impl AssociationCoefficients {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(ModelError::DimensionMismatch { expected: 1, actual: 0 });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("association coefficients"));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Covariate-specific association parameter.
pub fn link_theta(family: CopulaFamily, b: &[f64], w: &[f64]) -> Result<f64> {
    let eta = linear_predictor(b, w)?;
    if !eta.is_finite() {
        return Err(ModelError::NonFinite("association predictor"));
    }
    Ok(family.theta_from_predictor(eta))
}

#[inline]
fn clamp_unit(x: f64) -> f64 {
    x.clamp(UNIT_CLAMP, 1.0 - UNIT_CLAMP)
}

/// `ln(1 + e^x)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// A copula family with a fixed, validated association parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Copula {
    family: CopulaFamily,
    theta: f64,
}

impl Copula {
    pub fn new(family: CopulaFamily, theta: f64) -> Result<Self> {
        if !family.in_range(theta) {
            return Err(ModelError::ThetaOutOfRange { family: family.name(), theta });
        }
        Ok(Self { family, theta })
    }

    /// Construct from a link-produced parameter, which is always in range.
    pub(crate) fn from_link(family: CopulaFamily, theta: f64) -> Self {
        debug_assert!(family.in_range(theta), "{family} theta {theta}");
        Self { family, theta }
    }

    /// The independence member of the family (Clayton uses a vanishing theta).
    pub fn independence(family: CopulaFamily) -> Self {
        let theta = match family {
            CopulaFamily::Normal | CopulaFamily::Frank => 0.0,
            CopulaFamily::Clayton => CopulaFamily::Clayton.theta_from_predictor(-50.0),
            CopulaFamily::Gumbel => 1.0,
        };
        Self { family, theta }
    }

    pub fn family(&self) -> CopulaFamily {
        self.family
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// `ln C(u, v)`.
    pub fn log_cdf(&self, u: f64, v: f64) -> f64 {
        let (u, v) = (clamp_unit(u), clamp_unit(v));
        let (lu, lv) = (u.ln(), v.ln());
        let th = self.theta;
        let raw = match self.family {
            CopulaFamily::Normal => {
                if th == 0.0 {
                    lu + lv
                } else {
                    bivariate_norm_cdf(norm_quantile(u), norm_quantile(v), th).ln()
                }
            }
            CopulaFamily::Clayton => -clayton_log_a(th, lu, lv) / th,
            CopulaFamily::Frank => {
                if th.abs() < FRANK_SMALL {
                    lu + lv + (0.5 * th * (1.0 - u) * (1.0 - v)).ln_1p()
                } else {
                    let f = FrankTerms::new(th, u, v);
                    (-(f.den / f.d).ln() / th).ln()
                }
            }
            CopulaFamily::Gumbel => -gumbel_a(th, -lu, -lv).0,
        };
        // Frechet-Hoeffding bounds guard against rounding at extreme parameters.
        let upper = lu.min(lv);
        let lower = (u + v - 1.0).max(0.0).ln();
        if raw.is_nan() {
            return lower.max(f64::MIN_POSITIVE.ln());
        }
        raw.clamp(lower, upper)
    }

    pub fn cdf(&self, u: f64, v: f64) -> f64 {
        self.log_cdf(u, v).exp()
    }

    /// `ln dC/du`, the log conditional distribution of `V` given `U = u`.
    pub fn log_partial_u(&self, u: f64, v: f64) -> f64 {
        let (u, v) = (clamp_unit(u), clamp_unit(v));
        let th = self.theta;
        match self.family {
            CopulaFamily::Normal => {
                let (x, y) = (norm_quantile(u), norm_quantile(v));
                log_norm_cdf((y - th * x) / (1.0 - th * th).sqrt())
            }
            CopulaFamily::Clayton => {
                let (lu, lv) = (u.ln(), v.ln());
                let log_c = -clayton_log_a(th, lu, lv) / th;
                (th + 1.0) * (log_c - lu)
            }
            CopulaFamily::Frank => {
                if th.abs() < FRANK_SMALL {
                    v.ln() + (0.5 * th * (1.0 - 2.0 * u) * (1.0 - v)).ln_1p()
                } else {
                    let f = FrankTerms::new(th, u, v);
                    -th * u + (f.av / f.den).ln()
                }
            }
            CopulaFamily::Gumbel => {
                let (x, y) = (-u.ln(), -v.ln());
                let (a, log_a) = gumbel_a(th, x, y);
                -a + (1.0 - th) * log_a + (th - 1.0) * x.ln() + x
            }
        }
    }

    pub fn partial_u(&self, u: f64, v: f64) -> f64 {
        self.log_partial_u(u, v).exp().min(1.0)
    }

    pub fn log_partial_v(&self, u: f64, v: f64) -> f64 {
        self.log_partial_u(v, u)
    }

    pub fn partial_v(&self, u: f64, v: f64) -> f64 {
        self.partial_u(v, u)
    }

    /// `ln c(u, v)`.
    pub fn log_density(&self, u: f64, v: f64) -> f64 {
        let (u, v) = (clamp_unit(u), clamp_unit(v));
        let th = self.theta;
        match self.family {
            CopulaFamily::Normal => {
                let (x, y) = (norm_quantile(u), norm_quantile(v));
                let s = 1.0 - th * th;
                -0.5 * s.ln() - (th * th * (x * x + y * y) - 2.0 * th * x * y) / (2.0 * s)
            }
            CopulaFamily::Clayton => {
                let (lu, lv) = (u.ln(), v.ln());
                let log_c = -clayton_log_a(th, lu, lv) / th;
                th.ln_1p() + (1.0 + 2.0 * th) * log_c - (1.0 + th) * (lu + lv)
            }
            CopulaFamily::Frank => {
                if th.abs() < FRANK_SMALL {
                    (0.5 * th * (1.0 - 2.0 * u) * (1.0 - 2.0 * v)).ln_1p()
                } else {
                    let f = FrankTerms::new(th, u, v);
                    (-th * f.d).ln() - th * (u + v) - 2.0 * f.den.abs().ln()
                }
            }
            CopulaFamily::Gumbel => {
                let (x, y) = (-u.ln(), -v.ln());
                let (a, log_a) = gumbel_a(th, x, y);
                -a + x + y + (th - 1.0) * (x.ln() + y.ln()) + (1.0 - 2.0 * th) * log_a
                    + (a + th - 1.0).ln()
            }
        }
    }

    pub fn density(&self, u: f64, v: f64) -> f64 {
        self.log_density(u, v).exp()
    }

    /// Solves `partial_u(u, v) = q` for `v`.
    pub fn conditional_inverse(&self, u: f64, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(ModelError::ProbabilityOutOfRange(q));
        }
        if !(u > 0.0 && u < 1.0) {
            return Err(ModelError::ProbabilityOutOfRange(u));
        }
        let uc = clamp_unit(u);
        let th = self.theta;
        let v = match self.family {
            CopulaFamily::Normal => {
                let x = norm_quantile(uc);
                norm_cdf(th * x + (1.0 - th * th).sqrt() * norm_quantile(q))
            }
            CopulaFamily::Clayton => {
                let log_s = (-(th / (th + 1.0)) * q.ln()).exp_m1().ln();
                (-softplus(log_s - th * uc.ln()) / th).exp()
            }
            CopulaFamily::Frank => {
                if th.abs() < FRANK_SMALL {
                    q - 0.5 * th * (1.0 - 2.0 * uc) * q * (1.0 - q)
                } else {
                    let (lq, l1q) = (q.ln(), (-q).ln_1p());
                    let num = log_add_exp(lq - th, l1q - th * uc);
                    let den = log_add_exp(lq, l1q - th * uc);
                    -(num - den) / th
                }
            }
            CopulaFamily::Gumbel => return self.invert_by_root_finding(uc, q),
        };
        Ok(v)
    }

    /// Safeguarded Newton on `partial_u(u, .) - q`, falling back to bisection.
    fn invert_by_root_finding(&self, u: f64, q: f64) -> Result<f64> {
        let (mut lo, mut hi) = (UNIT_CLAMP, 1.0 - UNIT_CLAMP);
        let g = |v: f64| self.partial_u(u, v) - q;
        if g(lo) >= 0.0 {
            return Ok(lo);
        }
        if g(hi) <= 0.0 {
            return Ok(hi);
        }
        let mut v = q;
        for _ in 0..ROOT_MAX_ITER {
            let gv = g(v);
            if gv.abs() <= 1e-14 {
                return Ok(v);
            }
            if gv < 0.0 {
                lo = v;
            } else {
                hi = v;
            }
            if hi - lo <= 1e-15 * hi.max(1e-300) {
                return Ok(0.5 * (lo + hi));
            }
            let slope = self.density(u, v);
            let newton = v - gv / slope;
            v = if slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        Err(ModelError::NoConvergence(ROOT_MAX_ITER))
    }

    /// Kendall's tau implied by the family and parameter.
    pub fn kendall_tau(&self) -> f64 {
        let th = self.theta;
        match self.family {
            CopulaFamily::Normal => 2.0 / std::f64::consts::PI * th.asin(),
            CopulaFamily::Clayton => th / (th + 2.0),
            CopulaFamily::Gumbel => 1.0 - 1.0 / th,
            CopulaFamily::Frank => {
                if th.abs() < FRANK_SMALL {
                    return th / 9.0;
                }
                // 1 - 4/theta (1 - D_1(theta)), Debye function by Simpson's rule
                let n = 2000;
                let h = th / n as f64;
                let f = |t: f64| if t == 0.0 { 1.0 } else { t / t.exp_m1() };
                let mut acc = f(0.0) + f(th);
                for i in 1..n {
                    acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
                }
                let debye = acc * h / 3.0 / th;
                1.0 - 4.0 / th * (1.0 - debye)
            }
        }
    }
}

/// `ln(u^-theta + v^-theta - 1)` for the Clayton copula, stable for tiny and huge theta.
#[inline]
fn clayton_log_a(theta: f64, lu: f64, lv: f64) -> f64 {
    let a = -theta * lu;
    let b = -theta * lv;
    let m = a.max(b);
    if m < 1.0 {
        (a.exp_m1() + b.exp_m1()).ln_1p()
    } else {
        m + ((a - m).exp() + (b - m).exp() - (-m).exp()).ln()
    }
}

/// Gumbel `A = (x^theta + y^theta)^(1/theta)` and `ln A`, with `x = -ln u`, `y = -ln v`.
#[inline]
fn gumbel_a(theta: f64, x: f64, y: f64) -> (f64, f64) {
    let (big, small) = if x >= y { (x, y) } else { (y, x) };
    let log_a = big.ln() + ((small / big).powf(theta)).ln_1p() / theta;
    (log_a.exp(), log_a)
}

/// Shared Frank quantities: `D = e^-theta - 1`, `A_v = e^(-theta v) - 1`, and
/// `den = D + A_u A_v`, the latter assembled without cancellation for theta > 0.
struct FrankTerms {
    d: f64,
    av: f64,
    den: f64,
}

impl FrankTerms {
    #[inline]
    fn new(theta: f64, u: f64, v: f64) -> Self {
        let d = (-theta).exp_m1();
        let au = (-theta * u).exp_m1();
        let av = (-theta * v).exp_m1();
        let den = if theta > 0.0 {
            // D + A_u A_v = -(e^(-theta u)(1 - e^(-theta v)) + e^(-theta v)(1 - e^(-theta (1 - v))))
            -((-theta * u).exp() * (-av) + (-theta * v).exp() * (-(-theta * (1.0 - v)).exp_m1()))
        } else {
            d + au * av
        };
        Self { d, av, den }
    }
}

/// Free-function form of [`Copula::cdf`].
pub fn cdf(family: CopulaFamily, theta: f64, u: f64, v: f64) -> Result<f64> {
    Ok(Copula::new(family, theta)?.cdf(u, v))
}

/// Free-function form of [`Copula::density`].
pub fn density(family: CopulaFamily, theta: f64, u: f64, v: f64) -> Result<f64> {
    Ok(Copula::new(family, theta)?.density(u, v))
}

/// Free-function form of [`Copula::partial_u`].
pub fn partial_u(family: CopulaFamily, theta: f64, u: f64, v: f64) -> Result<f64> {
    Ok(Copula::new(family, theta)?.partial_u(u, v))
}

/// Free-function form of [`Copula::partial_v`].
pub fn partial_v(family: CopulaFamily, theta: f64, u: f64, v: f64) -> Result<f64> {
    Ok(Copula::new(family, theta)?.partial_v(u, v))
}

/// Free-function form of [`Copula::conditional_inverse`].
pub fn conditional_inverse(family: CopulaFamily, theta: f64, u: f64, q: f64) -> Result<f64> {
    Copula::new(family, theta)?.conditional_inverse(u, q)
}
