//! Generating parameters and covariate settings of the two simulation studies.

use crate::copulas::CopulaFamily;
use crate::likelihood::{ModelSpec, ParameterVector};
use crate::margins::MarginFamily;

/// Age, sex and donor-type prevalences for the three-covariate study.
pub const STUDY1_PREVALENCES: [f64; 3] = [0.40, 0.38, 0.30];
/// Age prevalence for the one-covariate study.
pub const STUDY2_PREVALENCES: [f64; 1] = [0.40];
pub const CENSOR_MAX: f64 = 25.0;

pub fn study1_spec(copula: CopulaFamily) -> ModelSpec {
    ModelSpec::new(copula, MarginFamily::Exponential, 3)
}

pub fn study2_spec(copula: CopulaFamily, margin: MarginFamily) -> ModelSpec {
    ModelSpec::new(copula, margin, 1)
}

/// Exponential margins with age, sex and donor covariates.
pub fn study1_truth(copula: CopulaFamily) -> ParameterVector {
    let (a, c, b): ([f64; 4], [f64; 4], [f64; 4]) = match copula {
        CopulaFamily::Normal => ([-3.30, 0.11, 0.02, -0.51], [-4.15, 1.32, -0.11, -0.65], [0.35, 0.28, 0.0, 0.0]),
        CopulaFamily::Clayton => ([-3.28, 0.32, 0.0, -0.53], [-4.09, 1.35, -0.07, -0.62], [0.39, 1.09, 0.14, 0.53]),
        CopulaFamily::Frank => ([-3.37, 0.31, 0.0, -0.53], [-4.08, 1.35, -0.07, -0.62], [3.06, 5.07, 0.0, 0.86]),
        CopulaFamily::Gumbel => ([-3.33, 0.13, 0.0, -0.51], [-4.16, 1.30, -0.11, -0.64], [-2.30, 1.35, 0.0, 0.0]),
    };
    ParameterVector::from_parts(&study1_spec(copula), &a, &c, &b, &[]).expect("static truth is well formed")
}

/// Age-only truth for each copula and margin; shapes are natural values.
pub fn study2_truth(copula: CopulaFamily, margin: MarginFamily) -> ParameterVector {
    use CopulaFamily::*;
    use MarginFamily::*;
    let (shapes, a, c, b): (&[f64], [f64; 2], [f64; 2], [f64; 2]) = match (margin, copula) {
        (Exponential, Normal) => (&[], [-3.44, 0.17], [-4.36, 1.39], [0.37, 0.29]),
        (Exponential, Clayton) => (&[], [-3.42, 0.38], [-4.28, 1.41], [0.62, 1.04]),
        (Exponential, Frank) => (&[], [-3.42, 0.37], [-4.27, 1.41], [3.44, 5.23]),
        (Exponential, Gumbel) => (&[], [-2.24, 1.35], [-4.36, 1.36], [-2.24, 1.35]),
        (Weibull, Normal) => (&[0.67, 1.03], [-2.68, 0.07], [-4.38, 1.37], [0.45, 0.28]),
        (Weibull, Clayton) => (&[0.71, 0.98], [-2.75, 0.26], [-4.30, 1.33], [0.55, 0.74]),
        (Weibull, Frank) => (&[0.70, 0.99], [-2.74, 0.26], [-4.25, 1.39], [3.54, 4.14]),
        (Weibull, Gumbel) => (&[0.68, 0.97], [-2.72, 0.05], [-4.23, 1.35], [-1.77, 1.06]),
        (Gompertz, Normal) => (&[0.001, 0.06], [-3.37, 0.14], [-4.79, 1.49], [0.36, 0.28]),
        (Gompertz, Clayton) => (&[0.004, 0.04], [-3.45, 0.36], [-4.55, 1.46], [0.58, 0.90]),
        (Gompertz, Frank) => (&[0.001, 0.04], [-3.42, 0.35], [-4.62, 1.51], [3.28, 4.05]),
        (Gompertz, Gumbel) => (&[0.001, 0.06], [-3.37, 0.11], [-4.82, 1.49], [-2.25, 1.31]),
    };
    ParameterVector::from_parts(&study2_spec(copula, margin), &a, &c, &b, shapes).expect("static truth is well formed")
}
