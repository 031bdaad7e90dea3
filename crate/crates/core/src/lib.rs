//! Bivariate copula regression models for semi-competing risks.
//!
//! A non-terminal event (e.g. graft failure) and a terminal event (death) are
//! joined by a copula on their marginal survival functions. Marginal rates and
//! the copula association parameter depend on binary covariates through link
//! functions. The crate provides the censored joint likelihood, maximum
//! likelihood fitting with Delta-method inference, a data simulator, a Cox
//! comparator and a Monte Carlo study harness.

pub mod copulas;
pub mod cox;
pub mod dataset;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod likelihood;
pub mod margins;
pub mod optimize;
pub mod simulation;
pub mod special;

pub use copulas::{Copula, CopulaFamily};
pub use error::{ModelError, Result};
pub use likelihood::{LogLikelihood, ModelSpec, ParameterVector, SubjectRecord};
pub use margins::{HazardRatioEstimate, Margin, MarginFamily};
