//! Sensitivity of linear-regression treatment effects to omitted confounders.
//!
//! The crate fits weighted least-squares outcome regressions, measures how
//! strongly observed covariates are confounded with the treatment and with the
//! outcome ("benchmarking"), and turns hypothesized limits on those two
//! quantities into closed-form adjusted estimates, standard errors and
//! sensitivity intervals.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the usual double-precision instantiation.

pub mod benchmarking;
pub mod error;
pub mod ingest;
pub mod linalg;
pub mod propensity;
pub mod regression;
pub mod report;
pub mod scalar;
pub mod sensitivity;
pub mod targets;

pub use benchmarking::{
    benchmark_candidates, benchmark_included, joint_rho_sq, BenchmarkEntry, BenchmarkTable, Role,
};
pub use error::{Error, ErrorKind, Result};
pub use propensity::{
    benchmark_under_stratification, check_balance, fit_logistic, stratified_effect, subclassify,
    BalanceReport, PropensityModel, Stratification, StratifiedDesign,
};
pub use regression::{
    anova_f, decompose_omission, fit_wls, partial_corr, residualize, Dataset, FitResult, Given,
    ModelSpec, OmissionDecomposition,
};
pub use scalar::Scalar;
pub use sensitivity::{
    adjusted_se, interval_at, omitted_bias, sensitivity_interval, t_from_f, t_quantile,
    OmittedVariableScenario, Regime, SensitivityInterval, SensitivityZone,
};

pub use targets::{
    benchmark_target, ett_target, lincom, lincom_effect, target_sensitivity, treated_share, EffectTarget,
};

pub type BenchmarkTable64 = BenchmarkTable<f64>;
pub type Dataset64 = Dataset<f64>;
pub type FitResult64 = FitResult<f64>;
pub type OmissionDecomposition64 = OmissionDecomposition<f64>;
pub type Scenario64 = OmittedVariableScenario<f64>;
pub type SensitivityZone64 = SensitivityZone<f64>;
pub type SensitivityInterval64 = SensitivityInterval<f64>;
pub type EffectTarget64 = EffectTarget<f64>;
