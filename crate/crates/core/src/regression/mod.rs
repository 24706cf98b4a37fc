//! Weighted least-squares engine: fits, projections, partial correlations,
//! nested-model F tests and the refit decomposition of omitted-variable bias.

mod dataset;
mod fit;
mod omission;
mod projection;

pub use dataset::{Dataset, ModelSpec, INTERCEPT};
pub use fit::{fit_wls, FitResult};
pub use omission::{decompose_omission, Confounding, OmissionDecomposition};
pub use projection::{anova_f, partial_corr, residualize, Given};

pub(crate) use fit::{intercept_column, Design, WeightedLs};
pub(crate) use omission::treatment_confounding;
pub(crate) use projection::degenerate_tol;
