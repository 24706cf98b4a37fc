//! Effect targets built from the treatment main effect and treatment
//! interactions: subgroup effects, treated-weighted averages, and their
//! benchmarking regressions.

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarking::{sort_entries, BenchmarkEntry, BenchmarkTable, Role, CANDIDATE_CAVEAT};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::regression::{
    decompose_omission, fit_wls, intercept_column, treatment_confounding, Dataset, Design, FitResult,
    ModelSpec, INTERCEPT,
};
use crate::scalar::{wdot, Scalar};
use crate::sensitivity::{sensitivity_interval, SensitivityInterval, SensitivityZone};

/// A linear combination `Σ cⱼ θⱼ` of treatment-design coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectTarget<T> {
    pub label: String,
    pub combination: IndexMap<String, T>,
}

impl<T: Scalar> EffectTarget<T> {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            combination: IndexMap::new(),
        }
    }

    /// The plain treatment effect `{treatment: 1}`.
    pub fn main_effect(spec: &ModelSpec) -> Self {
        Self::new(spec.treatment.clone()).with(spec.treatment.clone(), T::one())
    }

    pub fn with(mut self, column: impl Into<String>, weight: T) -> Self {
        *self.combination.entry(column.into()).or_insert_with(T::zero) += weight;
        self
    }

    /// Checks that some weight is nonzero and every column is a treatment column of `spec`.
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if !self.combination.values().any(|w| *w != T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "target `{}` has no nonzero weight",
                self.label
            )));
        }
        let allowed = spec.treatment_columns();
        for (c, w) in &self.combination {
            if !w.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "target `{}` has a non-finite weight on `{c}`",
                    self.label
                )));
            }
            if !allowed.contains(c) {
                return Err(Error::InvalidSpec(format!(
                    "target `{}` refers to `{c}`, which is neither the treatment nor a treatment interaction",
                    self.label
                )));
            }
        }
        Ok(())
    }
}

/// `(cᵀθ, √(cᵀ V c))` for coefficients `theta` with covariance `vcov`.
pub fn lincom<T: Scalar>(theta: &[T], vcov: &Matrix<T>, c: &[T]) -> Result<(T, T)> {
    if theta.len() != c.len() || vcov.nrows() != c.len() || vcov.ncols() != c.len() {
        return Err(Error::InvalidArgument(format!(
            "lincom needs matching lengths, got {} coefficients, {}x{} covariance and {} weights",
            theta.len(),
            vcov.nrows(),
            vcov.ncols(),
            c.len()
        )));
    }
    let est = theta.iter().zip(c).map(|(&a, &b)| a * b).sum();
    let var = vcov.quad_form(c);
    if var < T::zero() {
        return Err(Error::DegenerateVariance("linear combination has negative variance".into()));
    }
    Ok((est, var.sqrt()))
}

/// Estimate and standard error of a target from a fitted model.
pub fn lincom_effect<T: Scalar>(fit: &FitResult<T>, target: &EffectTarget<T>) -> Result<(T, T)> {
    let idx: Vec<(usize, T)> = target
        .combination
        .iter()
        .filter(|(_, w)| **w != T::zero())
        .map(|(c, w)| fit.index_of(c).map(|j| (j, *w)))
        .collect::<Result<_>>()?;
    if idx.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "target `{}` has no nonzero weight",
            target.label
        )));
    }
    for &(j, _) in &idx {
        if fit.aliased[j] {
            return Err(Error::DegenerateVariance(format!(
                "`{}` is aliased in the fit",
                fit.names[j]
            )));
        }
    }
    let m = idx.len();
    let theta: Vec<T> = idx.iter().map(|&(j, _)| fit.coefficients[j]).collect();
    let c: Vec<T> = idx.iter().map(|&(_, w)| w).collect();
    let mut v = Matrix::zeros(m, m);
    for (a, &(ja, _)) in idx.iter().enumerate() {
        for (b, &(jb, _)) in idx.iter().enumerate() {
            v.set(a, b, fit.vcov.get(ja, jb));
        }
    }
    lincom(&theta, &v, &c)
}

/// Share of the treated (weighted) that fall in the subgroup marked by an
/// interaction column, `Σ w·(Z·X) / Σ w·Z`.
pub fn treated_share<T: Scalar>(data: &Dataset<T>, treatment: &str, interaction: &str) -> Result<T> {
    let w = data.weights();
    let z = data.column(treatment)?;
    let zx = data.column(interaction)?;
    let ones = vec![T::one(); data.n()];
    let treated = wdot(w, z, &ones);
    if treated <= T::zero() {
        return Err(Error::DegenerateVariance(format!("no treated rows in `{treatment}`")));
    }
    Ok(wdot(w, zx, &ones) / treated)
}

/// Treated-weighted average effect: the main effect plus, for each
/// interaction, its treated share times the interaction coefficient.
pub fn ett_target<T: Scalar>(data: &Dataset<T>, spec: &ModelSpec) -> Result<EffectTarget<T>> {
    let mut t = EffectTarget::main_effect(spec);
    t.label = "ETT".into();
    for ix in &spec.interactions {
        let share = treated_share(data, &spec.treatment, ix)?;
        t = t.with(ix.clone(), share);
    }
    Ok(t)
}

/// Benchmarks candidate omitted groups against a target.
///
/// The target's pseudo-treatment `Z* = Σ cⱼ·(column j)` is regressed on the
/// covariates plus each candidate. When the model has interaction terms the
/// resulting statistic is multiplied by `[(df + 1)/df]^{1/2}`, `df` being the
/// outcome regression's residual degrees of freedom. `rho_sq` comes from
/// adding the candidate to the outcome regression.
pub fn benchmark_target<T: Scalar>(
    data: &Dataset<T>,
    spec: &ModelSpec,
    target: &EffectTarget<T>,
    candidates: &[String],
) -> Result<BenchmarkTable<T>> {
    target.validate(spec)?;
    for (i, c) in candidates.iter().enumerate() {
        data.group(c)?;
        if candidates[..i].contains(c) {
            return Err(Error::DuplicateName(c.clone()));
        }
        if spec.covariates.contains(c) {
            return Err(Error::InvalidSpec(format!("candidate `{c}` is already a covariate")));
        }
    }
    let baseline = fit_wls(data, spec)?;

    let mut z_star = vec![T::zero(); data.n()];
    for (c, &wt) in &target.combination {
        for (o, &v) in z_star.iter_mut().zip(data.column(c)?) {
            *o += wt * v;
        }
    }
    let ones = intercept_column(data.n());
    let mut x_design = Design::new();
    if spec.intercept {
        x_design.push(INTERCEPT, &ones);
    }
    x_design.push_groups(data, &spec.covariates)?;

    let factor = if spec.interactions.is_empty() {
        T::one()
    } else {
        let df = T::from_usize_lossy(baseline.df);
        ((df + T::one()) / df).sqrt()
    };

    let mut entries = candidates
        .par_iter()
        .map(|c| {
            let k = data.group(c)?.len();
            let flag = |e: Error| -> Result<BenchmarkEntry<T>> {
                match e {
                    Error::DegenerateVariance(_) | Error::TreatmentCollinear(_) | Error::NoResidualDf { .. } => {
                        log::warn!("target benchmark of `{c}` flagged: {e}");
                        Ok(BenchmarkEntry::flagged(c, Role::Candidate, k, e.to_string()))
                    }
                    e => Err(e),
                }
            };
            let d = match decompose_omission(data, spec, c) {
                Ok(d) => d,
                Err(e) => return flag(e),
            };
            let w_cols: Vec<(&str, &[T])> = data
                .group(c)?
                .iter()
                .map(|name| data.column(name).map(|v| (name.as_str(), v)))
                .collect::<Result<_>>()?;
            let conf = match treatment_confounding(&z_star, &x_design, &w_cols, data.weights(), spec.intercept) {
                Ok(conf) => conf,
                Err(e) => return flag(e),
            };
            let t_effective = if d.k == 1 && w_cols.len() == 1 {
                conf.t_w
            } else {
                treatment_confounding(
                    &z_star,
                    &x_design,
                    &[("w_tilde", d.w_tilde.as_slice())],
                    data.weights(),
                    spec.intercept,
                )
                .map(|c| c.t_w)
                .unwrap_or_else(|_| T::zero())
            };
            Ok(BenchmarkEntry {
                name: c.clone(),
                k: d.k,
                t_w: conf.t_w * factor,
                f_w: conf.f_w,
                rho_sq: d.rho_sq(),
                rho: d.rho,
                t_effective: t_effective * factor,
                role: Role::Candidate,
                df: d.df,
                degenerate: None,
                caveat: Some(CANDIDATE_CAVEAT.to_string()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    sort_entries(&mut entries);
    Ok(BenchmarkTable { entries, baseline })
}

/// Sensitivity interval around a target's estimate.
pub fn target_sensitivity<T: Scalar>(
    fit: &FitResult<T>,
    target: &EffectTarget<T>,
    df: usize,
    q: T,
    zone: &SensitivityZone<T>,
) -> Result<SensitivityInterval<T>> {
    let (est, se) = lincom_effect(fit, target)?;
    sensitivity_interval(est, se, df, q, zone)
}
