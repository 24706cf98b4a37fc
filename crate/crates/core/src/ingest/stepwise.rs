use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::config::{Criterion, StepwiseSettings};
use crate::error::{Error, Result};
use crate::regression::{anova_f, fit_wls, Dataset, FitResult, ModelSpec};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Serialize)]
pub struct StepwiseStep<T> {
    pub removed: String,
    pub k: usize,
    /// Partial F of the removed group against the model it was removed from.
    pub f: T,
    pub p_value: T,
    /// AIC after the removal.
    pub aic: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct StepwiseResult<T> {
    pub spec: ModelSpec,
    pub trace: Vec<StepwiseStep<T>>,
}

fn aic<T: Scalar>(fit: &FitResult<T>) -> T {
    let n = T::from_usize_lossy(fit.n_effective);
    n * (fit.rss / fit.weight_sum).ln() + T::lit(2.0) * T::from_usize_lossy(fit.rank + 1)
}

struct Candidate<T> {
    group: String,
    k: usize,
    f: T,
    p: T,
    aic: T,
}

fn evaluate<T: Scalar>(data: &Dataset<T>, current: &ModelSpec, fit: &FitResult<T>, group: &str) -> Result<Candidate<T>> {
    let reduced = current.without_covariates(&[group.to_string()]);
    let small = fit_wls(data, &reduced)?;
    let k = small.df - fit.df;
    let (f, p) = if k == 0 {
        (T::zero(), T::one())
    } else {
        let f = anova_f(&small, fit, k)?;
        let dist = FisherSnedecor::new(k as f64, fit.df as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        (f, T::lit(dist.sf(f.as_f64())))
    };
    Ok(Candidate {
        group: group.to_string(),
        k,
        f,
        p,
        aic: aic(&small),
    })
}

/// Groups that may not be removed: the configured ones plus every moderator
/// appearing in a treatment interaction.
fn protected_groups<T: Scalar>(data: &Dataset<T>, spec: &ModelSpec, keep: &[String]) -> Vec<String> {
    let mut out = keep.to_vec();
    let prefix = format!("{}:", spec.treatment);
    for ix in &spec.interactions {
        if let Some(g) = ix.strip_prefix(&prefix).and_then(|c| data.group_of(c)) {
            out.push(g.to_string());
        }
    }
    out
}

/// Backward elimination over covariate groups.
///
/// Under [`Criterion::Pvalue`] the group with the largest partial-F p-value is
/// dropped while that p-value exceeds `alpha`; under [`Criterion::Aic`] the
/// group whose removal lowers AIC most is dropped while any removal lowers it.
/// Ties go to the group listed first. The treatment is never a candidate.
pub fn stepwise_select<T: Scalar>(
    data: &Dataset<T>,
    full: &ModelSpec,
    settings: &StepwiseSettings,
) -> Result<StepwiseResult<T>> {
    let fit = fit_wls(data, full)?;
    if let Some(j) = fit.aliased.iter().position(|&a| a) {
        return Err(Error::DegenerateVariance(format!(
            "full model is rank deficient (`{}` is aliased)",
            fit.names[j]
        )));
    }
    fit.require_imperfect(&full.outcome)?;
    let protected = protected_groups(data, full, &settings.keep);
    let alpha = T::lit(settings.alpha);
    let mut current = full.clone();
    let mut current_fit = fit;
    let mut trace = Vec::new();
    loop {
        let removable: Vec<&String> = current.covariates.iter().filter(|g| !protected.contains(g)).collect();
        if removable.is_empty() {
            break;
        }
        let cands = removable
            .par_iter()
            .map(|g| evaluate(data, &current, &current_fit, g))
            .collect::<Result<Vec<_>>>()?;
        let pick = match settings.criterion {
            Criterion::Pvalue => cands
                .iter()
                .enumerate()
                .fold(None::<(usize, T)>, |best, (i, c)| match best {
                    Some((_, p)) if c.p <= p => best,
                    _ => Some((i, c.p)),
                })
                .filter(|&(_, p)| p > alpha)
                .map(|(i, _)| i),
            Criterion::Aic => {
                let now = aic(&current_fit);
                cands
                    .iter()
                    .enumerate()
                    .fold(None::<(usize, T)>, |best, (i, c)| match best {
                        Some((_, a)) if c.aic >= a => best,
                        _ => Some((i, c.aic)),
                    })
                    .filter(|&(_, a)| a < now)
                    .map(|(i, _)| i)
            }
        };
        let Some(i) = pick else { break };
        let c = &cands[i];
        log::info!(
            "stepwise: removing `{}` (k = {}, F = {}, p = {}, AIC = {})",
            c.group,
            c.k,
            c.f,
            c.p,
            c.aic
        );
        current = current.without_covariates(&[c.group.clone()]);
        current_fit = fit_wls(data, &current)?;
        trace.push(StepwiseStep {
            removed: c.group.clone(),
            k: c.k,
            f: c.f,
            p_value: c.p,
            aic: c.aic,
        });
    }
    Ok(StepwiseResult { spec: current, trace })
}
