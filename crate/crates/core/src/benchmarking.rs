//! Benchmarks for the sensitivity parameters: the treatment confounding and
//! outcome partial correlation that observed covariates would have if they
//! were the omitted variable.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::regression::{decompose_omission, fit_wls, Dataset, FitResult, ModelSpec, OmissionDecomposition};
use crate::scalar::Scalar;
use crate::sensitivity::OmittedVariableScenario;

/// Whether a benchmarked group is part of the reference model or was held out of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Included,
    Candidate,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Included => "included",
            Role::Candidate => "candidate",
        }
    }
}

pub const CANDIDATE_CAVEAT: &str =
    "rho_sq of a measured candidate understates what an unmeasured confounder could attain";

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkEntry<T> {
    pub name: String,
    pub k: usize,
    /// Signed for single-column groups, the rescaled `√F` magnitude otherwise.
    pub t_w: T,
    pub f_w: T,
    pub rho_sq: T,
    /// Signed partial correlation (non-negative root when `k > 1`).
    pub rho: T,
    /// Signed t of the rank-1 surrogate `W·δ̂`; equals `t_w` when `k = 1`.
    pub t_effective: T,
    pub role: Role,
    /// Residual df of the outcome regression that omits this group.
    pub df: usize,
    /// Set when the group could not be benchmarked; numeric fields are then NaN.
    pub degenerate: Option<String>,
    pub caveat: Option<String>,
}

impl<T: Scalar> BenchmarkEntry<T> {
    fn from_decomposition(name: &str, role: Role, d: &OmissionDecomposition<T>) -> Self {
        Self {
            name: name.to_string(),
            k: d.k,
            t_w: d.t_w,
            f_w: d.f_w,
            rho_sq: d.rho_sq(),
            rho: d.rho,
            t_effective: d.t_effective,
            role,
            df: d.df,
            degenerate: None,
            caveat: (role == Role::Candidate).then(|| CANDIDATE_CAVEAT.to_string()),
        }
    }

    pub(crate) fn flagged(name: &str, role: Role, k: usize, reason: String) -> Self {
        Self {
            name: name.to_string(),
            k,
            t_w: T::nan(),
            f_w: T::nan(),
            rho_sq: T::nan(),
            rho: T::nan(),
            t_effective: T::nan(),
            role,
            df: 0,
            degenerate: Some(reason),
            caveat: None,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate.is_some()
    }

    /// The omitted-variable scenario this entry describes.
    pub fn scenario(&self) -> OmittedVariableScenario<T> {
        OmittedVariableScenario::new(self.t_w, self.rho, self.k).with_effective_t(self.t_effective)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkTable<T> {
    pub entries: Vec<BenchmarkEntry<T>>,
    pub baseline: FitResult<T>,
}

impl<T: Scalar> BenchmarkTable<T> {
    pub fn entry(&self, name: &str) -> Option<&BenchmarkEntry<T>> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Largest `|t_w|` among usable entries.
    pub fn max_abs_t(&self) -> Option<T> {
        self.entries
            .iter()
            .filter(|e| !e.is_degenerate())
            .map(|e| e.t_w.abs())
            .fold(None, |m, t| Some(m.map_or(t, |m: T| m.max(t))))
    }
}

/// Orders entries by `|t_w|` descending, then by name; flagged entries go last.
pub fn sort_entries<T: Scalar>(entries: &mut [BenchmarkEntry<T>]) {
    entries.sort_by(|a, b| {
        let key = |e: &BenchmarkEntry<T>| if e.is_degenerate() { None } else { Some(e.t_w.abs()) };
        match (key(a), key(b)) {
            (Some(x), Some(y)) => y.partial_cmp(&x).unwrap_or(Ordering::Equal),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        }
        .then_with(|| a.name.cmp(&b.name))
    });
}

fn is_flaggable(e: &Error) -> bool {
    matches!(
        e,
        Error::DegenerateVariance(_) | Error::TreatmentCollinear(_) | Error::NoResidualDf { .. }
    )
}

fn ensure_unique(groups: &[String]) -> Result<()> {
    for (i, g) in groups.iter().enumerate() {
        if groups[..i].contains(g) {
            return Err(Error::DuplicateName(g.clone()));
        }
    }
    Ok(())
}

fn benchmark_one<T: Scalar>(
    data: &Dataset<T>,
    spec: &ModelSpec,
    group: &str,
    role: Role,
) -> Result<BenchmarkEntry<T>> {
    let k = data.group(group)?.len();
    match decompose_omission(data, spec, group) {
        Ok(d) => Ok(BenchmarkEntry::from_decomposition(group, role, &d)),
        Err(e) if is_flaggable(&e) => {
            log::warn!("benchmark of `{group}` flagged: {e}");
            Ok(BenchmarkEntry::flagged(group, role, k, e.to_string()))
        }
        Err(e) => Err(e),
    }
}

/// Places each included covariate group in the role of the omitted variable,
/// one at a time.
///
/// For group `G`, `t_w` comes from regressing the treatment on the remaining
/// regressors plus `G`, and `rho_sq` is `ρ²_{y·G|z,X∖G}`.
pub fn benchmark_included<T: Scalar>(data: &Dataset<T>, spec: &ModelSpec) -> Result<BenchmarkTable<T>> {
    let baseline = fit_wls(data, spec)?;
    ensure_unique(&spec.covariates)?;
    let mut entries = spec
        .covariates
        .par_iter()
        .map(|g| {
            let reduced = spec.without_covariates(std::slice::from_ref(g));
            benchmark_one(data, &reduced, g, Role::Included)
        })
        .collect::<Result<Vec<_>>>()?;
    sort_entries(&mut entries);
    Ok(BenchmarkTable { entries, baseline })
}

/// Benchmarks groups that were deliberately left out of the model.
pub fn benchmark_candidates<T: Scalar>(
    data: &Dataset<T>,
    spec: &ModelSpec,
    candidates: &[String],
) -> Result<BenchmarkTable<T>> {
    ensure_unique(candidates)?;
    for c in candidates {
        data.group(c)?;
        if spec.covariates.contains(c) {
            return Err(Error::InvalidSpec(format!("candidate `{c}` is already a covariate")));
        }
    }
    let baseline = fit_wls(data, spec)?;
    let mut entries = candidates
        .par_iter()
        .map(|c| benchmark_one(data, spec, c, Role::Candidate))
        .collect::<Result<Vec<_>>>()?;
    sort_entries(&mut entries);
    Ok(BenchmarkTable { entries, baseline })
}

/// ρ² of a set of groups taken together as one multivariate omitted variable.
///
/// Groups already in `spec` are removed to form the reduced model; groups not
/// in it are added to form the full model.
pub fn joint_rho_sq<T: Scalar>(data: &Dataset<T>, spec: &ModelSpec, groups: &[String]) -> Result<T> {
    if groups.is_empty() {
        return Ok(T::zero());
    }
    ensure_unique(groups)?;
    let mut full = spec.clone();
    for g in groups {
        data.group(g)?;
        if !full.covariates.contains(g) {
            full.covariates.push(g.clone());
        }
    }
    let reduced = full.without_covariates(groups);
    let fit_reduced = fit_wls(data, &reduced)?;
    fit_reduced.require_imperfect(&spec.outcome)?;
    let fit_full = fit_wls(data, &full)?;
    let r = T::one() - fit_full.rss / fit_reduced.rss;
    Ok(r.max(T::zero()).min(T::one()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(name: &str, t: f64) -> BenchmarkEntry<f64> {
        BenchmarkEntry {
            name: name.into(),
            k: 1,
            t_w: t,
            f_w: t * t,
            rho_sq: 0.0,
            rho: 0.0,
            t_effective: t,
            role: Role::Included,
            df: 10,
            degenerate: None,
            caveat: None,
        }
    }

    #[test]
    fn sorting_uses_magnitude_then_name() {
        let mut v = vec![
            entry("b", 1.0),
            BenchmarkEntry::flagged("a", Role::Included, 1, "x".into()),
            entry("c", -3.0),
            entry("a2", 1.0),
        ];
        sort_entries(&mut v);
        let names: Vec<&str> = v.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, ["c", "a2", "b", "a"]);
    }

    #[test]
    fn role_labels() {
        assert_eq!(Role::Included.as_str(), "included");
        assert_eq!(serde_json::to_string(&Role::Candidate).unwrap(), "\"candidate\"");
    }
}
