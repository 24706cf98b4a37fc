use super::dataset::{Dataset, INTERCEPT};
use super::fit::{intercept_column, FitResult, WeightedLs};
use crate::error::{Error, Result};
use crate::scalar::{wdot, Scalar};

/// Conditioning set: covariate groups plus an optional intercept.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Given {
    pub groups: Vec<String>,
    pub intercept: bool,
}

impl Given {
    pub fn new<I, S>(groups: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            groups: groups.into_iter().map(Into::into).collect(),
            intercept: true,
        }
    }

    pub fn intercept_only() -> Self {
        Self {
            groups: Vec::new(),
            intercept: true,
        }
    }

    pub fn without_intercept(mut self) -> Self {
        self.intercept = false;
        self
    }

    pub(crate) fn projector<T: Scalar>(&self, data: &Dataset<T>) -> Result<Option<WeightedLs<T>>> {
        let ones = intercept_column(data.n());
        let mut cols: Vec<&[T]> = Vec::new();
        if self.intercept {
            cols.push(&ones);
        }
        for (_, c) in data.group_columns(&self.groups)? {
            cols.push(c);
        }
        if cols.is_empty() {
            return Ok(None);
        }
        Ok(Some(WeightedLs::new(&cols, data.weights())))
    }

    pub(crate) fn describe(&self) -> String {
        let mut parts: Vec<&str> = Vec::new();
        if self.intercept {
            parts.push(INTERCEPT);
        }
        parts.extend(self.groups.iter().map(String::as_str));
        parts.join(", ")
    }
}

/// `target − blp(target | given)` on every row.
pub fn residualize<T: Scalar>(data: &Dataset<T>, target: &str, given: &Given) -> Result<Vec<T>> {
    let y = data.column(target)?;
    Ok(match given.projector(data)? {
        Some(ls) => ls.residuals(y),
        None => y.to_vec(),
    })
}

/// Partial correlation `ρ_{y·w|given}` of a column with a covariate group.
///
/// For a single-column group this is the signed correlation of the two
/// residual vectors. For a group of rank `k > 1` it is the non-negative root of
/// the proportionate reduction in residual variance of `y` from adding the group,
/// which is the partial correlation of `y` with the projection of its
/// residual onto the group.
pub fn partial_corr<T: Scalar>(data: &Dataset<T>, y: &str, w_group: &str, given: &Given) -> Result<T> {
    let w = data.weights();
    let proj = given.projector(data)?;
    let resid = |v: &[T]| match &proj {
        Some(ls) => ls.residuals(v),
        None => v.to_vec(),
    };
    let y_perp = resid(data.column(y)?);
    let yy = wdot(w, &y_perp, &y_perp);
    let y_norm = wdot(w, data.column(y)?, data.column(y)?);
    if yy <= degenerate_tol::<T>(data.n()) * y_norm.max(T::min_positive_value()) {
        return Err(Error::DegenerateVariance(format!("{y} given {}", given.describe())));
    }
    let w_cols = data.group(w_group)?;
    let w_perp: Vec<Vec<T>> = w_cols
        .iter()
        .map(|c| data.column(c).map(|v| resid(v)))
        .collect::<Result<_>>()?;
    let degenerate = || Error::DegenerateVariance(format!("{w_group} given {}", given.describe()));

    if w_perp.len() == 1 {
        let wp = &w_perp[0];
        let ww = wdot(w, wp, wp);
        let raw = data.column(&w_cols[0])?;
        if ww <= degenerate_tol::<T>(data.n()) * wdot(w, raw, raw).max(T::min_positive_value()) {
            return Err(degenerate());
        }
        let r = wdot(w, &y_perp, wp) / (yy * ww).sqrt();
        return Ok(r.max(-T::one()).min(T::one()));
    }

    let refs: Vec<&[T]> = w_perp.iter().map(Vec::as_slice).collect();
    let ls = WeightedLs::new(&refs, w);
    let col_norm: T = w_cols
        .iter()
        .map(|c| data.column(c).map(|v| wdot(w, v, v)))
        .sum::<Result<T>>()?;
    let resid_norm: T = w_perp.iter().map(|v| wdot(w, v, v)).sum();
    if ls.rank() == 0 || resid_norm <= degenerate_tol::<T>(data.n()) * col_norm.max(T::min_positive_value()) {
        return Err(degenerate());
    }
    let r = ls.residuals(&y_perp);
    let rr = wdot(w, &r, &r);
    let rho2 = ((yy - rr) / yy).max(T::zero()).min(T::one());
    Ok(rho2.sqrt())
}

/// Relative squared-norm threshold under which a residual counts as zero.
pub(crate) fn degenerate_tol<T: Scalar>(n: usize) -> T {
    let t = T::epsilon() * T::from_usize_lossy(n) * T::lit(16.0);
    t * t
}

/// ANOVA F-statistic comparing nested fits that differ by `k` design ranks.
///
/// `F = [(SS₀ − SS₁)/k] / [SS₁ / df₁]`, where `df₁` is the residual degrees of
/// freedom of the larger model.
pub fn anova_f<T: Scalar>(fit_small: &FitResult<T>, fit_big: &FitResult<T>, k: usize) -> Result<T> {
    if k == 0 {
        return Err(Error::InvalidArgument("anova_f needs k >= 1".into()));
    }
    if fit_small.n_effective != fit_big.n_effective {
        return Err(Error::NotNested(format!(
            "fits use {} and {} rows",
            fit_small.n_effective, fit_big.n_effective
        )));
    }
    let scale = fit_small.weight_sum.abs().max(T::one());
    if (fit_small.weight_sum - fit_big.weight_sum).abs() > T::lit(1e-9) * scale {
        return Err(Error::NotNested("fits use different weights".into()));
    }
    if fit_small.df != fit_big.df + k {
        return Err(Error::NotNested(format!(
            "rank difference is {} but k = {k}",
            fit_small.df as i64 - fit_big.df as i64
        )));
    }
    let (ss0, ss1) = (fit_small.rss, fit_big.rss);
    let slack = T::lit(1e-10) * ss0.abs().max(T::min_positive_value());
    if ss1 > ss0 + slack {
        return Err(Error::NotNested(format!(
            "residual SS increases from {ss0} to {ss1}"
        )));
    }
    if ss1 <= T::zero() {
        return Err(Error::DegenerateVariance("larger model fits exactly".into()));
    }
    let num = (ss0 - ss1).max(T::zero()) / T::from_usize_lossy(k);
    let den = ss1 / T::from_usize_lossy(fit_big.df);
    Ok(num / den)
}
