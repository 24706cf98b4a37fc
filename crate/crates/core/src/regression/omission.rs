use serde::Serialize;

use super::dataset::{Dataset, ModelSpec};
use super::fit::{fit_design, fit_wls, intercept_column, Design, WeightedLs};
use super::projection::anova_f;
use crate::error::{Error, Result};
use crate::scalar::{wdot, Scalar};
use crate::sensitivity::{t_from_f, OmittedVariableScenario};

/// Treatment confounding of a covariate group: its t-statistic (rank 1) or
/// rescaled ANOVA F (rank k > 1) in the regression of a treatment variable on
/// base regressors plus the group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Confounding<T> {
    /// Signed t for single-column rank-1 groups, `+√(k·df/(df+1−k)·F)` otherwise.
    pub t_w: T,
    pub f_w: T,
    pub k: usize,
    /// Residual df of the outcome regression without the group (`n − rank(base) − 1`).
    pub df: usize,
}

/// Regresses `target` on `base` with and without the extra columns `w`.
pub(crate) fn treatment_confounding<T: Scalar>(
    target: &[T],
    base: &Design<'_, T>,
    w: &[(&str, &[T])],
    weights: &[T],
    intercept: bool,
) -> Result<Confounding<T>> {
    let small = fit_design(base, target, weights, intercept)?;
    let mut big_design = Design::new();
    for (n, c) in base.names.iter().zip(&base.columns) {
        big_design.push(n, c);
    }
    for (n, c) in w {
        big_design.push(n, c);
    }
    let big = fit_design(&big_design, target, weights, intercept)?;
    let k = small.df - big.df;
    if k == 0 {
        let names: Vec<&str> = w.iter().map(|(n, _)| *n).collect();
        return Err(Error::DegenerateVariance(format!(
            "{} is collinear with the remaining regressors",
            names.join(", ")
        )));
    }
    if small.df < 2 {
        return Err(Error::NoResidualDf {
            df: small.df as i64 - 1,
        });
    }
    let df = small.df - 1;
    let f_w = anova_f(&small, &big, k)?;
    let t_w = if k == 1 && w.len() == 1 {
        let j = big.names.len() - 1;
        big.coefficients[j] / big.se[j]
    } else {
        t_from_f(f_w, k, df)?
    };
    Ok(Confounding { t_w, f_w, k, df })
}

/// The pieces of the omitted-variable identity `b̂ − β̂ = B*·δ̂`, computed by
/// refitting with and without the group `W`.
///
/// For a group of rank `k > 1` the rank-1 surrogate `W̃ = W·δ̂` is formed
/// explicitly: adding `W̃` instead of `W` leaves the treatment coefficient and
/// residual sum of squares unchanged, its coefficient is `δ̂₁ = 1`, and `b_star`
/// is its regression coefficient on the treatment given the other regressors.
#[derive(Debug, Clone, Serialize)]
pub struct OmissionDecomposition<T> {
    /// Treatment coefficient without `W`.
    pub b_hat: T,
    pub se_b: T,
    /// Treatment coefficient with `W`.
    pub beta_hat: T,
    pub se_beta: T,
    /// Coefficients on the columns of `W` in the fit that includes it.
    pub delta_hat: Vec<T>,
    /// Coefficient on the rank-1 surrogate (`δ̂` itself when `k = 1`).
    pub delta_effective: T,
    pub b_star: T,
    /// `ρ_{y·w|zx}`; signed when `k = 1`, non-negative otherwise.
    pub rho: T,
    /// Treatment confounding of `W` (rescaled √F when `k > 1`).
    pub t_w: T,
    /// Signed t-statistic of the rank-1 surrogate; equals `t_w` when `k = 1`.
    pub t_effective: T,
    pub f_w: T,
    pub k: usize,
    /// Residual df of the outcome regression without `W`.
    pub df: usize,
    #[serde(skip)]
    pub w_tilde: Vec<T>,
}

impl<T: Scalar> OmissionDecomposition<T> {
    pub fn scenario(&self) -> OmittedVariableScenario<T> {
        OmittedVariableScenario::new(self.t_w, self.rho, self.k).with_effective_t(self.t_effective)
    }

    pub fn rho_sq(&self) -> T {
        self.rho * self.rho
    }
}

/// Refits the outcome regression with the covariate group `w` added and
/// decomposes the change in the treatment coefficient.
pub fn decompose_omission<T: Scalar>(
    data: &Dataset<T>,
    spec: &ModelSpec,
    w: &str,
) -> Result<OmissionDecomposition<T>> {
    if spec.covariates.iter().any(|g| g == w) {
        return Err(Error::InvalidSpec(format!("`{w}` is already a covariate")));
    }
    let fit0 = fit_wls(data, spec)?;
    fit0.require_imperfect(&spec.outcome)?;
    let spec1 = spec.with_covariate(w);
    let fit1 = fit_wls(data, &spec1)?;
    let k = fit0.df - fit1.df;
    if k == 0 {
        return Err(Error::DegenerateVariance(format!(
            "{w} lies in the span of the included regressors"
        )));
    }
    let weights = data.weights();
    let y = data.column(&spec.outcome)?;
    let ones = intercept_column(data.n());
    let zx = Design::for_spec(data, spec, &ones)?;
    let t_idx = zx.treatment.expect("spec design has a treatment");

    let w_cols: Vec<(&str, &[T])> = data
        .group(w)?
        .iter()
        .map(|c| data.column(c).map(|v| (c.as_str(), v)))
        .collect::<Result<_>>()?;
    let delta_hat: Vec<T> = w_cols
        .iter()
        .map(|(c, _)| fit1.coef(c))
        .collect::<Result<_>>()?;

    // X: every outcome regressor except the main treatment column
    let mut x_design = Design::new();
    for (j, (n, c)) in zx.names.iter().zip(&zx.columns).enumerate() {
        if j != t_idx {
            x_design.push(n, c);
        }
    }
    let conf = treatment_confounding(data.column(&spec.treatment)?, &x_design, &w_cols, weights, spec.intercept)?;

    let pzx = WeightedLs::new(&zx.columns, weights);
    let y_perp = pzx.residuals(y);
    let yy = wdot(weights, &y_perp, &y_perp);

    let (w_tilde, delta_effective, rho, t_effective) = if k == 1 && w_cols.len() == 1 {
        let wv = w_cols[0].1;
        let w_perp = pzx.residuals(wv);
        let ww = wdot(weights, &w_perp, &w_perp);
        if ww <= T::zero() {
            return Err(Error::DegenerateVariance(w.to_string()));
        }
        let rho = wdot(weights, &y_perp, &w_perp) / (yy * ww).sqrt();
        (wv.to_vec(), delta_hat[0], rho, conf.t_w)
    } else {
        let mut wt = vec![T::zero(); data.n()];
        for ((_, col), d) in w_cols.iter().zip(&delta_hat) {
            if d.is_nan() {
                continue;
            }
            for (o, &v) in wt.iter_mut().zip(col.iter()) {
                *o += *d * v;
            }
        }
        let rho2 = ((fit0.rss - fit1.rss) / fit0.rss).max(T::zero()).min(T::one());
        let t_tilde = treatment_confounding(
            data.column(&spec.treatment)?,
            &x_design,
            &[("w_tilde", wt.as_slice())],
            weights,
            spec.intercept,
        )
        .map(|c| c.t_w)
        .unwrap_or_else(|_| T::zero());
        (wt, T::one(), rho2.sqrt(), t_tilde)
    };

    let b_star = pzx
        .coefficients(&w_tilde)
        .get(t_idx)
        .copied()
        .flatten()
        .unwrap_or_else(T::nan);

    Ok(OmissionDecomposition {
        b_hat: fit0.treatment_coef()?,
        se_b: fit0.treatment_se()?,
        beta_hat: fit1.treatment_coef()?,
        se_beta: fit1.treatment_se()?,
        delta_hat,
        delta_effective,
        b_star,
        rho,
        t_w: conf.t_w,
        t_effective,
        f_w: conf.f_w,
        k,
        df: fit0.df,
        w_tilde,
    })
}
