//! Closed-form effects of an omitted regressor `W` on the treatment
//! coefficient, its standard error and its confidence interval, and the
//! union of those intervals over a sensitivity zone.
//!
//! Everything here is arithmetic on summary statistics: the standard error
//! `SE(b̂)` and estimate `b̂` of the fit without `W`, its residual degrees of
//! freedom `df`, and the two sensitivity parameters: the treatment
//! confounding `t_W` and the partial correlation `ρ = ρ_{y·w|zx}`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A hypothesized omitted variable, described by its sensitivity parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmittedVariableScenario<T> {
    /// Treatment confounding; signed for the point formulas.
    pub t_w: T,
    /// Partial correlation of `W` with the outcome given treatment and covariates.
    pub rho: T,
    /// Rank of `W`.
    pub k: usize,
    /// Signed t-statistic of the rank-1 surrogate of a multi-column `W`, when
    /// known. The bias uses it in place of `t_w`; the standard error always
    /// uses `t_w`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_effective: Option<T>,
}

impl<T: Scalar> OmittedVariableScenario<T> {
    pub fn new(t_w: T, rho: T, k: usize) -> Self {
        Self {
            t_w,
            rho,
            k,
            t_effective: None,
        }
    }

    /// Scenario given `ρ²` instead of `ρ`, taking `ρ ≥ 0`.
    pub fn from_rho_sq(t_w: T, rho_sq: T, k: usize) -> Self {
        Self::new(t_w, rho_sq.sqrt(), k)
    }

    pub fn with_effective_t(mut self, t: T) -> Self {
        self.t_effective = Some(t);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("rank k must be at least 1".into()));
        }
        if !self.t_w.is_finite() || self.t_effective.is_some_and(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("treatment confounding must be finite".into()));
        }
        if !(self.rho.abs() < T::one()) {
            return Err(Error::InvalidArgument(format!(
                "partial correlation must lie in (-1, 1), got {}",
                self.rho
            )));
        }
        Ok(())
    }

    fn bias_t(&self) -> T {
        self.t_effective.unwrap_or(self.t_w)
    }
}

/// Permissible region `|t_W| ≤ T`, `ρ² ≤ R` for a hypothesized `W` of rank `k`.
///
/// `R = 1` means `ρ` is unrestricted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityZone<T> {
    pub t_bound: T,
    pub r_bound: T,
    pub k: usize,
}

impl<T: Scalar> SensitivityZone<T> {
    pub fn new(t_bound: T, r_bound: T) -> Self {
        Self {
            t_bound,
            r_bound,
            k: 1,
        }
    }

    pub fn unrestricted(t_bound: T) -> Self {
        Self::new(t_bound, T::one())
    }

    pub fn with_rank(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_bound >= T::zero()) || !self.t_bound.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "zone bound T must be finite and non-negative, got {}",
                self.t_bound
            )));
        }
        if !(self.r_bound >= T::zero() && self.r_bound <= T::one()) {
            return Err(Error::InvalidArgument(format!(
                "zone bound R must lie in [0, 1], got {}",
                self.r_bound
            )));
        }
        if self.k == 0 {
            return Err(Error::InvalidArgument("rank k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Which closed form produced a sensitivity interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `ρ` unrestricted (`R = 1`): `b ± √(T² + q²g(T)²)·SE`.
    Norho,
    /// `R` at or below the threshold: extremes at the zone corner, `b ± [T√R + q·g(T)·√(1−R)]·SE`.
    BiasDriven,
    /// `R` above the threshold but below 1: the unrestricted bound is attained.
    SharpUnrestricted,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Norho => "norho",
            Regime::BiasDriven => "bias_driven",
            Regime::SharpUnrestricted => "sharp_unrestricted",
        }
    }
}

/// Union of confidence intervals over a sensitivity zone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityInterval<T> {
    pub lower: T,
    pub upper: T,
    pub regime: Regime,
    pub q: T,
    pub df: usize,
    /// `T²/(T² + q²g(T)²)`, the value of `R` at which the regimes meet.
    pub threshold: T,
}

fn check_df(df: usize, k: usize) -> Result<()> {
    if df <= k {
        return Err(Error::DfTooSmall { df, k });
    }
    Ok(())
}

/// Standard-error inflation factor `g(t, df) = [1 + (k + t²)/(df − k)]^{1/2}`.
pub fn se_factor<T: Scalar>(t: T, df: usize, k: usize) -> Result<T> {
    check_df(df, k)?;
    let kk = T::from_usize_lossy(k);
    Ok((T::one() + (kk + t * t) / (T::from_usize_lossy(df) - kk)).sqrt())
}

/// `SE(b̂)·t_W·ρ`: the bias `b̂ − β̂` from omitting `W` (exact for `k = 1`, or
/// when the scenario carries the surrogate's t; otherwise a bound on its magnitude).
pub fn omitted_bias<T: Scalar>(se_b: T, scenario: &OmittedVariableScenario<T>) -> T {
    se_b * scenario.bias_t() * scenario.rho
}

/// `SE(β̂) = SE(b̂)·g(t_W, df)·√(1 − ρ²)`.
pub fn adjusted_se<T: Scalar>(se_b: T, scenario: &OmittedVariableScenario<T>, df: usize) -> Result<T> {
    scenario.validate()?;
    let g = se_factor(scenario.t_w, df, scenario.k)?;
    Ok(se_b * g * (T::one() - scenario.rho * scenario.rho).sqrt())
}

/// Treatment confounding of a rank-`k` group from its ANOVA F-statistic:
/// `t_W = [k·df/(df + 1 − k) · F]^{1/2}`.
pub fn t_from_f<T: Scalar>(f: T, k: usize, df: usize) -> Result<T> {
    if k == 0 {
        return Err(Error::InvalidArgument("rank k must be at least 1".into()));
    }
    if df + 1 <= k {
        return Err(Error::DfTooSmall { df, k });
    }
    if !(f >= T::zero()) {
        return Err(Error::InvalidArgument(format!("F must be non-negative, got {f}")));
    }
    let kk = T::from_usize_lossy(k);
    let d = T::from_usize_lossy(df);
    Ok((kk * d / (d + T::one() - kk) * f).sqrt())
}

/// The interval `β̂ ± q·SE(β̂)` that would be reported if a `W` with these
/// statistics were added: `b − bias ± q·SE(β̂)`.
pub fn interval_at<T: Scalar>(
    b: T,
    se_b: T,
    df: usize,
    q: T,
    scenario: &OmittedVariableScenario<T>,
) -> Result<(T, T)> {
    if !(q > T::zero()) {
        return Err(Error::InvalidArgument(format!("q must be positive, got {q}")));
    }
    let se = adjusted_se(se_b, scenario, df)?;
    let center = b - omitted_bias(se_b, scenario);
    Ok((center - q * se, center + q * se))
}

/// Value of `R` at which the bias-driven and unrestricted forms coincide.
pub fn regime_threshold<T: Scalar>(t_bound: T, q: T, df: usize, k: usize) -> Result<T> {
    let g = se_factor(t_bound, df, k)?;
    let t2 = t_bound * t_bound;
    let denom = t2 + q * q * g * g;
    Ok(if denom > T::zero() { t2 / denom } else { T::zero() })
}

/// Union of `interval_at` over the zone `|t| ≤ T`, `ρ² ≤ R`.
pub fn sensitivity_interval<T: Scalar>(
    b: T,
    se_b: T,
    df: usize,
    q: T,
    zone: &SensitivityZone<T>,
) -> Result<SensitivityInterval<T>> {
    zone.validate()?;
    if !(q > T::zero()) {
        return Err(Error::InvalidArgument(format!("q must be positive, got {q}")));
    }
    let (t, r) = (zone.t_bound, zone.r_bound);
    let g = se_factor(t, df, zone.k)?;
    let threshold = regime_threshold(t, q, df, zone.k)?;
    let (half, regime) = if r >= T::one() {
        ((t * t + q * q * g * g).sqrt(), Regime::Norho)
    } else if r <= threshold {
        (t * r.sqrt() + q * g * (T::one() - r).sqrt(), Regime::BiasDriven)
    } else {
        ((t * t + q * q * g * g).sqrt(), Regime::SharpUnrestricted)
    };
    Ok(SensitivityInterval {
        lower: b - half * se_b,
        upper: b + half * se_b,
        regime,
        q,
        df,
        threshold,
    })
}

/// Two-sided confidence multiplier: the `(1 + level)/2` quantile of Student's t
/// with `df` degrees of freedom.
pub fn t_quantile<T: Scalar>(level: f64, df: usize) -> Result<T> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    if df == 0 {
        return Err(Error::NoResidualDf { df: 0 });
    }
    let p = 0.5 + level / 2.0;
    let d = df as f64;
    let q = if df > 100_000 {
        // Cornish-Fisher expansion around the normal quantile
        let z = Normal::standard().inverse_cdf(p);
        let (z3, z5) = (z.powi(3), z.powi(5));
        z + (z3 + z) / (4.0 * d) + (5.0 * z5 + 16.0 * z3 + 3.0 * z) / (96.0 * d * d)
    } else {
        StudentsT::new(0.0, 1.0, d)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .inverse_cdf(p)
    };
    Ok(T::lit(q))
}
