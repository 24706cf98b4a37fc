use serde::Serialize;

use super::dataset::{Dataset, ModelSpec, INTERCEPT};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, PivotedQr};
use crate::scalar::{wdot, Scalar};

/// Weighted least-squares projector onto the span of a fixed set of columns.
///
/// Rows are scaled by `√wᵢ`; zero-weight rows are left out of the factorization
/// and receive residuals computed from the fitted coefficients.
#[derive(Debug, Clone)]
pub(crate) struct WeightedLs<T> {
    qr: PivotedQr<T>,
    rows: Vec<usize>,
    sqrt_w: Vec<T>,
    n: usize,
    columns: Vec<Vec<T>>,
}

impl<T: Scalar> WeightedLs<T> {
    pub fn new(columns: &[&[T]], weights: &[T]) -> Self {
        let n = weights.len();
        let rows: Vec<usize> = (0..n).filter(|&i| weights[i] > T::zero()).collect();
        let sqrt_w: Vec<T> = rows.iter().map(|&i| weights[i].sqrt()).collect();
        let m = rows.len();
        let mut a = Matrix::zeros(m, columns.len());
        for (j, col) in columns.iter().enumerate() {
            let dst = a.col_mut(j);
            for (k, &i) in rows.iter().enumerate() {
                dst[k] = col[i] * sqrt_w[k];
            }
        }
        Self {
            qr: PivotedQr::new(a),
            rows,
            sqrt_w,
            n,
            columns: columns.iter().map(|c| c.to_vec()).collect(),
        }
    }

    pub fn rank(&self) -> usize {
        self.qr.rank()
    }

    pub fn n_effective(&self) -> usize {
        self.rows.len()
    }

    pub fn aliased(&self) -> Vec<usize> {
        self.qr.aliased_columns()
    }

    fn scaled(&self, y: &[T]) -> Vec<T> {
        self.rows.iter().zip(&self.sqrt_w).map(|(&i, &s)| y[i] * s).collect()
    }

    pub fn coefficients(&self, y: &[T]) -> Vec<Option<T>> {
        self.qr.solve(&self.scaled(y))
    }

    /// Residuals of `y` on all `n` rows.
    pub fn residuals(&self, y: &[T]) -> Vec<T> {
        let scaled_resid = self.qr.residuals(&self.scaled(y));
        let mut out = vec![T::zero(); self.n];
        if self.rows.len() < self.n {
            let coef = self.coefficients(y);
            for (i, o) in out.iter_mut().enumerate() {
                let fitted: T = coef
                    .iter()
                    .zip(&self.columns)
                    .map(|(b, c)| b.unwrap_or_else(T::zero) * c[i])
                    .sum();
                *o = y[i] - fitted;
            }
        }
        for ((&i, &s), r) in self.rows.iter().zip(&self.sqrt_w).zip(scaled_resid) {
            out[i] = r / s;
        }
        out
    }

    pub fn unscaled_covariance(&self) -> Matrix<T> {
        self.qr.unscaled_covariance()
    }
}

/// Result of a weighted least-squares fit.
///
/// Moments follow the `Σwᵢ`-normalized inner product: `sigma_y_given_zx` is
/// `(Σ wᵢ rᵢ² / Σ wᵢ)^{1/2}`, so the nominal standard error of the treatment
/// coefficient is `df^{-1/2} · sigma_y_given_zx / sigma_z_given_x`.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult<T> {
    pub names: Vec<String>,
    /// NaN for aliased columns.
    pub coefficients: Vec<T>,
    pub aliased: Vec<bool>,
    pub se: Vec<T>,
    #[serde(skip)]
    pub vcov: Matrix<T>,
    pub df: usize,
    pub rank: usize,
    pub n_effective: usize,
    pub weight_sum: T,
    /// Weighted residual sum of squares `Σ wᵢ rᵢ²`.
    pub rss: T,
    pub tss: T,
    pub r_squared: T,
    #[serde(skip)]
    pub residuals: Vec<T>,
    /// Conventional residual standard deviation `(rss / df)^{1/2}`.
    pub sigma: T,
    pub sigma_y_given_zx: T,
    /// NaN when the fit has no treatment column.
    pub sigma_z_given_x: T,
    pub treatment: Option<usize>,
    pub intercept: bool,
}

impl<T: Scalar> FitResult<T> {
    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn coef(&self, name: &str) -> Result<T> {
        Ok(self.coefficients[self.index_of(name)?])
    }

    pub fn se_of(&self, name: &str) -> Result<T> {
        Ok(self.se[self.index_of(name)?])
    }

    pub fn t_value(&self, name: &str) -> Result<T> {
        let j = self.index_of(name)?;
        Ok(self.coefficients[j] / self.se[j])
    }

    pub fn treatment_index(&self) -> Result<usize> {
        self.treatment
            .ok_or_else(|| Error::InvalidSpec("fit has no treatment column".into()))
    }

    pub fn treatment_coef(&self) -> Result<T> {
        Ok(self.coefficients[self.treatment_index()?])
    }

    pub fn treatment_se(&self) -> Result<T> {
        Ok(self.se[self.treatment_index()?])
    }

    /// `estimate ± q · se` for a named coefficient.
    pub fn confint(&self, name: &str, q: T) -> Result<(T, T)> {
        let j = self.index_of(name)?;
        let (b, s) = (self.coefficients[j], self.se[j]);
        Ok((b - q * s, b + q * s))
    }

    /// Errors when the fit explains all outcome variation.
    pub fn require_imperfect(&self, what: &str) -> Result<()> {
        let scale = self.tss.max(T::min_positive_value());
        if self.rss <= super::degenerate_tol::<T>(self.residuals.len()) * scale {
            return Err(Error::DegenerateVariance(what.to_string()));
        }
        Ok(())
    }
}

/// Named design columns for a fit.
pub(crate) struct Design<'a, T> {
    pub names: Vec<String>,
    pub columns: Vec<&'a [T]>,
    /// Index of the main treatment column, if any.
    pub treatment: Option<usize>,
    /// Indices of all treatment columns (main + interactions) to check for collinearity.
    pub protected: Vec<usize>,
}

pub(crate) fn intercept_column<T: Scalar>(n: usize) -> Vec<T> {
    vec![T::one(); n]
}

impl<'a, T: Scalar> Design<'a, T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            columns: Vec::new(),
            treatment: None,
            protected: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, col: &'a [T]) {
        self.names.push(name.to_string());
        self.columns.push(col);
    }

    pub fn push_groups(&mut self, data: &'a Dataset<T>, groups: &[String]) -> Result<()> {
        for (name, col) in data.group_columns(groups)? {
            self.push(name, col);
        }
        Ok(())
    }

    /// Intercept (if requested) then covariate groups then treatment columns.
    pub fn for_spec(data: &'a Dataset<T>, spec: &ModelSpec, ones: &'a [T]) -> Result<Self> {
        spec.validate(data)?;
        let mut d = Self::new();
        if spec.intercept {
            d.push(INTERCEPT, ones);
        }
        d.push_groups(data, &spec.covariates)?;
        d.treatment = Some(d.names.len());
        for c in spec.treatment_columns() {
            d.protected.push(d.names.len());
            d.push(&c, data.column(&c)?);
        }
        Ok(d)
    }
}

/// Fits `outcome ~ spec` by weighted least squares.
///
/// Coefficients of covariate columns that are linearly dependent on earlier
/// pivots are reported as NaN with `aliased = true`. A treatment column lying in
/// the span of the remaining columns is an error, as is a design leaving no
/// residual degrees of freedom.
pub fn fit_wls<T: Scalar>(data: &Dataset<T>, spec: &ModelSpec) -> Result<FitResult<T>> {
    let ones = intercept_column(data.n());
    let design = Design::for_spec(data, spec, &ones)?;
    fit_design(&design, data.column(&spec.outcome)?, data.weights(), spec.intercept)
}

pub(crate) fn fit_design<T: Scalar>(
    design: &Design<'_, T>,
    y: &[T],
    weights: &[T],
    intercept: bool,
) -> Result<FitResult<T>> {
    check_protected(design, weights)?;
    let ls = WeightedLs::new(&design.columns, weights);
    let p = design.columns.len();
    let rank = ls.rank();
    let n_eff = ls.n_effective();
    if n_eff <= rank {
        return Err(Error::NoResidualDf {
            df: n_eff as i64 - rank as i64,
        });
    }
    let df = n_eff - rank;

    let coef_opt = ls.coefficients(y);
    let aliased: Vec<bool> = coef_opt.iter().map(Option::is_none).collect();
    let coefficients: Vec<T> = coef_opt.iter().map(|c| c.unwrap_or_else(T::nan)).collect();
    let residuals = ls.residuals(y);

    let weight_sum: T = weights.iter().copied().sum();
    let rss = wdot(weights, &residuals, &residuals);
    let tss = if intercept {
        let mean = wdot(weights, y, &vec![T::one(); y.len()]) / weight_sum;
        weights
            .iter()
            .zip(y)
            .map(|(&w, &v)| w * (v - mean) * (v - mean))
            .sum()
    } else {
        wdot(weights, y, y)
    };
    let r_squared = if tss > T::zero() {
        (T::one() - rss / tss).max(T::zero()).min(T::one())
    } else {
        T::zero()
    };
    let sigma2 = rss / T::from_usize_lossy(df);

    let mut vcov = ls.unscaled_covariance();
    let unscaled_tt = design.treatment.map(|t| vcov.get(t, t));
    for j in 0..p {
        for k in 0..p {
            let v = vcov.get(j, k);
            vcov.set(j, k, v * sigma2);
        }
    }
    let se = (0..p)
        .map(|j| {
            if aliased[j] {
                T::nan()
            } else {
                vcov.get(j, j).max(T::zero()).sqrt()
            }
        })
        .collect();

    let sigma_z_given_x = match unscaled_tt {
        Some(u) => (T::one() / (u * weight_sum)).sqrt(),
        None => T::nan(),
    };

    Ok(FitResult {
        names: design.names.clone(),
        coefficients,
        aliased,
        se,
        vcov,
        df,
        rank,
        n_effective: n_eff,
        weight_sum,
        rss,
        tss,
        r_squared,
        residuals,
        sigma: sigma2.sqrt(),
        sigma_y_given_zx: (rss / weight_sum).sqrt(),
        sigma_z_given_x,
        treatment: design.treatment,
        intercept,
    })
}

/// Rejects designs in which a treatment column is (numerically) a linear
/// combination of the other columns.
fn check_protected<T: Scalar>(design: &Design<'_, T>, weights: &[T]) -> Result<()> {
    if design.protected.is_empty() {
        return Ok(());
    }
    let p = design.columns.len();
    let n = weights.len();
    let tol = T::epsilon() * T::from_usize_lossy(n.max(p)) * T::lit(16.0);
    for &j in &design.protected {
        let others: Vec<&[T]> = (0..p).filter(|&i| i != j).map(|i| design.columns[i]).collect();
        let target = design.columns[j];
        let norm = wdot(weights, target, target).sqrt();
        if norm == T::zero() {
            return Err(Error::TreatmentCollinear(design.names[j].clone()));
        }
        if others.is_empty() {
            continue;
        }
        let resid = WeightedLs::new(&others, weights).residuals(target);
        let rnorm = wdot(weights, &resid, &resid).sqrt();
        if rnorm <= tol * norm {
            return Err(Error::TreatmentCollinear(design.names[j].clone()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset<f64> {
        let z: Vec<f64> = (0..10).map(|i| (i % 2) as f64 + i as f64 * 0.1).collect();
        let y: Vec<f64> = z.iter().map(|v| 2.0 * v).collect();
        Dataset::new(10)
            .unwrap()
            .with_column("y", y)
            .unwrap()
            .with_column("z", z)
            .unwrap()
    }

    #[test]
    fn exact_linear_relation_has_zero_residual_sd() {
        let fit = fit_wls(&toy(), &ModelSpec::new("y", "z").without_intercept()).unwrap();
        assert!((fit.treatment_coef().unwrap() - 2.0).abs() < 1e-12);
        assert!(fit.sigma < 1e-12);
        assert!(fit.require_imperfect("y").is_err());
    }

    #[test]
    fn collinear_treatment_is_an_error() {
        let mut d = toy();
        let z2: Vec<f64> = d.column("z").unwrap().iter().map(|v| 3.0 * v - 1.0).collect();
        d.add_column("x", z2).unwrap();
        let err = fit_wls(&d, &ModelSpec::new("y", "z").covariates(["x"])).unwrap_err();
        assert!(matches!(err, Error::TreatmentCollinear(ref c) if c == "z"));
    }

    #[test]
    fn aliased_covariate_is_flagged() {
        let mut d = toy();
        let x: Vec<f64> = (0..10).map(|i| ((i * 7) % 5) as f64).collect();
        d.add_column("x1", x.clone()).unwrap();
        d.add_column("x2", x.iter().map(|v| 2.0 * v).collect()).unwrap();
        let y: Vec<f64> = (0..10).map(|i| (i as f64).cos()).collect();
        d.add_column("y2", y).unwrap();
        let fit = fit_wls(&d, &ModelSpec::new("y2", "z").covariates(["x1", "x2"])).unwrap();
        assert_eq!(fit.aliased.iter().filter(|&&a| a).count(), 1);
        assert_eq!(fit.rank, 3);
        assert_eq!(fit.df, 7);
        assert!(fit.treatment_se().unwrap().is_finite());
    }

    #[test]
    fn no_residual_df_is_an_error() {
        let d = Dataset::new(2)
            .unwrap()
            .with_column("y", vec![1.0, 3.0])
            .unwrap()
            .with_column("z", vec![0.0, 1.0])
            .unwrap();
        assert!(matches!(
            fit_wls(&d, &ModelSpec::new("y", "z")),
            Err(Error::NoResidualDf { df: 0 })
        ));
    }

    #[test]
    fn zero_weight_rows_do_not_count() {
        let mut d = toy();
        let y: Vec<f64> = (0..10).map(|i| (i as f64 * 1.3).sin()).collect();
        d.add_column("y2", y).unwrap();
        let mut w = vec![1.0; 10];
        w[3] = 0.0;
        let d = d.with_weights(w).unwrap();
        let fit = fit_wls(&d, &ModelSpec::new("y2", "z")).unwrap();
        assert_eq!(fit.n_effective, 9);
        assert_eq!(fit.df, 7);
    }
}
