//! Propensity scores, subclassification on them, balance diagnostics, and
//! effect estimation and benchmarking within propensity strata.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::benchmarking::{sort_entries, BenchmarkEntry, BenchmarkTable, Role};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, PivotedQr};
use crate::regression::{decompose_omission, fit_wls, Dataset, FitResult, ModelSpec, WeightedLs, INTERCEPT};
use crate::scalar::Scalar;

/// Name of the covariate group holding stratum indicators.
pub const STRATA_GROUP: &str = "(strata)";

pub const MAX_ITERATIONS: usize = 50;
pub const DEVIANCE_TOL: f64 = 1e-10;
/// Linear predictors beyond this magnitude are taken as evidence of separation.
const ETA_LIMIT: f64 = 30.0;

#[derive(Debug, Clone, Serialize)]
pub struct PropensityModel<T> {
    pub names: Vec<String>,
    pub coefficients: Vec<T>,
    pub se: Vec<T>,
    /// Columns removed before fitting because they were linearly dependent on others.
    pub dropped: Vec<String>,
    #[serde(skip)]
    pub scores: Vec<T>,
    pub converged: bool,
    pub iterations: usize,
    pub deviance: T,
    /// Largest absolute component of the log-likelihood gradient at the solution.
    pub max_gradient: T,
}

fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

struct Logistic<'a, T> {
    cols: Vec<&'a [T]>,
    y: &'a [T],
    w: &'a [T],
}

impl<T: Scalar> Logistic<'_, T> {
    fn eta(&self, beta: &[T]) -> Vec<T> {
        let mut eta = vec![T::zero(); self.y.len()];
        for (c, &b) in self.cols.iter().zip(beta) {
            for (e, &x) in eta.iter_mut().zip(c.iter()) {
                *e += b * x;
            }
        }
        eta
    }

    fn deviance(&self, eta: &[T]) -> T {
        let two = T::lit(2.0);
        eta.iter()
            .zip(self.y)
            .zip(self.w)
            .filter(|(_, &w)| w > T::zero())
            .map(|((&e, &y), &w)| two * w * (softplus(e) - y * e))
            .sum()
    }

    fn gradient(&self, eta: &[T]) -> Vec<T> {
        self.cols
            .iter()
            .map(|c| {
                c.iter()
                    .zip(eta)
                    .zip(self.y)
                    .zip(self.w)
                    .map(|(((&x, &e), &y), &w)| w * x * (y - sigmoid(e)))
                    .sum()
            })
            .collect()
    }

    /// Newton direction and the weighted projector used to compute it.
    fn newton(&self, eta: &[T]) -> (Vec<Option<T>>, WeightedLs<T>) {
        let n = eta.len();
        let mut ww = vec![T::zero(); n];
        let mut r = vec![T::zero(); n];
        for i in 0..n {
            let mu = sigmoid(eta[i]);
            let v = (mu * (T::one() - mu)).max(T::min_positive_value());
            ww[i] = self.w[i] * v;
            r[i] = (self.y[i] - mu) / v;
        }
        let ls = WeightedLs::new(&self.cols, &ww);
        (ls.coefficients(&r), ls)
    }
}

fn separation_direction<T: Scalar>(names: &[String], cols: &[&[T]], beta: &[T]) -> String {
    let n = T::from_usize_lossy(cols.first().map_or(1, |c| c.len()));
    let mut best = (T::zero(), INTERCEPT.to_string());
    for ((name, c), &b) in names.iter().zip(cols).zip(beta).skip(1) {
        let mean = c.iter().copied().sum::<T>() / n;
        let sd = (c.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n).sqrt();
        let s = (b * sd).abs();
        if s > best.0 {
            best = (s, name.clone());
        }
    }
    best.1
}

/// Maximum-likelihood logistic regression of a 0/1 treatment on an intercept
/// plus the given covariate groups, by iteratively reweighted least squares.
///
/// Columns linearly dependent on earlier ones are dropped before fitting and
/// listed in [`PropensityModel::dropped`].
pub fn fit_logistic<T: Scalar>(data: &Dataset<T>, treatment: &str, groups: &[String]) -> Result<PropensityModel<T>> {
    let y = data.column(treatment)?;
    let w = data.weights();
    if let Some(i) = (0..data.n()).find(|&i| w[i] > T::zero() && y[i] != T::zero() && y[i] != T::one()) {
        return Err(Error::Data(format!(
            "treatment `{treatment}` must be 0/1, row {i} has {}",
            y[i]
        )));
    }
    let ones = vec![T::one(); data.n()];
    let mut names = vec![INTERCEPT.to_string()];
    let mut all_cols: Vec<&[T]> = vec![&ones];
    for (name, c) in data.group_columns(groups)? {
        if name == treatment {
            return Err(Error::InvalidSpec(format!("`{treatment}` cannot predict itself")));
        }
        names.push(name.to_string());
        all_cols.push(c);
    }
    let aliased = WeightedLs::new(&all_cols, w).aliased();
    let dropped: Vec<String> = aliased.iter().map(|&j| names[j].clone()).collect();
    if !dropped.is_empty() {
        log::info!("propensity model drops collinear columns: {}", dropped.join(", "));
    }
    let keep: Vec<usize> = (0..names.len()).filter(|j| !aliased.contains(j)).collect();
    let names: Vec<String> = keep.iter().map(|&j| names[j].clone()).collect();
    let cols: Vec<&[T]> = keep.iter().map(|&j| all_cols[j]).collect();
    let model = Logistic { cols, y, w };

    let ones_w: T = w.iter().copied().sum();
    let treated: T = w.iter().zip(y).map(|(&a, &b)| a * b).sum();
    let share = treated / ones_w;
    if share <= T::zero() || share >= T::one() {
        return Err(Error::Separation {
            direction: INTERCEPT.to_string(),
        });
    }
    let mut beta = vec![T::zero(); names.len()];
    beta[0] = (share / (T::one() - share)).ln();
    let mut eta = model.eta(&beta);
    let mut dev = model.deviance(&eta);
    let limit = T::lit(ETA_LIMIT);
    let separated = |beta: &[T]| Error::Separation {
        direction: separation_direction(&names, &model.cols, beta),
    };

    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (step, _) = model.newton(&eta);
        if step.iter().any(Option::is_none) {
            return Err(separated(&beta));
        }
        let step: Vec<T> = step.into_iter().flatten().collect();
        let mut scale = T::one();
        let (new_beta, new_eta, new_dev) = loop {
            let cand: Vec<T> = beta.iter().zip(&step).map(|(&b, &s)| b + scale * s).collect();
            let e = model.eta(&cand);
            let d = model.deviance(&e);
            if d <= dev || scale < T::lit(1e-6) {
                break (cand, e, d);
            }
            scale *= T::lit(0.5);
        };
        let change = (dev - new_dev).abs() / (new_dev.abs() + T::lit(0.1));
        beta = new_beta;
        eta = new_eta;
        dev = new_dev;
        if eta
            .iter()
            .zip(w)
            .any(|(&e, &wi)| wi > T::zero() && e.abs() > limit)
        {
            return Err(separated(&beta));
        }
        if change < T::lit(DEVIANCE_TOL) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { iterations });
    }

    // polish with a few plain Newton steps so the score equations hold tightly
    let grad_tol = T::epsilon() * T::lit(1e3);
    let max_abs = |g: &[T]| g.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    let mut grad = max_abs(&model.gradient(&eta));
    for _ in 0..5 {
        if grad <= grad_tol {
            break;
        }
        let (step, _) = model.newton(&eta);
        let cand: Vec<T> = beta
            .iter()
            .zip(&step)
            .map(|(&b, s)| b + s.unwrap_or_else(T::zero))
            .collect();
        let e = model.eta(&cand);
        let g = max_abs(&model.gradient(&e));
        if g >= grad {
            break;
        }
        beta = cand;
        eta = e;
        grad = g;
    }
    dev = model.deviance(&eta);

    let (_, ls) = model.newton(&eta);
    let cov = ls.unscaled_covariance();
    let se = (0..names.len()).map(|j| cov.get(j, j).max(T::zero()).sqrt()).collect();
    let scores = eta.iter().map(|&e| sigmoid(e)).collect();
    Ok(PropensityModel {
        names,
        coefficients: beta,
        se,
        dropped,
        scores,
        converged,
        iterations,
        deviance: dev,
        max_gradient: grad,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stratification<T> {
    pub n_strata: usize,
    /// Stratum index (0-based) of every row.
    pub assignment: Vec<usize>,
    /// Largest score in each stratum but the last.
    pub boundaries: Vec<T>,
}

impl<T: Scalar> Stratification<T> {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_strata];
        for &a in &self.assignment {
            s[a] += 1;
        }
        s
    }
}

/// Cuts rows into `n_strata` groups of equal size (±1) by score, ties broken
/// by row order.
pub fn subclassify<T: Scalar>(scores: &[T], n_strata: usize) -> Result<Stratification<T>> {
    if n_strata == 0 {
        return Err(Error::InvalidArgument("n_strata must be positive".into()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Data(format!("score in row {i} is not finite")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    let distinct = 1 + order.windows(2).filter(|p| scores[p[0]] != scores[p[1]]).count();
    let distinct = if scores.is_empty() { 0 } else { distinct };
    if n_strata > distinct {
        return Err(Error::TooFewDistinctScores {
            requested: n_strata,
            distinct,
        });
    }
    let n = scores.len();
    let mut assignment = vec![0; n];
    let mut boundaries = Vec::with_capacity(n_strata - 1);
    for (rank, &row) in order.iter().enumerate() {
        assignment[row] = rank * n_strata / n;
    }
    for s in 1..n_strata {
        // last rank placed in stratum s-1
        let first_of_s = (s * n).div_ceil(n_strata);
        boundaries.push(scores[order[first_of_s - 1]]);
    }
    Ok(Stratification {
        n_strata,
        assignment,
        boundaries,
    })
}

/// Copy of `data` with the stratum indicators (first stratum dropped) added as
/// the group [`STRATA_GROUP`].
pub fn with_strata<T: Scalar>(data: &Dataset<T>, strat: &Stratification<T>) -> Result<Dataset<T>> {
    if strat.assignment.len() != data.n() {
        return Err(Error::LengthMismatch {
            name: "stratification".into(),
            expected: data.n(),
            found: strat.assignment.len(),
        });
    }
    let mut out = data.clone();
    if strat.n_strata > 1 {
        let cols = (1..strat.n_strata)
            .map(|s| {
                let v = strat
                    .assignment
                    .iter()
                    .map(|&a| if a == s { T::one() } else { T::zero() })
                    .collect();
                (format!("stratum[{}]", s + 1), v)
            })
            .collect();
        out.add_group(STRATA_GROUP, cols)?;
    }
    Ok(out)
}

fn strata_spec(outcome: &str, treatment: &str, strat_n: usize) -> ModelSpec {
    let spec = ModelSpec::new(outcome, treatment);
    if strat_n > 1 {
        spec.covariates([STRATA_GROUP])
    } else {
        spec
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CovariateBalance<T> {
    pub name: String,
    /// Stratum-size-weighted treated minus control mean.
    pub difference: T,
    /// `difference` over the pooled within-stratum standard deviation.
    pub standardized: T,
    /// `difference` over its within-stratum permutation standard error.
    pub z: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct BalanceReport<T> {
    pub covariates: Vec<CovariateBalance<T>>,
    pub statistic: T,
    pub df: usize,
    pub p_value: T,
    pub alpha: T,
    pub balanced: bool,
}

/// Joint test that treated and control rows have the same covariate means
/// within strata.
///
/// With `h_s` the share of rows in stratum `s`, the combined difference is
/// `d = Σ h_s (x̄_{t,s} − x̄_{c,s})` and its variance under random assignment
/// within strata is `V = Σ h_s² (1/n_{t,s} + 1/n_{c,s}) S_s`, `S_s` being the
/// within-stratum covariance matrix. The statistic `dᵀV⁺d` is referred to a
/// chi-square on `rank(V)` degrees of freedom. Rows of zero weight are
/// ignored; other weights do not enter.
pub fn check_balance<T: Scalar>(
    data: &Dataset<T>,
    strat: &Stratification<T>,
    treatment: &str,
    covariates: &[String],
    alpha: T,
) -> Result<BalanceReport<T>> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if strat.assignment.len() != data.n() {
        return Err(Error::LengthMismatch {
            name: "stratification".into(),
            expected: data.n(),
            found: strat.assignment.len(),
        });
    }
    let z = data.column(treatment)?;
    let wts = data.weights();
    let cols: Vec<(&str, &[T])> = data.group_columns(covariates)?;
    let p = cols.len();
    let rows: Vec<usize> = (0..data.n()).filter(|&i| wts[i] > T::zero()).collect();
    let n_total = T::from_usize_lossy(rows.len());

    let mut d = vec![T::zero(); p];
    let mut v = Matrix::zeros(p, p);
    let mut pooled_var = vec![T::zero(); p];
    for s in 0..strat.n_strata {
        let members: Vec<usize> = rows.iter().copied().filter(|&i| strat.assignment[i] == s).collect();
        if members.is_empty() {
            continue;
        }
        let (treated, control): (Vec<usize>, Vec<usize>) = members.iter().partition(|&&i| z[i] == T::one());
        if treated.is_empty() {
            return Err(Error::SingleArmStratum { stratum: s, arm: "control" });
        }
        if control.is_empty() {
            return Err(Error::SingleArmStratum { stratum: s, arm: "treated" });
        }
        let (ns, nt, nc) = (
            T::from_usize_lossy(members.len()),
            T::from_usize_lossy(treated.len()),
            T::from_usize_lossy(control.len()),
        );
        let h = ns / n_total;
        let mean = |c: &[T], idx: &[usize]| idx.iter().map(|&i| c[i]).sum::<T>() / T::from_usize_lossy(idx.len());
        let centered: Vec<Vec<T>> = cols
            .iter()
            .map(|(_, c)| {
                let m = mean(c, &members);
                members.iter().map(|&i| c[i] - m).collect()
            })
            .collect();
        for (j, (_, c)) in cols.iter().enumerate() {
            d[j] += h * (mean(c, &treated) - mean(c, &control));
        }
        let denom = if members.len() > 1 { ns - T::one() } else { T::one() };
        let factor = h * h * (T::one() / nt + T::one() / nc);
        for a in 0..p {
            for b in a..p {
                let cov: T = centered[a].iter().zip(&centered[b]).map(|(&x, &y)| x * y).sum::<T>() / denom;
                let val = v.get(a, b) + factor * cov;
                v.set(a, b, val);
                v.set(b, a, val);
                if a == b {
                    pooled_var[a] += h * cov;
                }
            }
        }
    }

    let (statistic, df) = pseudo_quadratic(&v, &d);
    let p_value = if df == 0 {
        T::one()
    } else {
        let chi = ChiSquared::new(df as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        T::lit(chi.sf(statistic.as_f64()))
    };
    let covariates = cols
        .iter()
        .enumerate()
        .map(|(j, (name, _))| CovariateBalance {
            name: name.to_string(),
            difference: d[j],
            standardized: safe_div(d[j], pooled_var[j].sqrt()),
            z: safe_div(d[j], v.get(j, j).sqrt()),
        })
        .collect();
    Ok(BalanceReport {
        covariates,
        statistic,
        df,
        p_value,
        alpha,
        balanced: p_value > alpha,
    })
}

fn safe_div<T: Scalar>(a: T, b: T) -> T {
    if b > T::zero() {
        a / b
    } else if a == T::zero() {
        T::zero()
    } else {
        T::infinity() * a.signum()
    }
}

/// `dᵀV⁺d` and the numerical rank of the symmetric positive semidefinite `V`.
fn pseudo_quadratic<T: Scalar>(v: &Matrix<T>, d: &[T]) -> (T, usize) {
    let p = d.len();
    if p == 0 {
        return (T::zero(), 0);
    }
    let scale = (0..p).fold(T::zero(), |m, j| m.max(v.get(j, j)));
    if scale <= T::zero() {
        return (T::zero(), 0);
    }
    // any solution of V x = d gives the same dᵀx when d lies in the range of V
    let qr = PivotedQr::new(v.clone());
    let rank = qr.rank();
    let x: Vec<T> = qr.solve(d).into_iter().map(|c| c.unwrap_or_else(T::zero)).collect();
    let stat = d.iter().zip(&x).map(|(&a, &b)| a * b).sum::<T>();
    (stat.max(T::zero()), rank)
}

/// Regression of the outcome on the treatment plus stratum fixed effects.
pub fn stratified_effect<T: Scalar>(
    data: &Dataset<T>,
    outcome: &str,
    treatment: &str,
    strat: &Stratification<T>,
) -> Result<FitResult<T>> {
    let d = with_strata(data, strat)?;
    fit_wls(&d, &strata_spec(outcome, treatment, strat.n_strata))
}

/// Variables and settings for a propensity-stratified analysis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratifiedDesign {
    pub outcome: String,
    pub treatment: String,
    /// Covariate groups entering the propensity model.
    pub covariates: Vec<String>,
    pub n_strata: usize,
}

impl StratifiedDesign {
    pub fn new(outcome: impl Into<String>, treatment: impl Into<String>, covariates: Vec<String>) -> Self {
        Self {
            outcome: outcome.into(),
            treatment: treatment.into(),
            covariates,
            n_strata: 6,
        }
    }

    pub fn with_strata(mut self, n: usize) -> Self {
        self.n_strata = n;
        self
    }

    /// Fits the propensity model on all covariates and subclassifies on it.
    pub fn stratify<T: Scalar>(&self, data: &Dataset<T>) -> Result<(PropensityModel<T>, Stratification<T>)> {
        let model = fit_logistic(data, &self.treatment, &self.covariates)?;
        let strat = subclassify(&model.scores, self.n_strata)?;
        Ok((model, strat))
    }
}

fn is_flaggable(e: &Error) -> bool {
    matches!(
        e,
        Error::Separation { .. }
            | Error::NoConvergence { .. }
            | Error::TooFewDistinctScores { .. }
            | Error::DegenerateVariance(_)
            | Error::TreatmentCollinear(_)
            | Error::NoResidualDf { .. }
    )
}

/// Leave-one-out benchmarking under propensity stratification.
///
/// For each candidate `C` the propensity model is refitted without `C`, the
/// sample re-subclassified, and the treatment regressed linearly on `C` plus
/// stratum indicators; `rho_sq` is the partial ρ² of the outcome with `C`
/// given the treatment and the same strata. The baseline is the stratified
/// effect using all covariates.
pub fn benchmark_under_stratification<T: Scalar>(
    data: &Dataset<T>,
    design: &StratifiedDesign,
    candidates: &[String],
) -> Result<BenchmarkTable<T>> {
    for (i, c) in candidates.iter().enumerate() {
        data.group(c)?;
        if candidates[..i].contains(c) {
            return Err(Error::DuplicateName(c.clone()));
        }
    }
    let (_, strat) = design.stratify(data)?;
    let baseline = stratified_effect(data, &design.outcome, &design.treatment, &strat)?;

    let mut entries = candidates
        .par_iter()
        .map(|c| {
            let k = data.group(c)?.len();
            let run = || -> Result<BenchmarkEntry<T>> {
                let remaining: Vec<String> = design.covariates.iter().filter(|g| *g != c).cloned().collect();
                let model = fit_logistic(data, &design.treatment, &remaining)?;
                let strat = subclassify(&model.scores, design.n_strata)?;
                let d = with_strata(data, &strat)?;
                let spec = strata_spec(&design.outcome, &design.treatment, design.n_strata);
                let dec = decompose_omission(&d, &spec, c)?;
                Ok(BenchmarkEntry {
                    name: c.clone(),
                    k: dec.k,
                    t_w: dec.t_w,
                    f_w: dec.f_w,
                    rho_sq: dec.rho_sq(),
                    rho: dec.rho,
                    t_effective: dec.t_effective,
                    role: if design.covariates.contains(c) {
                        Role::Included
                    } else {
                        Role::Candidate
                    },
                    df: dec.df,
                    degenerate: None,
                    caveat: None,
                })
            };
            match run() {
                Err(e) if is_flaggable(&e) => {
                    log::warn!("stratified benchmark of `{c}` flagged: {e}");
                    Ok(BenchmarkEntry::flagged(c, Role::Candidate, k, e.to_string()))
                }
                r => r,
            }
        })
        .collect::<Result<Vec<_>>>()?;
    sort_entries(&mut entries);
    Ok(BenchmarkTable { entries, baseline })
}
