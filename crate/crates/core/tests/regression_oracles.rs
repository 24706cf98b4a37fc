mod common;

use common::{normal, planted, rng};
use ovsens::regression::Given;
use ovsens::{
    adjusted_se, anova_f, decompose_omission, fit_wls, interval_at, omitted_bias, partial_corr,
    residualize, sensitivity_interval, t_from_f, Dataset, ModelSpec, OmittedVariableScenario,
    SensitivityZone,
};
use proptest::prelude::*;

/// Normal equations solved by Gauss-Jordan elimination, unweighted.
fn normal_equations(cols: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = cols.len();
    let mut a = vec![vec![0.0; p + 1]; p];
    for i in 0..p {
        for j in 0..p {
            a[i][j] = cols[i].iter().zip(&cols[j]).map(|(u, v)| u * v).sum();
        }
        a[i][p] = cols[i].iter().zip(y).map(|(u, v)| u * v).sum();
    }
    for c in 0..p {
        let piv = (c..p).max_by(|&r, &s| a[r][c].abs().total_cmp(&a[s][c].abs())).unwrap();
        a.swap(c, piv);
        for r in 0..p {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=p {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    (0..p).map(|i| a[i][p] / a[i][i]).collect()
}

fn wdot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

#[test]
fn fit_matches_normal_equations() {
    let pl = planted(11, 50, 4, 1, false);
    let fit = fit_wls(&pl.data, &pl.spec).unwrap();
    let mut cols = vec![vec![1.0; 50]];
    for j in 1..=4 {
        cols.push(pl.data.column(&format!("x{j}")).unwrap().to_vec());
    }
    cols.push(pl.data.column("z").unwrap().to_vec());
    let expected = normal_equations(&cols, pl.data.column("y").unwrap());
    for (e, g) in expected.iter().zip(&fit.coefficients) {
        assert!((e - g).abs() <= 1e-9 * e.abs().max(1e-3), "{e} vs {g}");
    }
    assert_eq!(fit.names.len(), 6);
    assert_eq!(fit.df, 44);
}

#[test]
fn weighted_fit_matches_row_scaled_normal_equations() {
    let pl = planted(12, 60, 3, 1, true);
    let fit = fit_wls(&pl.data, &pl.spec).unwrap();
    let sw: Vec<f64> = pl.data.weights().iter().map(|w| w.sqrt()).collect();
    let scale = |v: &[f64]| v.iter().zip(&sw).map(|(a, s)| a * s).collect::<Vec<_>>();
    let mut cols = vec![scale(&[1.0; 60])];
    for j in 1..=3 {
        cols.push(scale(pl.data.column(&format!("x{j}")).unwrap()));
    }
    cols.push(scale(pl.data.column("z").unwrap()));
    let expected = normal_equations(&cols, &scale(pl.data.column("y").unwrap()));
    for (e, g) in expected.iter().zip(&fit.coefficients) {
        assert!((e - g).abs() <= 1e-9 * e.abs().max(1e-3));
    }
}

#[test]
fn nominal_se_matches_moment_formula_for_any_weights() {
    for (seed, weighted) in [(1, false), (2, true), (3, true)] {
        let pl = planted(seed, 80, 3, 1, weighted);
        let fit = fit_wls(&pl.data, &pl.spec).unwrap();
        let moment_se = (fit.df as f64).powf(-0.5) * fit.sigma_y_given_zx / fit.sigma_z_given_x;
        let se = fit.treatment_se().unwrap();
        assert!((moment_se - se).abs() <= 1e-12 * se);

        // σ_{z·x} from an explicit residualization
        let w = pl.data.weights();
        let x = Given::new(pl.spec.covariates.clone());
        let zr = residualize(&pl.data, "z", &x).unwrap();
        let sigma_zx = (wdot(w, &zr, &zr) / w.iter().sum::<f64>()).sqrt();
        assert!((sigma_zx - fit.sigma_z_given_x).abs() <= 1e-10 * sigma_zx);
    }
}

#[test]
fn residualize_edge_cases() {
    let pl = planted(4, 30, 2, 1, false);
    let own = residualize(&pl.data, "x1", &Given::new(["x1"]).without_intercept()).unwrap();
    assert!(own.iter().all(|v| v.abs() < 1e-12));
    let d = pl.data.clone().with_column("const", vec![3.5; 30]).unwrap();
    let c = residualize(&d, "const", &Given::intercept_only()).unwrap();
    assert!(c.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn residuals_are_orthogonal_to_conditioning_columns() {
    let pl = planted(5, 30, 3, 1, true);
    let given = Given::new(["x1", "x2", "z"]);
    let r = residualize(&pl.data, "y", &given).unwrap();
    let w = pl.data.weights();
    for c in ["x1", "x2", "z"] {
        let ip = wdot(w, &r, pl.data.column(c).unwrap());
        assert!(ip.abs() < 1e-10, "{c}: {ip}");
    }
    assert!(wdot(w, &r, &[1.0; 30]).abs() < 1e-10);
}

#[test]
fn rank_deficient_group_still_fits() {
    let pl = planted(6, 40, 2, 2, false);
    let mut d = pl.data.clone();
    let x1 = d.column("x1").unwrap().to_vec();
    let x2 = d.column("x2").unwrap().to_vec();
    let combo: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a - 2.0 * b).collect();
    d.add_group("dup", vec![("dup[a]".into(), combo), ("dup[b]".into(), x1.clone())]).unwrap();
    let fit = fit_wls(&d, &pl.spec.with_covariate("dup")).unwrap();
    assert_eq!(fit.aliased.iter().filter(|&&a| a).count(), 2);
    let base = fit_wls(&d, &pl.spec).unwrap();
    assert!((fit.treatment_coef().unwrap() - base.treatment_coef().unwrap()).abs() < 1e-10);
    assert!((fit.treatment_se().unwrap() - base.treatment_se().unwrap()).abs() < 1e-10);
}

#[test]
fn partial_corr_equals_identical_residual_correlation() {
    let pl = planted(7, 40, 2, 1, false);
    let mut d = pl.data.clone();
    d.add_column("ycopy", d.column("y").unwrap().to_vec()).unwrap();
    let rho = partial_corr(&d, "y", "ycopy", &Given::new(["z", "x1", "x2"])).unwrap();
    assert!((rho - 1.0).abs() < 1e-12);
}

#[test]
fn partial_corr_degenerate_variance_is_an_error() {
    let pl = planted(8, 40, 2, 1, false);
    let mut d = pl.data.clone();
    d.add_column("x1again", d.column("x1").unwrap().to_vec()).unwrap();
    let err = partial_corr(&d, "y", "x1again", &Given::new(["z", "x1"])).unwrap_err();
    assert!(err.to_string().contains("x1again"));
}

#[test]
fn anova_edge_cases() {
    let mut r = rng(909);
    let n = 40;
    let pl = planted(9, n, 2, 1, false);
    let mut d = pl.data.clone();
    // orthogonal to intercept, x's and z by construction: residualize noise, then
    // make y orthogonal to it as well by removing its component
    let noise: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
    d.add_column("noise", noise).unwrap();
    let given = Given::new(["z", "x1", "x2"]);
    let o = residualize(&d, "noise", &given).unwrap();
    let yr = residualize(&d, "y", &given).unwrap();
    let proj = wdot(&vec![1.0; n], &yr, &o) / wdot(&vec![1.0; n], &o, &o);
    let y2: Vec<f64> = d.column("y").unwrap().iter().zip(&o).map(|(y, o)| y - proj * o).collect();
    d.add_column("orth", o).unwrap();
    d.add_column("y2", y2).unwrap();
    let spec = ModelSpec::new("y2", "z").covariates(["x1", "x2"]);
    let small = fit_wls(&d, &spec).unwrap();
    let big = fit_wls(&d, &spec.with_covariate("orth")).unwrap();
    let f = anova_f(&small, &big, 1).unwrap();
    assert!(f.abs() < 1e-20, "F = {f}");

    // non-nested (reversed) fits are rejected
    let big_y = fit_wls(&d, &pl.spec.with_covariate("noise")).unwrap();
    let small_y = fit_wls(&d, &pl.spec).unwrap();
    assert!(anova_f(&big_y, &small_y, 1).is_err());
}

#[test]
fn anova_rank_one_equals_squared_t() {
    let pl = planted(10, 40, 3, 1, false);
    let small = fit_wls(&pl.data, &pl.spec).unwrap();
    let big = fit_wls(&pl.data, &pl.spec.with_covariate("w")).unwrap();
    let f = anova_f(&small, &big, 1).unwrap();
    let t = big.t_value("w[1]").unwrap();
    assert!((f - t * t).abs() <= 1e-10 * f);
}

#[test]
fn anova_rank_three_matches_residual_ss_definition() {
    let pl = planted(13, 60, 3, 3, false);
    let small = fit_wls(&pl.data, &pl.spec).unwrap();
    let big = fit_wls(&pl.data, &pl.spec.with_covariate("w")).unwrap();
    let f = anova_f(&small, &big, 3).unwrap();
    // direct residual sums of squares from explicit residual vectors
    let ss0: f64 = small.residuals.iter().map(|r| r * r).sum();
    let ss1: f64 = big.residuals.iter().map(|r| r * r).sum();
    let df_plus_one_minus_k = 60 - 5 - 3;
    let expected = ((ss0 - ss1) / 3.0) / (ss1 / df_plus_one_minus_k as f64);
    assert!((f - expected).abs() <= 1e-10 * expected);
}

#[test]
fn decomposition_with_orthogonal_w_has_no_confounding() {
    let pl = planted(14, 60, 2, 1, false);
    let mut d = pl.data.clone();
    let mut r = rng(99);
    let raw: Vec<f64> = (0..60).map(|_| normal(&mut r)).collect();
    d.add_column("raw", raw).unwrap();
    let o = residualize(&d, "raw", &Given::new(["z", "x1", "x2"])).unwrap();
    d.add_column("orth", o).unwrap();
    let dec = decompose_omission(&d, &pl.spec, "orth").unwrap();
    assert!(dec.b_star.abs() < 1e-12);
    assert!((dec.b_hat - dec.beta_hat).abs() < 1e-12);
}

#[test]
fn collinear_w_is_rejected() {
    let pl = planted(15, 40, 2, 1, false);
    let mut d = pl.data.clone();
    let x1 = d.column("x1").unwrap().to_vec();
    d.add_column("x1dup", x1).unwrap();
    assert!(decompose_omission(&d, &pl.spec, "x1dup").is_err());
}

#[test]
fn sigma_product_identity() {
    for seed in 0..20 {
        let pl = planted(100 + seed, 50, 3, 1, seed % 2 == 0);
        let d = &pl.data;
        let w = d.weights();
        let sw: f64 = w.iter().sum();
        let var = |v: &[f64]| wdot(w, v, v) / sw;
        let x = Given::new(pl.spec.covariates.clone());
        let mut zx = x.clone();
        zx.groups.push("z".into());
        let mut wx = x.clone();
        wx.groups.push("w".into());
        let s_zx = var(&residualize(d, "z", &x).unwrap());
        let s_wzx = var(&residualize(d, "w[1]", &zx).unwrap());
        let s_wx = var(&residualize(d, "w[1]", &x).unwrap());
        let s_zwx = var(&residualize(d, "z", &wx).unwrap());
        let lhs = s_zx * s_wzx;
        let rhs = s_wx * s_zwx;
        assert!((lhs - rhs).abs() <= 1e-9 * rhs, "{lhs} vs {rhs}");
    }
}

#[test]
fn rho_squared_is_proportionate_reduction_in_residual_ss() {
    for (seed, k) in [(200, 1), (201, 2), (202, 3)] {
        let pl = planted(seed, 70, 3, k, true);
        let small = fit_wls(&pl.data, &pl.spec).unwrap();
        let big = fit_wls(&pl.data, &pl.spec.with_covariate("w")).unwrap();
        let mut given = Given::new(pl.spec.covariates.clone());
        given.groups.push("z".into());
        let rho = partial_corr(&pl.data, "y", "w", &given).unwrap();
        let reduction = (small.rss - big.rss) / small.rss;
        assert!((rho * rho - reduction).abs() < 1e-9, "k={k}");
    }
}

#[test]
fn refit_oracle_identities_hold_for_all_ranks() {
    for seed in 0..100u64 {
        let k = 1 + (seed % 3) as usize;
        let pl = planted(1000 + seed, 40 + (seed as usize % 50), 2 + (seed as usize % 4), k, seed % 2 == 1);
        let dec = decompose_omission(&pl.data, &pl.spec, "w").unwrap();
        assert_eq!(dec.k, k);

        // b̂ − β̂ = B*·δ̂ (rank-1 surrogate when k > 1)
        let lhs = dec.b_hat - dec.beta_hat;
        let rhs = dec.b_star * dec.delta_effective;
        assert!((lhs - rhs).abs() <= 1e-10 * dec.b_hat.abs().max(dec.se_b), "seed {seed}");

        // closed-form bias and standard error
        let sc = dec.scenario();
        let bias = omitted_bias(dec.se_b, &sc);
        assert!((bias - lhs).abs() <= 1e-9 * dec.se_b.max(lhs.abs()), "bias seed {seed}");
        let se = adjusted_se(dec.se_b, &sc, dec.df).unwrap();
        assert!((se - dec.se_beta).abs() <= 1e-9 * dec.se_beta, "se seed {seed}");

        // the interval that would be reported with W included
        let q = 1.96;
        let (lo, hi) = interval_at(dec.b_hat, dec.se_b, dec.df, q, &sc).unwrap();
        let scale = dec.beta_hat.abs().max(dec.se_beta);
        assert!((lo - (dec.beta_hat - q * dec.se_beta)).abs() <= 1e-9 * scale);
        assert!((hi - (dec.beta_hat + q * dec.se_beta)).abs() <= 1e-9 * scale);

        // bound form for multi-column W, using the F-based t_W
        if k > 1 {
            let bound = dec.se_b * dec.t_w * dec.rho.abs();
            assert!(lhs.abs() <= bound * (1.0 + 1e-9));
            let zone = SensitivityZone::new(dec.t_w, dec.rho * dec.rho).with_rank(k);
            let si = sensitivity_interval(dec.b_hat, dec.se_b, dec.df, q, &zone).unwrap();
            assert!(si.lower <= lo + 1e-12 && hi <= si.upper + 1e-12);
        }
    }
}

#[test]
fn surrogate_preserves_rho_and_bounds_its_t() {
    for seed in 0..40u64 {
        let k = 2 + (seed % 2) as usize;
        let pl = planted(3000 + seed, 60, 3, k, seed % 3 == 0);
        let dec = decompose_omission(&pl.data, &pl.spec, "w").unwrap();
        let mut d = pl.data.clone();
        d.add_column("w_tilde", dec.w_tilde.clone()).unwrap();
        let mut given = Given::new(pl.spec.covariates.clone());
        given.groups.push("z".into());
        let rho_tilde = partial_corr(&d, "y", "w_tilde", &given).unwrap();
        assert!((rho_tilde * rho_tilde - dec.rho * dec.rho).abs() < 1e-9);

        // t of the surrogate never exceeds the rescaled F-based treatment confounding
        let bound2 = (k * dec.df) as f64 / (dec.df + 1 - k) as f64 * dec.f_w;
        assert!(dec.t_effective.powi(2) <= bound2 * (1.0 + 1e-9));
        assert!((t_from_f(dec.f_w, k, dec.df).unwrap() - dec.t_w).abs() < 1e-12 * dec.t_w.max(1.0));

        // adding the surrogate instead of W leaves the treatment coefficient unchanged
        let via_tilde = fit_wls(&d, &pl.spec.with_covariate("w_tilde")).unwrap();
        assert!((via_tilde.treatment_coef().unwrap() - dec.beta_hat).abs() < 1e-10 * dec.se_b.max(dec.beta_hat.abs()));
    }
}

#[test]
fn single_precision_fit_agrees_with_double() {
    let pl = planted(77, 60, 2, 1, false);
    let fit64 = fit_wls(&pl.data, &pl.spec).unwrap();
    let mut d32: Dataset<f32> = Dataset::new(60).unwrap();
    for c in ["y", "z", "x1", "x2"] {
        d32.add_column(c, pl.data.column(c).unwrap().iter().map(|&v| v as f32).collect()).unwrap();
    }
    let fit32 = fit_wls(&d32, &pl.spec).unwrap();
    let (b64, b32) = (fit64.treatment_coef().unwrap(), fit32.treatment_coef().unwrap() as f64);
    assert!((b64 - b32).abs() < 1e-4 * b64.abs().max(1.0));
    let _ = OmittedVariableScenario::<f32>::new(1.0, 0.1, 1);
}

fn rescaled(seed: u64, c: f64) -> (f64, f64) {
    let pl = planted(seed, 45, 3, 1, true);
    let w: Vec<f64> = pl.data.weights().iter().map(|v| v * c).collect();
    let d = pl.data.clone().with_weights(w).unwrap();
    let a = fit_wls(&pl.data, &pl.spec).unwrap();
    let b = fit_wls(&d, &pl.spec).unwrap();
    let worst = a
        .coefficients
        .iter()
        .zip(&b.coefficients)
        .map(|(x, y)| (x - y).abs() / x.abs().max(1e-8))
        .fold(0.0, f64::max);
    (worst, (a.treatment_se().unwrap() - b.treatment_se().unwrap()).abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coefficients_invariant_to_weight_scale(seed in 0u64..10_000, c in 0.01f64..100.0) {
        let (worst, se_diff) = rescaled(seed, c);
        prop_assert!(worst < 1e-9);
        prop_assert!(se_diff < 1e-10);
    }

    #[test]
    fn projection_is_idempotent(seed in 0u64..10_000) {
        let pl = planted(seed, 35, 3, 1, seed % 2 == 0);
        let given = Given::new(["x1", "x2", "x3"]);
        let once = residualize(&pl.data, "y", &given).unwrap();
        let d = pl.data.clone().with_column("y_perp", once.clone()).unwrap();
        let twice = residualize(&d, "y_perp", &given).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }
}
