mod common;

use common::{close, normal, planted, rng};
use ovsens::{
    benchmark_candidates, benchmark_included, fit_wls, joint_rho_sq, omitted_bias, Dataset, ModelSpec, Role,
};

fn toy() -> (Dataset<f64>, ModelSpec) {
    let pl = planted(31, 120, 3, 1, false);
    (pl.data, pl.spec)
}

/// t of `w` when the treatment is regressed on the remaining covariates and `w`.
fn treatment_t(data: &Dataset<f64>, spec: &ModelSpec, w: &str) -> f64 {
    let others: Vec<String> = spec.covariates.iter().filter(|g| *g != w).cloned().collect();
    let s = ModelSpec::new(spec.treatment.clone(), w).covariates(others);
    let f = fit_wls(data, &s).unwrap();
    f.treatment_coef().unwrap() / f.treatment_se().unwrap()
}

#[test]
fn two_covariate_table_has_two_populated_entries() {
    let mut r = rng(5);
    let n = 80;
    let x1: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
    let x2: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
    let z: Vec<f64> = (0..n).map(|i| x1[i] + normal(&mut r)).collect();
    let y: Vec<f64> = (0..n).map(|i| z[i] + x2[i] + normal(&mut r)).collect();
    let data = Dataset::new(n)
        .unwrap()
        .with_column("y", y)
        .unwrap()
        .with_column("z", z)
        .unwrap()
        .with_column("x1", x1)
        .unwrap()
        .with_column("x2", x2)
        .unwrap();
    let spec = ModelSpec::new("y", "z").covariates(["x1", "x2"]);
    let t = benchmark_included(&data, &spec).unwrap();
    assert_eq!(t.entries.len(), 2);
    for e in &t.entries {
        assert!(e.t_w.is_finite() && e.f_w.is_finite() && e.rho_sq.is_finite());
        assert_eq!(e.role, Role::Included);
        assert_eq!(e.k, 1);
        assert!(e.degenerate.is_none());
    }
    assert_eq!(t.entries[0].name, "x1");
}

#[test]
fn included_t_matches_direct_treatment_regression() {
    let (data, spec) = toy();
    let table = benchmark_included(&data, &spec).unwrap();
    for e in &table.entries {
        let t = treatment_t(&data, &spec, &e.name);
        assert!(close(e.t_w, t, 1e-9), "{}: {} vs {t}", e.name, e.t_w);
        assert!(close(e.f_w, t * t, 1e-9));
    }
}

#[test]
fn rho_sq_is_residual_ss_reduction() {
    let (data, spec) = toy();
    let table = benchmark_included(&data, &spec).unwrap();
    for e in &table.entries {
        let small = fit_wls(&data, &spec.without_covariates(&[e.name.clone()])).unwrap();
        let big = fit_wls(&data, &spec).unwrap();
        let want = 1.0 - big.rss / small.rss;
        assert!(close(e.rho_sq, want, 1e-9), "{}", e.name);
    }
}

#[test]
fn entries_reproduce_the_refit_bias() {
    for seed in 0..20 {
        let pl = planted(100 + seed, 90, 4, 1 + (seed as usize % 3), seed % 2 == 0);
        let full = pl.spec.with_covariate("w");
        let big = fit_wls(&pl.data, &full).unwrap();
        let table = benchmark_included(&pl.data, &full).unwrap();
        let e = table.entry("w").unwrap();
        let small = fit_wls(&pl.data, &pl.spec).unwrap();
        let bias = omitted_bias(small.treatment_se().unwrap(), &e.scenario());
        let refit = small.treatment_coef().unwrap() - big.treatment_coef().unwrap();
        assert!((bias - refit).abs() <= 1e-9 * (refit.abs() + small.treatment_se().unwrap()));
    }
}

#[test]
fn candidates_agree_with_included_after_adding() {
    let pl = planted(41, 100, 3, 2, true);
    let cand = benchmark_candidates(&pl.data, &pl.spec, &["w".to_string()]).unwrap();
    let incl = benchmark_included(&pl.data, &pl.spec.with_covariate("w")).unwrap();
    let (c, i) = (cand.entry("w").unwrap(), incl.entry("w").unwrap());
    assert_eq!(c.role, Role::Candidate);
    assert!(c.caveat.is_some());
    assert!(close(c.t_w, i.t_w, 1e-10));
    assert!(close(c.rho_sq, i.rho_sq, 1e-10));
    assert_eq!(c.k, 2);
}

#[test]
fn joint_rho_sq_of_one_group_equals_its_entry() {
    let (data, spec) = toy();
    let table = benchmark_included(&data, &spec).unwrap();
    let e = &table.entries[0];
    let j = joint_rho_sq(&data, &spec, std::slice::from_ref(&e.name)).unwrap();
    assert!(close(j, e.rho_sq, 1e-10));
    assert_eq!(joint_rho_sq(&data, &spec, &[]).unwrap(), 0.0);
    let all = joint_rho_sq(&data, &spec, &spec.covariates).unwrap();
    assert!(all >= e.rho_sq - 1e-12 && all < 1.0);
}

#[test]
fn sorted_by_absolute_t_with_flagged_last() {
    let pl = planted(7, 100, 4, 1, false);
    let z = pl.data.column("z").unwrap().to_vec();
    let data = pl.data.with_column("zcopy", z).unwrap();
    let table = benchmark_candidates(&data, &pl.spec, &["w".into(), "zcopy".into()]).unwrap();
    let last = table.entries.last().unwrap();
    assert_eq!(last.name, "zcopy");
    assert!(last.is_degenerate());
    assert!(last.t_w.is_nan());

    let incl = benchmark_included(&data, &pl.spec).unwrap();
    let ts: Vec<f64> = incl.entries.iter().map(|e| e.t_w.abs()).collect();
    assert!(ts.windows(2).all(|w| w[0] >= w[1]), "{ts:?}");
}

#[test]
fn duplicate_and_included_candidates_are_rejected() {
    let (data, spec) = toy();
    assert!(benchmark_candidates(&data, &spec, &["w".into(), "w".into()]).is_err());
    assert!(benchmark_candidates(&data, &spec, &["x1".into()]).is_err());
    assert!(benchmark_candidates(&data, &spec, &["nope".into()]).is_err());
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let pl = planted(9, 150, 8, 1, true);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| benchmark_included(&pl.data, &pl.spec).unwrap())
    };
    let (a, b) = (run(1), run(4));
    for (x, y) in a.entries.iter().zip(&b.entries) {
        assert_eq!(x.name, y.name);
        assert_eq!(x.t_w.to_bits(), y.t_w.to_bits());
        assert_eq!(x.rho_sq.to_bits(), y.rho_sq.to_bits());
    }
}
