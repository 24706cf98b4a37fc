#![allow(dead_code)]

use ovsens::{Dataset, ModelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Random dataset with `p` covariates `x1..xp`, treatment `z`, a planted
/// omitted group `w` of rank `k`, and outcome `y`.
pub struct Planted {
    pub data: Dataset<f64>,
    pub spec: ModelSpec,
}

pub fn planted(seed: u64, n: usize, p: usize, k: usize, weighted: bool) -> Planted {
    let mut r = rng(seed);
    let xs: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| normal(&mut r)).collect()).collect();
    let a: Vec<f64> = (0..p).map(|_| normal(&mut r)).collect();
    let binary = r.random_bool(0.5);
    let z: Vec<f64> = (0..n)
        .map(|i| {
            let lin: f64 = (0..p).map(|j| a[j] * xs[j][i]).sum::<f64>() * 0.5 + normal(&mut r);
            if binary {
                (lin > 0.0) as u8 as f64
            } else {
                lin
            }
        })
        .collect();
    let ws: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let cz = normal(&mut r);
            let cx: Vec<f64> = (0..p).map(|_| 0.5 * normal(&mut r)).collect();
            (0..n)
                .map(|i| cz * z[i] + (0..p).map(|j| cx[j] * xs[j][i]).sum::<f64>() + normal(&mut r))
                .collect()
        })
        .collect();
    let c: Vec<f64> = (0..p).map(|_| normal(&mut r)).collect();
    let d: Vec<f64> = (0..k).map(|_| normal(&mut r)).collect();
    let beta = normal(&mut r);
    let y: Vec<f64> = (0..n)
        .map(|i| {
            (0..p).map(|j| c[j] * xs[j][i]).sum::<f64>()
                + beta * z[i]
                + (0..k).map(|j| d[j] * ws[j][i]).sum::<f64>()
                + 2.0 * normal(&mut r)
        })
        .collect();

    let mut data = Dataset::new(n).unwrap();
    data.add_column("y", y).unwrap();
    data.add_column("z", z).unwrap();
    for (j, x) in xs.into_iter().enumerate() {
        data.add_column(format!("x{}", j + 1), x).unwrap();
    }
    let w_cols = ws
        .into_iter()
        .enumerate()
        .map(|(j, v)| (format!("w[{}]", j + 1), v))
        .collect();
    data.add_group("w", w_cols).unwrap();
    if weighted {
        let w = (0..n).map(|_| r.random_range(0.2..3.0)).collect();
        data.set_weights(w).unwrap();
    }
    let spec = ModelSpec::new("y", "z").covariates((1..=p).map(|j| format!("x{j}")));
    Planted { data, spec }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}
