#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Writes a synthetic observational study to `dir/name`: binary treatment
/// `z`, covariates `x1..xp`, a categorical `site`, an unmodelled `u`, and a
/// positive outcome `y`.
pub fn synthetic_csv(dir: &Path, name: &str, seed: u64, n: usize, p: usize) -> PathBuf {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut nrm = move || -> f64 { StandardNormal.sample(&mut r) };
    let mut s = String::from("y,z");
    for j in 1..=p {
        write!(s, ",x{j}").unwrap();
    }
    s.push_str(",site,u\n");
    let mut pick = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for _ in 0..n {
        let xs: Vec<f64> = (0..p).map(|_| nrm()).collect();
        let u = 0.5 * xs[0] + nrm();
        let site = ["a", "b", "c"][pick.random_range(0..3)];
        let lin = 0.4 * xs.iter().sum::<f64>() + 0.5 * u + nrm();
        let z = (lin > 0.0) as u8;
        let y = (1.0 + 0.2 * z as f64 + 0.3 * xs.iter().sum::<f64>() / p as f64 + 0.2 * u + 0.3 * nrm()).exp();
        write!(s, "{y},{z}").unwrap();
        for x in &xs {
            write!(s, ",{x}").unwrap();
        }
        writeln!(s, ",{site},{u}").unwrap();
    }
    let path = dir.join(name);
    std::fs::write(&path, s).unwrap();
    path
}

pub fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("analysis.toml");
    std::fs::write(&path, body).unwrap();
    path
}

/// Config for `synthetic_csv` output with `p` covariates.
pub fn synthetic_config(data: &str, p: usize, extra: &str) -> String {
    let covs: Vec<String> = (1..=p).map(|j| format!("\"x{j}\"")).collect();
    format!(
        "data = \"{data}\"\noutcome = \"y\"\ntransform = \"log\"\ntreatment = \"z\"\ncovariates = [{}, \"site\"]\ncandidates = [\"u\"]\n{extra}",
        covs.join(", ")
    )
}

/// Runs the CLI in-process and returns (exit code, stdout, stderr).
pub fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["ovsens"];
    argv.extend_from_slice(args);
    let code = ovsens_cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}
