use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outcome transformation applied before fitting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    #[default]
    None,
    Log,
    Log1p,
}

/// Stopping rule for backward elimination.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// Drop the group with the largest partial-F p-value while it exceeds `alpha`.
    #[default]
    Pvalue,
    /// Drop the group whose removal lowers AIC the most, while any does.
    Aic,
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepwiseSettings {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default)]
    pub criterion: Criterion,
    /// Removal threshold for the p-value criterion; `1.0` removes nothing.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Groups never removed.
    #[serde(default)]
    pub keep: Vec<String>,
}

impl Default for StepwiseSettings {
    fn default() -> Self {
        Self {
            enabled: false,
            criterion: Criterion::Pvalue,
            alpha: default_alpha(),
            keep: Vec::new(),
        }
    }
}

fn default_strata() -> usize {
    6
}

fn default_balance_alpha() -> f64 {
    0.10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropensitySettings {
    /// Propensity-model covariates; defaults to the covariates plus candidates.
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
    #[serde(default = "default_strata")]
    pub n_strata: usize,
    #[serde(default = "default_balance_alpha")]
    pub alpha: f64,
}

impl Default for PropensitySettings {
    fn default() -> Self {
        Self {
            covariates: None,
            n_strata: default_strata(),
            alpha: default_balance_alpha(),
        }
    }
}

/// A column computed as the difference of two numeric columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivedColumn {
    pub name: String,
    /// `[a, b]` gives `a − b`.
    pub difference: [String; 2],
}

/// An effect target in terms of the treatment and moderator names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub label: String,
    /// Keys: the treatment, a single-column moderator, or an interaction column name.
    #[serde(default)]
    pub weights: IndexMap<String, f64>,
    /// Use treated-share weights on every interaction.
    #[serde(default)]
    pub ett: bool,
}

/// One sensitivity zone as written in a config or on the command line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ZoneSpec {
    Fixed { t: f64, r: f64, k: usize },
    /// `T` is taken from the benchmark `|t_w|` of a variable; `r` of `None`
    /// expands to every configured R bound.
    Benchmark { variable: String, r: Option<f64> },
}

impl ZoneSpec {
    /// Parses `T:R`, `T:R:k`, `T` (R = 1), `benchmark:<var>` or `benchmark:<var>:R`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = |why: &str| Error::Config(format!("zone `{s}`: {why}"));
        let num = |v: &str, what: &str| -> Result<f64> {
            v.trim()
                .parse::<f64>()
                .map_err(|_| bad(&format!("{what} `{v}` is not a number")))
        };
        if let Some(rest) = s.strip_prefix("benchmark:") {
            let mut parts = rest.splitn(2, ':');
            let variable = parts.next().unwrap_or("").trim().to_string();
            if variable.is_empty() {
                return Err(bad("missing variable name"));
            }
            let r = parts.next().map(|r| num(r, "R")).transpose()?;
            let z = ZoneSpec::Benchmark { variable, r };
            z.validate()?;
            return Ok(z);
        }
        let parts: Vec<&str> = s.split(':').collect();
        let z = match parts.as_slice() {
            [t] => ZoneSpec::Fixed { t: num(t, "T")?, r: 1.0, k: 1 },
            [t, r] => ZoneSpec::Fixed {
                t: num(t, "T")?,
                r: num(r, "R")?,
                k: 1,
            },
            [t, r, k] => ZoneSpec::Fixed {
                t: num(t, "T")?,
                r: num(r, "R")?,
                k: k.trim().parse().map_err(|_| bad("k must be a positive integer"))?,
            },
            _ => return Err(bad("expected T:R[:k] or benchmark:<variable>[:R]")),
        };
        z.validate()?;
        Ok(z)
    }

    /// Parses a comma-separated list of zones.
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        s.split(',').filter(|p| !p.trim().is_empty()).map(Self::parse).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let check_r = |r: f64| {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("R bound {r} must lie in [0, 1]")));
            }
            Ok(())
        };
        match self {
            ZoneSpec::Fixed { t, r, k } => {
                if !(t.is_finite() && *t >= 0.0) {
                    return Err(Error::Config(format!("T bound {t} must be finite and non-negative")));
                }
                if *k == 0 {
                    return Err(Error::Config("zone rank k must be at least 1".into()));
                }
                check_r(*r)
            }
            ZoneSpec::Benchmark { r, .. } => r.map_or(Ok(()), check_r),
        }
    }
}

impl<'de> Deserialize<'de> for ZoneSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        ZoneSpec::parse(&s).map_err(serde::de::Error::custom)
    }
}

fn default_q_level() -> f64 {
    0.95
}

fn default_r_bounds() -> Vec<f64> {
    vec![0.01, 0.1, 1.0]
}

/// Declarative description of an analysis, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Data file; relative paths resolve against the config file's directory.
    #[serde(default)]
    pub data: Option<PathBuf>,
    /// `","` or `"\t"`; inferred from the file extension when absent.
    #[serde(default)]
    pub delimiter: Option<String>,
    pub outcome: String,
    #[serde(default)]
    pub transform: Transform,
    pub treatment: String,
    /// Value of a text treatment column that marks treated rows.
    #[serde(default)]
    pub treated_level: Option<String>,
    #[serde(default)]
    pub weights: Option<String>,
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Numeric-coded variables to encode as categorical.
    #[serde(default)]
    pub categorical: Vec<String>,
    /// Variables deliberately left out of the outcome model and benchmarked as candidates.
    #[serde(default)]
    pub candidates: Vec<String>,
    /// Moderators interacted with the treatment.
    #[serde(default)]
    pub interactions: Vec<String>,
    #[serde(default)]
    pub derived: Vec<DerivedColumn>,
    #[serde(default)]
    pub zones: Vec<ZoneSpec>,
    /// R bounds used for zones that do not give one.
    #[serde(default = "default_r_bounds")]
    pub r_bounds: Vec<f64>,
    #[serde(default = "default_q_level")]
    pub q_level: f64,
    #[serde(default)]
    pub stepwise: StepwiseSettings,
    #[serde(default)]
    pub propensity: PropensitySettings,
    #[serde(default)]
    pub targets: Vec<TargetConfig>,
}

impl AnalysisConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and resolves `data` against its directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })?;
        if let Some(d) = &cfg.data {
            if d.is_relative() {
                let base = path.parent().unwrap_or_else(|| Path::new("."));
                cfg.data = Some(base.join(d));
            }
        }
        Ok(cfg)
    }

    pub fn delimiter_byte(&self) -> Result<Option<u8>> {
        match self.delimiter.as_deref() {
            None => Ok(None),
            Some(",") => Ok(Some(b',')),
            Some("\t") | Some("tab") | Some("\\t") => Ok(Some(b'\t')),
            Some(d) => Err(Error::Config(format!("unsupported delimiter `{d}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q_level > 0.0 && self.q_level < 1.0) {
            return Err(Error::Config(format!("q_level {} must lie in (0, 1)", self.q_level)));
        }
        for r in &self.r_bounds {
            if !(0.0..=1.0).contains(r) {
                return Err(Error::Config(format!("R bound {r} must lie in [0, 1]")));
            }
        }
        for z in &self.zones {
            z.validate()?;
        }
        if !(self.stepwise.alpha > 0.0 && self.stepwise.alpha <= 1.0) {
            return Err(Error::Config(format!(
                "stepwise alpha {} must lie in (0, 1]",
                self.stepwise.alpha
            )));
        }
        if self.propensity.n_strata == 0 {
            return Err(Error::Config("propensity n_strata must be positive".into()));
        }
        if !(self.propensity.alpha > 0.0 && self.propensity.alpha < 1.0) {
            return Err(Error::Config("propensity alpha must lie in (0, 1)".into()));
        }
        self.delimiter_byte()?;
        let mut seen: Vec<&str> = Vec::new();
        for v in self.covariates.iter().chain(&self.candidates) {
            if seen.contains(&v.as_str()) {
                return Err(Error::Config(format!("`{v}` is listed more than once among covariates and candidates")));
            }
            if v == &self.outcome || v == &self.treatment {
                return Err(Error::Config(format!("`{v}` cannot be both a covariate and the outcome or treatment")));
            }
            seen.push(v);
        }
        for m in &self.interactions {
            if !self.covariates.contains(m) {
                return Err(Error::Config(format!("moderator `{m}` must also be a covariate")));
            }
        }
        for t in &self.targets {
            if !t.ett && t.weights.is_empty() {
                return Err(Error::Config(format!("target `{}` has no weights", t.label)));
            }
        }
        Ok(())
    }

    /// Propensity covariates after applying the default.
    pub fn propensity_covariates(&self) -> Vec<String> {
        match &self.propensity.covariates {
            Some(c) => c.clone(),
            None => self.covariates.iter().chain(&self.candidates).cloned().collect(),
        }
    }
}
