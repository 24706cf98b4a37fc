use indexmap::IndexMap;

use super::config::{AnalysisConfig, Transform};
use super::table::{RawColumn, RawTable};
use crate::error::{Error, Result};
use crate::regression::{Dataset, ModelSpec};
use crate::scalar::Scalar;
use crate::targets::{treated_share, EffectTarget};

/// A table turned into a numeric dataset and the model it describes.
#[derive(Debug, Clone)]
pub struct Encoded<T> {
    pub data: Dataset<T>,
    /// Outcome model with every configured covariate.
    pub spec: ModelSpec,
    pub candidates: Vec<String>,
    pub propensity_covariates: Vec<String>,
    /// Moderator variable → its treatment-interaction columns.
    pub interactions: IndexMap<String, Vec<String>>,
    /// Original (0-based) indices of the rows kept.
    pub rows_used: Vec<usize>,
    pub rows_dropped: usize,
    /// Levels of each categorical variable; the first is the reference.
    pub levels: IndexMap<String, Vec<String>>,
}

fn fmt_level(v: f64) -> String {
    format!("{v}")
}

/// Levels of a categorical column over `rows`, sorted (numerically for numeric columns).
fn levels_of(col: &RawColumn, rows: &[usize]) -> Vec<String> {
    match col {
        RawColumn::Numeric(v) => {
            let mut vals: Vec<f64> = rows.iter().filter_map(|&i| v[i]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            vals.into_iter().map(fmt_level).collect()
        }
        RawColumn::Text(v) => {
            let mut vals: Vec<&str> = rows.iter().filter_map(|&i| v[i].as_deref()).collect();
            vals.sort_unstable();
            vals.dedup();
            vals.into_iter().map(str::to_string).collect()
        }
    }
}

fn cell_label(col: &RawColumn, i: usize) -> Option<String> {
    match col {
        RawColumn::Numeric(v) => v[i].map(fmt_level),
        RawColumn::Text(v) => v[i].clone(),
    }
}

fn numeric<'a>(table: &'a RawTable, name: &str, role: &str) -> Result<&'a [Option<f64>]> {
    match table.column(name)? {
        RawColumn::Numeric(v) => Ok(v),
        RawColumn::Text(_) => Err(Error::Data(format!("{role} `{name}` must be numeric"))),
    }
}

fn add_derived(table: &RawTable, config: &AnalysisConfig) -> Result<Option<RawTable>> {
    if config.derived.is_empty() {
        return Ok(None);
    }
    let mut t = table.clone();
    for d in &config.derived {
        let [a, b] = &d.difference;
        let va = numeric(&t, a, "derived input")?.to_vec();
        let vb = numeric(&t, b, "derived input")?.to_vec();
        let v = va.iter().zip(&vb).map(|(x, y)| Some((*x)? - (*y)?)).collect();
        t.push_numeric(d.name.clone(), v)?;
    }
    Ok(Some(t))
}

fn unique_in_order(items: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for i in items {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

/// Encodes the variables a config refers to.
///
/// Rows missing any used variable are dropped and counted. Categorical
/// variables (text columns and those listed under `categorical`) become groups
/// of indicator columns named `var[level]`, one per level except the first in
/// sorted order. Each moderator `m` adds the columns `treatment:c` for every
/// column `c` of `m`.
pub fn encode<T: Scalar>(table: &RawTable, config: &AnalysisConfig) -> Result<Encoded<T>> {
    config.validate()?;
    let derived = add_derived(table, config)?;
    let table = derived.as_ref().unwrap_or(table);

    let propensity_covariates = config.propensity_covariates();
    let groups = unique_in_order(
        config
            .covariates
            .iter()
            .chain(&config.candidates)
            .chain(&propensity_covariates)
            .cloned(),
    );
    for g in &groups {
        if g == &config.outcome || g == &config.treatment {
            return Err(Error::Config(format!("`{g}` cannot be a covariate of itself")));
        }
    }
    let mut used: Vec<&str> = vec![config.outcome.as_str(), config.treatment.as_str()];
    used.extend(config.weights.as_deref());
    used.extend(groups.iter().map(String::as_str));
    for name in &used {
        let col = table.column(name)?;
        if col.missing_count() == col.len() {
            return Err(Error::Data(format!("column `{name}` has no non-missing values")));
        }
    }

    let rows: Vec<usize> = (0..table.n_rows())
        .filter(|&i| used.iter().all(|n| !table.column(n).expect("checked").is_missing(i)))
        .collect();
    let rows_dropped = table.n_rows() - rows.len();
    if rows_dropped > 0 {
        log::info!(
            "listwise deletion dropped {rows_dropped} of {} rows; {} remain",
            table.n_rows(),
            rows.len()
        );
    }
    if rows.len() < 2 {
        return Err(Error::Data(format!("only {} complete rows remain", rows.len())));
    }
    let n = rows.len();
    let mut data = Dataset::new(n)?;

    // outcome
    let raw_y = numeric(table, &config.outcome, "outcome")?;
    let mut y = Vec::with_capacity(n);
    let mut bad_rows = Vec::new();
    for &i in &rows {
        let v = raw_y[i].expect("complete row");
        let t = match config.transform {
            Transform::None => v,
            Transform::Log => {
                if v <= 0.0 {
                    bad_rows.push(i + 1);
                }
                v.ln()
            }
            Transform::Log1p => {
                if v <= -1.0 {
                    bad_rows.push(i + 1);
                }
                v.ln_1p()
            }
        };
        y.push(T::lit(t));
    }
    if !bad_rows.is_empty() {
        let shown: Vec<String> = bad_rows.iter().take(10).map(usize::to_string).collect();
        return Err(Error::Data(format!(
            "outcome `{}` is outside the domain of the {:?} transform in {} data row(s): {}{}",
            config.outcome,
            config.transform,
            bad_rows.len(),
            shown.join(", "),
            if bad_rows.len() > 10 { ", ..." } else { "" }
        )));
    }
    data.add_column(config.outcome.clone(), y)?;

    // treatment
    let tcol = table.column(&config.treatment)?;
    let z: Vec<T> = match (tcol, &config.treated_level) {
        (RawColumn::Numeric(v), None) => rows.iter().map(|&i| T::lit(v[i].expect("complete row"))).collect(),
        (col, Some(level)) => {
            let levels = levels_of(col, &rows);
            if !levels.contains(level) {
                return Err(Error::Data(format!(
                    "treated level `{level}` does not occur in `{}` (levels: {})",
                    config.treatment,
                    levels.join(", ")
                )));
            }
            if levels.len() != 2 {
                return Err(Error::Data(format!(
                    "treatment `{}` has {} levels, expected 2",
                    config.treatment,
                    levels.len()
                )));
            }
            rows.iter()
                .map(|&i| {
                    if cell_label(col, i).as_deref() == Some(level.as_str()) {
                        T::one()
                    } else {
                        T::zero()
                    }
                })
                .collect()
        }
        (RawColumn::Text(_), None) => {
            return Err(Error::Config(format!(
                "treatment `{}` is text; set `treated_level`",
                config.treatment
            )))
        }
    };
    data.add_column(config.treatment.clone(), z.clone())?;

    if let Some(wname) = &config.weights {
        let w = numeric(table, wname, "weights")?;
        data.set_weights(rows.iter().map(|&i| T::lit(w[i].expect("complete row"))).collect())?;
    }

    // covariate groups
    let mut levels_map = IndexMap::new();
    for g in &groups {
        let col = table.column(g)?;
        let categorical = !col.is_numeric() || config.categorical.contains(g);
        if !categorical {
            let v = numeric(table, g, "covariate")?;
            data.add_column(g.clone(), rows.iter().map(|&i| T::lit(v[i].expect("complete row"))).collect())?;
            continue;
        }
        let levels = levels_of(col, &rows);
        if levels.len() < 2 {
            return Err(Error::Data(format!(
                "categorical `{g}` has a single level{} among complete rows",
                levels.first().map(|l| format!(" (`{l}`)")).unwrap_or_default()
            )));
        }
        let labels: Vec<Option<String>> = rows.iter().map(|&i| cell_label(col, i)).collect();
        let cols = levels[1..]
            .iter()
            .map(|lvl| {
                let v = labels
                    .iter()
                    .map(|l| if l.as_deref() == Some(lvl.as_str()) { T::one() } else { T::zero() })
                    .collect();
                (format!("{g}[{lvl}]"), v)
            })
            .collect();
        data.add_group(g.clone(), cols)?;
        levels_map.insert(g.clone(), levels);
    }

    // treatment interactions
    let mut spec = ModelSpec::new(config.outcome.clone(), config.treatment.clone()).covariates(config.covariates.clone());
    let mut interactions = IndexMap::new();
    for m in &config.interactions {
        let mut names = Vec::new();
        for c in data.group(m)?.to_vec() {
            let name = format!("{}:{c}", config.treatment);
            let v: Vec<T> = data.column(&c)?.iter().zip(&z).map(|(&a, &b)| a * b).collect();
            data.add_column(name.clone(), v)?;
            spec = spec.interaction(name.clone());
            names.push(name);
        }
        interactions.insert(m.clone(), names);
    }
    spec.validate(&data)?;

    Ok(Encoded {
        data,
        spec,
        candidates: config.candidates.clone(),
        propensity_covariates,
        interactions,
        rows_used: rows,
        rows_dropped,
        levels: levels_map,
    })
}

impl<T: Scalar> Encoded<T> {
    /// Effect targets of a config, with moderator names mapped to interaction columns.
    pub fn targets(&self, config: &AnalysisConfig) -> Result<Vec<EffectTarget<T>>> {
        config
            .targets
            .iter()
            .map(|tc| {
                let mut t = EffectTarget::new(tc.label.clone());
                if tc.ett {
                    t = t.with(self.spec.treatment.clone(), T::one());
                    for cols in self.interactions.values() {
                        for c in cols {
                            let share = treated_share(&self.data, &self.spec.treatment, c)?;
                            t = t.with(c.clone(), share);
                        }
                    }
                }
                for (key, &w) in &tc.weights {
                    let column = if key == &self.spec.treatment || self.spec.interactions.contains(key) {
                        key.clone()
                    } else if let Some(cols) = self.interactions.get(key) {
                        if cols.len() != 1 {
                            return Err(Error::Config(format!(
                                "target `{}`: moderator `{key}` has {} interaction columns; name one of {}",
                                tc.label,
                                cols.len(),
                                cols.join(", ")
                            )));
                        }
                        cols[0].clone()
                    } else {
                        return Err(Error::Config(format!(
                            "target `{}`: `{key}` is neither the treatment nor an interaction",
                            tc.label
                        )));
                    };
                    t = t.with(column, T::lit(w));
                }
                t.validate(&self.spec)?;
                Ok(t)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(s: &str) -> RawTable {
        RawTable::parse(s.as_bytes(), b',', "inline").unwrap()
    }

    fn config(s: &str) -> AnalysisConfig {
        AnalysisConfig::from_toml_str(s).unwrap()
    }

    #[test]
    fn categorical_becomes_indicator_group() {
        let t = table("y,z,c\n1,0,b\n2,1,a\n3,0,c\n4,1,b\n");
        let c = config("outcome=\"y\"\ntreatment=\"z\"\ncovariates=[\"c\"]\n");
        let e: Encoded<f64> = encode(&t, &c).unwrap();
        assert_eq!(e.data.group("c").unwrap(), ["c[b]", "c[c]"]);
        assert_eq!(e.data.column("c[b]").unwrap(), [1.0, 0.0, 0.0, 1.0]);
        assert_eq!(e.levels["c"], ["a", "b", "c"]);
    }

    #[test]
    fn missing_rows_are_dropped_and_counted() {
        let t = table("y,z,x,unused\n1,0,1,\n2,1,,5\n3,0,2,6\n4,1,3,7\n");
        let c = config("outcome=\"y\"\ntreatment=\"z\"\ncovariates=[\"x\"]\n");
        let e: Encoded<f64> = encode(&t, &c).unwrap();
        assert_eq!(e.rows_dropped, 1);
        assert_eq!(e.rows_used, [0, 2, 3]);
        assert_eq!(e.data.n(), 3);
    }

    #[test]
    fn log_transform_rejects_nonpositive_outcomes() {
        let t = table("y,z\n1,0\n0,1\n-2,0\n");
        let c = config("outcome=\"y\"\ntreatment=\"z\"\ntransform=\"log\"\n");
        let e = encode::<f64>(&t, &c).unwrap_err().to_string();
        assert!(e.contains("2 data row(s): 2, 3"), "{e}");
        let c = config("outcome=\"y\"\ntreatment=\"z\"\ntransform=\"log1p\"\n");
        assert!(encode::<f64>(&t, &c).is_err());
    }

    #[test]
    fn single_level_categorical_is_an_error() {
        let t = table("y,z,c\n1,0,a\n2,1,a\n");
        let c = config("outcome=\"y\"\ntreatment=\"z\"\ncovariates=[\"c\"]\n");
        assert!(encode::<f64>(&t, &c).is_err());
    }

    #[test]
    fn text_treatment_needs_a_level() {
        let t = table("y,z\n1,yes\n2,no\n");
        let c = config("outcome=\"y\"\ntreatment=\"z\"\n");
        assert!(encode::<f64>(&t, &c).is_err());
        let c = config("outcome=\"y\"\ntreatment=\"z\"\ntreated_level=\"yes\"\n");
        let e: Encoded<f64> = encode(&t, &c).unwrap();
        assert_eq!(e.data.column("z").unwrap(), [1.0, 0.0]);
    }

    #[test]
    fn derived_difference_and_interactions() {
        let t = table("out,in,z,d\n5,1,1,1\n7,2,0,0\n9,3,1,0\n4,1,0,1\n");
        let c = config(
            "outcome=\"los\"\ntreatment=\"z\"\ncovariates=[\"d\"]\ninteractions=[\"d\"]\n\
             [[derived]]\nname=\"los\"\ndifference=[\"out\",\"in\"]\n\
             [[targets]]\nlabel=\"sub\"\nweights={z=1.0, d=1.0}\n[[targets]]\nlabel=\"ETT\"\nett=true\n",
        );
        let e: Encoded<f64> = encode(&t, &c).unwrap();
        assert_eq!(e.data.column("los").unwrap(), [4.0, 5.0, 6.0, 3.0]);
        assert_eq!(e.data.column("z:d").unwrap(), [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(e.spec.interactions, ["z:d"]);
        let targets = e.targets(&c).unwrap();
        assert_eq!(targets[0].combination["z:d"], 1.0);
        assert_eq!(targets[1].combination["z:d"], 0.5);
    }
}
