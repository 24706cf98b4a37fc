use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Named numeric columns with per-row weights and covariate groups.
///
/// Every column belongs to exactly one group. [`Dataset::add_column`] creates a
/// singleton group named after the column; [`Dataset::add_group`] registers a
/// multi-column group such as the indicator encoding of a categorical variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    n: usize,
    columns: IndexMap<String, Vec<T>>,
    weights: Vec<T>,
    groups: IndexMap<String, Vec<String>>,
}

impl<T: Scalar> Dataset<T> {
    /// Empty dataset with `n` rows and unit weights.
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "a dataset needs at least 2 rows, got {n}"
            )));
        }
        Ok(Self {
            n,
            columns: IndexMap::new(),
            weights: vec![T::one(); n],
            groups: IndexMap::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of rows with strictly positive weight.
    pub fn n_effective(&self) -> usize {
        self.weights.iter().filter(|&&w| w > T::zero()).count()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn set_weights(&mut self, weights: Vec<T>) -> Result<()> {
        if weights.len() != self.n {
            return Err(Error::LengthMismatch {
                name: "weights".into(),
                expected: self.n,
                found: weights.len(),
            });
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < T::zero()) {
            return Err(Error::InvalidWeights(format!(
                "weight in row {i} is negative or not finite"
            )));
        }
        if weights.iter().filter(|&&w| w > T::zero()).count() < 2 {
            return Err(Error::InvalidWeights(
                "at least two weights must be strictly positive".into(),
            ));
        }
        self.weights = weights;
        Ok(())
    }

    pub fn with_weights(mut self, weights: Vec<T>) -> Result<Self> {
        self.set_weights(weights)?;
        Ok(self)
    }

    /// Adds a column forming its own singleton group.
    pub fn add_column(&mut self, name: impl Into<String>, values: Vec<T>) -> Result<()> {
        let name = name.into();
        self.add_group(name.clone(), vec![(name, values)])
    }

    pub fn with_column(mut self, name: impl Into<String>, values: Vec<T>) -> Result<Self> {
        self.add_column(name, values)?;
        Ok(self)
    }

    /// Adds a covariate group made of one or more new columns.
    pub fn add_group(&mut self, group: impl Into<String>, columns: Vec<(String, Vec<T>)>) -> Result<()> {
        let group = group.into();
        if columns.is_empty() {
            return Err(Error::InvalidArgument(format!("group `{group}` has no columns")));
        }
        if self.groups.contains_key(&group) {
            return Err(Error::DuplicateName(group));
        }
        for (name, values) in &columns {
            if self.columns.contains_key(name) || columns.iter().filter(|(n, _)| n == name).count() > 1 {
                return Err(Error::DuplicateName(name.clone()));
            }
            if values.len() != self.n {
                return Err(Error::LengthMismatch {
                    name: name.clone(),
                    expected: self.n,
                    found: values.len(),
                });
            }
        }
        let names = columns.iter().map(|(n, _)| n.clone()).collect();
        for (name, values) in columns {
            self.columns.insert(name, values);
        }
        self.groups.insert(group, names);
        Ok(())
    }

    pub fn with_group(mut self, group: impl Into<String>, columns: Vec<(String, Vec<T>)>) -> Result<Self> {
        self.add_group(group, columns)?;
        Ok(self)
    }

    pub fn column(&self, name: &str) -> Result<&[T]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn has_group(&self, name: &str) -> bool {
        self.groups.contains_key(name)
    }

    /// Design-column names of a covariate group.
    pub fn group(&self, name: &str) -> Result<&[String]> {
        self.groups
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn group_names(&self) -> impl Iterator<Item = &str> {
        self.groups.keys().map(String::as_str)
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    /// Group that owns a column.
    pub fn group_of(&self, column: &str) -> Option<&str> {
        self.groups
            .iter()
            .find(|(_, cols)| cols.iter().any(|c| c == column))
            .map(|(g, _)| g.as_str())
    }

    /// Columns of the listed groups, in order.
    pub(crate) fn group_columns<'a>(&'a self, groups: &[String]) -> Result<Vec<(&'a str, &'a [T])>> {
        let mut out = Vec::new();
        for g in groups {
            for c in self.group(g)? {
                out.push((c.as_str(), self.column(c)?));
            }
        }
        Ok(out)
    }
}

/// Outcome regression `Y ~ [1] + covariates + treatment [+ treatment interactions]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub outcome: String,
    pub treatment: String,
    /// Treatment-interaction design columns (e.g. the product `Z·X₁`).
    #[serde(default)]
    pub interactions: Vec<String>,
    /// Covariate group names, in design order.
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default = "default_true")]
    pub intercept: bool,
}

fn default_true() -> bool {
    true
}

pub const INTERCEPT: &str = "(Intercept)";

impl ModelSpec {
    pub fn new(outcome: impl Into<String>, treatment: impl Into<String>) -> Self {
        Self {
            outcome: outcome.into(),
            treatment: treatment.into(),
            interactions: Vec::new(),
            covariates: Vec::new(),
            intercept: true,
        }
    }

    pub fn covariates<I, S>(mut self, groups: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.covariates = groups.into_iter().map(Into::into).collect();
        self
    }

    pub fn interaction(mut self, column: impl Into<String>) -> Self {
        self.interactions.push(column.into());
        self
    }

    pub fn without_intercept(mut self) -> Self {
        self.intercept = false;
        self
    }

    /// Copy of this spec with one more covariate group appended.
    pub fn with_covariate(&self, group: impl Into<String>) -> Self {
        let mut s = self.clone();
        s.covariates.push(group.into());
        s
    }

    /// Copy of this spec with the named covariate groups removed.
    pub fn without_covariates(&self, groups: &[String]) -> Self {
        let mut s = self.clone();
        s.covariates.retain(|g| !groups.contains(g));
        s
    }

    /// Treatment column followed by any interaction columns.
    pub fn treatment_columns(&self) -> Vec<String> {
        std::iter::once(self.treatment.clone())
            .chain(self.interactions.iter().cloned())
            .collect()
    }

    pub fn validate<T: Scalar>(&self, data: &Dataset<T>) -> Result<()> {
        data.column(&self.outcome)?;
        data.column(&self.treatment)?;
        for c in &self.interactions {
            data.column(c)?;
        }
        for (i, g) in self.covariates.iter().enumerate() {
            let cols = data.group(g)?;
            if self.covariates[..i].contains(g) {
                return Err(Error::InvalidSpec(format!("covariate group `{g}` listed twice")));
            }
            if cols
                .iter()
                .any(|c| *c == self.outcome || *c == self.treatment || self.interactions.contains(c))
            {
                return Err(Error::InvalidSpec(format!(
                    "covariate group `{g}` overlaps the outcome or treatment"
                )));
            }
        }
        if self.interactions.contains(&self.treatment) || self.outcome == self.treatment {
            return Err(Error::InvalidSpec("outcome, treatment and interactions must differ".into()));
        }
        Ok(())
    }
}
