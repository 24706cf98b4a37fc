//! Report model and its text, CSV and JSON renderings.
//!
//! Values are kept at full precision inside a [`Report`]; only the text
//! renderer rounds, using each column's display precision.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::benchmarking::BenchmarkTable;
use crate::error::{Error, Result};
use crate::regression::FitResult;
use crate::scalar::Scalar;
use crate::sensitivity::SensitivityInterval;

/// Version of the JSON layout. Breaking changes bump the major component.
pub const SCHEMA_VERSION: &str = "1.0";

/// Header of the benchmark section's CSV rendering.
pub const BENCHMARK_COLUMNS: [&str; 6] = ["name", "k", "t_w", "f_w", "rho_sq", "role"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Null,
    Int(i64),
    Num(f64),
    Text(String),
}

impl Cell {
    pub fn num<T: Scalar>(v: T) -> Self {
        let v = v.as_f64();
        if v.is_finite() {
            Cell::Num(v)
        } else {
            Cell::Null
        }
    }

    pub fn int(v: usize) -> Self {
        Cell::Int(v as i64)
    }

    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    /// Decimal places in the text rendering.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<usize>,
}

impl Column {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            precision: None,
        }
    }

    pub fn num(name: impl Into<String>, precision: usize) -> Self {
        Self {
            name: name.into(),
            precision: Some(precision),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    /// Machine name (`benchmark`, `sensitivity`, ...); also the CSV file stem.
    pub name: String,
    pub title: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl Section {
    pub fn new(name: impl Into<String>, title: impl Into<String>, columns: Vec<Column>) -> Self {
        Self {
            name: name.into(),
            title: title.into(),
            columns,
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::InvalidArgument(format!(
                "section `{}` has {} columns, row has {}",
                self.name,
                self.columns.len(),
                row.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn note(mut self, s: impl Into<String>) -> Self {
        self.notes.push(s.into());
        self
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn cell(&self, row: usize, column: &str) -> Option<&Cell> {
        self.column_index(column).and_then(|j| self.rows.get(row).map(|r| &r[j]))
    }

    /// Coefficient table of a fit.
    pub fn fit<T: Scalar>(name: &str, title: &str, fit: &FitResult<T>) -> Self {
        let mut s = Section::new(
            name,
            title,
            vec![
                Column::new("term"),
                Column::num("estimate", 4),
                Column::num("se", 4),
                Column::num("t", 2),
            ],
        );
        for (j, term) in fit.names.iter().enumerate() {
            s.rows.push(vec![
                Cell::text(term),
                Cell::num(fit.coefficients[j]),
                Cell::num(fit.se[j]),
                Cell::num(fit.coefficients[j] / fit.se[j]),
            ]);
        }
        let aliased: Vec<&str> = fit
            .names
            .iter()
            .zip(&fit.aliased)
            .filter(|(_, &a)| a)
            .map(|(n, _)| n.as_str())
            .collect();
        s.notes.push(format!(
            "n = {}, df = {}, R^2 = {:.4}, residual sd = {:.4}",
            fit.n_effective,
            fit.df,
            fit.r_squared.as_f64(),
            fit.sigma.as_f64()
        ));
        if !aliased.is_empty() {
            s.notes.push(format!("aliased (not estimable): {}", aliased.join(", ")));
        }
        s
    }

    /// Benchmark table with the documented `name,k,t_w,f_w,rho_sq,role` columns.
    pub fn benchmark<T: Scalar>(name: &str, title: &str, table: &BenchmarkTable<T>) -> Self {
        let mut s = Section::new(
            name,
            title,
            vec![
                Column::new("name"),
                Column::new("k"),
                Column::num("t_w", 2),
                Column::num("f_w", 2),
                Column::num("rho_sq", 4),
                Column::new("role"),
            ],
        );
        let mut caveat = None;
        for e in &table.entries {
            s.rows.push(vec![
                Cell::text(&e.name),
                Cell::int(e.k),
                Cell::num(e.t_w),
                Cell::num(e.f_w),
                Cell::num(e.rho_sq),
                Cell::text(e.role.as_str()),
            ]);
            if let Some(r) = &e.degenerate {
                s.notes.push(format!("{}: not benchmarked ({r})", e.name));
            }
            if caveat.is_none() {
                caveat = e.caveat.clone();
            }
        }
        if let Some(c) = caveat {
            s.notes.push(c);
        }
        s
    }
}

/// One row of a sensitivity table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityRow<T> {
    pub label: String,
    pub t_bound: T,
    pub r_bound: T,
    pub k: usize,
    pub estimate: T,
    pub se: T,
    pub interval: SensitivityInterval<T>,
}

impl Section {
    pub fn sensitivity<T: Scalar>(name: &str, title: &str, rows: &[SensitivityRow<T>]) -> Self {
        let mut s = Section::new(
            name,
            title,
            vec![
                Column::new("zone"),
                Column::num("t_bound", 2),
                Column::num("r_bound", 3),
                Column::new("k"),
                Column::num("estimate", 4),
                Column::num("se", 4),
                Column::num("lower", 3),
                Column::num("upper", 3),
                Column::new("regime"),
            ],
        );
        for r in rows {
            s.rows.push(vec![
                Cell::text(&r.label),
                Cell::num(r.t_bound),
                Cell::num(r.r_bound),
                Cell::int(r.k),
                Cell::num(r.estimate),
                Cell::num(r.se),
                Cell::num(r.interval.lower),
                Cell::num(r.interval.upper),
                Cell::text(r.interval.regime.as_str()),
            ]);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// SHA-256 of the data file and config, hex encoded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl Metadata {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            tool: "ovsens".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            input_hash: None,
            config: None,
            timestamp: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: String,
    pub metadata: Metadata,
    pub sections: Vec<Section>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "txt" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::InvalidArgument(format!(
                "unknown format `{s}` (expected text, csv or json)"
            ))),
        }
    }
}

/// A rendered output file: a name stem plus its bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rendered {
    pub name: String,
    pub bytes: Vec<u8>,
}

fn fmt_cell_text(c: &Cell, precision: Option<usize>) -> String {
    match c {
        Cell::Null => "NA".into(),
        Cell::Int(v) => v.to_string(),
        Cell::Num(v) => match precision {
            Some(p) => {
                let s = format!("{v:.p$}");
                // avoid printing a signed zero such as "-0.00"
                if s.trim_start_matches('-').chars().all(|ch| ch == '0' || ch == '.') {
                    s.trim_start_matches('-').to_string()
                } else {
                    s
                }
            }
            None => v.to_string(),
        },
        Cell::Text(s) => s.clone(),
    }
}

fn fmt_cell_csv(c: &Cell) -> String {
    match c {
        Cell::Null => String::new(),
        Cell::Int(v) => v.to_string(),
        Cell::Num(v) => format!("{v:?}"),
        Cell::Text(s) => s.clone(),
    }
}

impl Report {
    pub fn new(metadata: Metadata) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            metadata,
            sections: Vec::new(),
        }
    }

    pub fn push(&mut self, section: Section) {
        self.sections.push(section);
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Data(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Data(format!("invalid report JSON: {e}")))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} ({})", self.metadata.tool, self.metadata.version, self.metadata.command);
        if let Some(h) = &self.metadata.input_hash {
            let _ = writeln!(out, "input sha256 {h}");
        }
        for s in &self.sections {
            out.push('\n');
            let _ = writeln!(out, "{}", s.title);
            let cells: Vec<Vec<String>> = s
                .rows
                .iter()
                .map(|r| r.iter().zip(&s.columns).map(|(c, col)| fmt_cell_text(c, col.precision)).collect())
                .collect();
            let widths: Vec<usize> = s
                .columns
                .iter()
                .enumerate()
                .map(|(j, c)| cells.iter().map(|r| r[j].chars().count()).chain([c.name.len()]).max().unwrap_or(0))
                .collect();
            let left: Vec<bool> = (0..s.columns.len())
                .map(|j| s.rows.iter().all(|r| matches!(r[j], Cell::Text(_) | Cell::Null)))
                .collect();
            let line = |vals: Vec<&str>| {
                let mut l = String::new();
                for (j, v) in vals.iter().enumerate() {
                    if j > 0 {
                        l.push_str("  ");
                    }
                    let pad = " ".repeat(widths[j].saturating_sub(v.chars().count()));
                    if left[j] {
                        l.push_str(v);
                        l.push_str(&pad);
                    } else {
                        l.push_str(&pad);
                        l.push_str(v);
                    }
                }
                l.trim_end().to_string()
            };
            let _ = writeln!(out, "{}", line(s.columns.iter().map(|c| c.name.as_str()).collect()));
            for r in &cells {
                let _ = writeln!(out, "{}", line(r.iter().map(String::as_str).collect()));
            }
            for n in &s.notes {
                let _ = writeln!(out, "  note: {n}");
            }
        }
        out
    }

    /// One CSV document per section, named after the section.
    pub fn to_csv(&self) -> Result<Vec<Rendered>> {
        self.sections
            .iter()
            .map(|s| {
                let mut w = csv::Writer::from_writer(Vec::new());
                let err = |e: csv::Error| Error::Data(e.to_string());
                w.write_record(s.columns.iter().map(|c| c.name.as_str())).map_err(err)?;
                for r in &s.rows {
                    w.write_record(r.iter().map(fmt_cell_csv)).map_err(err)?;
                }
                let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
                Ok(Rendered {
                    name: format!("{}.csv", s.name),
                    bytes,
                })
            })
            .collect()
    }

    /// Renders in the requested format. Text and JSON give one document; CSV
    /// gives one per section.
    pub fn render(&self, format: Format) -> Result<Vec<Rendered>> {
        Ok(match format {
            Format::Text => vec![Rendered {
                name: "report.txt".into(),
                bytes: self.to_text().into_bytes(),
            }],
            Format::Json => vec![Rendered {
                name: "report.json".into(),
                bytes: self.to_json()?.into_bytes(),
            }],
            Format::Csv => self.to_csv()?,
        })
    }
}
