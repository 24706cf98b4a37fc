use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

/// Cell values of one column. A column is numeric when every non-missing
/// cell parses as a finite number.
#[derive(Debug, Clone, PartialEq)]
pub enum RawColumn {
    Numeric(Vec<Option<f64>>),
    Text(Vec<Option<String>>),
}

impl RawColumn {
    pub fn len(&self) -> usize {
        match self {
            RawColumn::Numeric(v) => v.len(),
            RawColumn::Text(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            RawColumn::Numeric(v) => v[row].is_none(),
            RawColumn::Text(v) => v[row].is_none(),
        }
    }

    pub fn missing_count(&self) -> usize {
        (0..self.len()).filter(|&i| self.is_missing(i)).count()
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, RawColumn::Numeric(_))
    }
}

/// A rectangular table of named, typed columns.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    names: Vec<String>,
    columns: Vec<RawColumn>,
    n_rows: usize,
}

fn is_missing_marker(s: &str) -> bool {
    s.is_empty() || s == "NA"
}

fn type_column(cells: Vec<Option<String>>) -> RawColumn {
    let parsed: Option<Vec<Option<f64>>> = cells
        .iter()
        .map(|c| match c {
            None => Some(None),
            Some(s) => s.parse::<f64>().ok().filter(|v| v.is_finite()).map(Some),
        })
        .collect();
    match parsed {
        Some(v) => RawColumn::Numeric(v),
        None => RawColumn::Text(cells),
    }
}

impl RawTable {
    /// Builds a table from already-typed columns.
    pub fn from_columns(columns: Vec<(String, RawColumn)>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, |(_, c)| c.len());
        let mut seen = HashMap::new();
        for (j, (name, col)) in columns.iter().enumerate() {
            if let Some(prev) = seen.insert(name.clone(), j) {
                return Err(Error::DuplicateName(format!(
                    "{name} (columns {} and {})",
                    prev + 1,
                    j + 1
                )));
            }
            if col.len() != n_rows {
                return Err(Error::LengthMismatch {
                    name: name.clone(),
                    expected: n_rows,
                    found: col.len(),
                });
            }
        }
        let (names, columns) = columns.into_iter().unzip();
        Ok(Self { names, columns, n_rows })
    }

    /// Parses delimited text with a header row. Cells that are empty or `NA`
    /// are recorded as missing.
    pub fn parse<R: Read>(reader: R, delimiter: u8, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .has_headers(true)
            .flexible(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let io_err = |e: csv::Error| {
            let position = e.position().map(|p| format!("line {}: ", p.line())).unwrap_or_default();
            let message = match e.kind() {
                csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                    format!("{position}row has {len} fields, header has {expected_len}")
                }
                _ => format!("{position}{e}"),
            };
            Error::Io {
                path: source.to_string(),
                message,
            }
        };
        let headers: Vec<String> = rdr.headers().map_err(io_err)?.iter().map(str::to_string).collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            return Err(Error::Io {
                path: source.to_string(),
                message: "missing header row".into(),
            });
        }
        if let Some(j) = headers.iter().position(String::is_empty) {
            return Err(Error::Io {
                path: source.to_string(),
                message: format!("header of column {} is empty", j + 1),
            });
        }
        for (j, h) in headers.iter().enumerate() {
            if let Some(prev) = headers[..j].iter().position(|p| p == h) {
                return Err(Error::Io {
                    path: source.to_string(),
                    message: format!("duplicate header `{h}` in columns {} and {}", prev + 1, j + 1),
                });
            }
        }
        let mut cells: Vec<Vec<Option<String>>> = vec![Vec::new(); headers.len()];
        for record in rdr.records() {
            let record = record.map_err(io_err)?;
            for (j, field) in record.iter().enumerate() {
                cells[j].push((!is_missing_marker(field)).then(|| field.to_string()));
            }
        }
        let columns = headers
            .into_iter()
            .zip(cells)
            .map(|(h, c)| (h, type_column(c)))
            .collect();
        Self::from_columns(columns)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Result<&RawColumn> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| &self.columns[j])
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    pub fn missing_count(&self, name: &str) -> Result<usize> {
        Ok(self.column(name)?.missing_count())
    }

    /// Adds a numeric column computed elsewhere.
    pub fn push_numeric(&mut self, name: impl Into<String>, values: Vec<Option<f64>>) -> Result<()> {
        let name = name.into();
        if self.has_column(&name) {
            return Err(Error::DuplicateName(name));
        }
        if values.len() != self.n_rows {
            return Err(Error::LengthMismatch {
                name,
                expected: self.n_rows,
                found: values.len(),
            });
        }
        self.names.push(name);
        self.columns.push(RawColumn::Numeric(values));
        Ok(())
    }
}

/// Delimiter implied by a file name: tab for `.tsv`/`.tab`, comma otherwise.
pub fn delimiter_for(path: &Path) -> u8 {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("tsv") || e.eq_ignore_ascii_case("tab") => b'\t',
        _ => b',',
    }
}

/// Reads a delimited text file; see [`RawTable::parse`].
pub fn load_table(path: impl AsRef<Path>) -> Result<RawTable> {
    load_table_with(path.as_ref(), None)
}

pub fn load_table_with(path: &Path, delimiter: Option<u8>) -> Result<RawTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let delim = delimiter.unwrap_or_else(|| delimiter_for(path));
    let table = RawTable::parse(std::io::BufReader::new(file), delim, &path.display().to_string())?;
    log::info!(
        "loaded {} rows x {} columns from {}",
        table.n_rows(),
        table.names().len(),
        path.display()
    );
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<RawTable> {
        RawTable::parse(s.as_bytes(), b',', "inline")
    }

    #[test]
    fn numeric_and_text_columns() {
        let t = parse("a,b\n1,x\n2.5,y\n-3,\n").unwrap();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(
            t.column("a").unwrap(),
            &RawColumn::Numeric(vec![Some(1.0), Some(2.5), Some(-3.0)])
        );
        assert!(!t.column("b").unwrap().is_numeric());
        assert_eq!(t.missing_count("b").unwrap(), 1);
    }

    #[test]
    fn na_marker_is_missing() {
        let t = parse("a\n1\nNA\n3\n").unwrap();
        assert!(t.column("a").unwrap().is_numeric());
        assert_eq!(t.missing_count("a").unwrap(), 1);
    }

    #[test]
    fn ragged_rows_report_the_line() {
        let e = parse("a,b\n1,2\n3\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn duplicate_headers_are_rejected() {
        let e = parse("a,b,a\n1,2,3\n").unwrap_err();
        assert!(e.to_string().contains("duplicate header `a`"), "{e}");
    }

    #[test]
    fn tab_delimited() {
        let t = RawTable::parse("a\tb\n1\t2\n".as_bytes(), b'\t', "inline").unwrap();
        assert_eq!(t.names(), ["a", "b"]);
    }

    #[test]
    fn delimiter_from_extension() {
        assert_eq!(delimiter_for(Path::new("x.TSV")), b'\t');
        assert_eq!(delimiter_for(Path::new("x.csv")), b',');
    }
}
