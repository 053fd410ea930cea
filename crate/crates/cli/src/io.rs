use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

/// One row of a p-value file.
#[derive(Debug, Clone, PartialEq)]
pub struct PValueRecord {
    pub id: String,
    pub p: f64,
    pub t: Option<f64>,
}

/// Reads a comma-separated file with header `id,p` and an optional `t`
/// column (any order, extra columns ignored).
pub fn read_pvalues(path: &Path) -> Result<Vec<PValueRecord>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    parse_pvalues(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn parse_pvalues(text: &str) -> Result<Vec<PValueRecord>, String> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| format!("line 1: {e}"))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let id_col = col("id").ok_or("line 1: header must contain an 'id' column")?;
    let p_col = col("p").ok_or("line 1: header must contain a 'p' column")?;
    let t_col = col("t");

    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            format!("line {line}: {e}")
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).ok_or_else(|| format!("line {line}: missing column {}", i + 1));
        let number = |i: usize, name: &str| -> Result<f64, String> {
            let raw = field(i)?;
            raw.parse::<f64>()
                .map_err(|_| format!("line {line}: {name} value '{raw}' is not a number"))
        };
        let p = number(p_col, "p")?;
        if !(0.0..=1.0).contains(&p) {
            return Err(format!("line {line}: p value {p} is not in [0, 1]"));
        }
        let t = t_col.map(|c| number(c, "t")).transpose()?;
        out.push(PValueRecord {
            id: field(id_col)?.to_string(),
            p,
            t,
        });
    }
    if out.is_empty() {
        return Err("no data rows".into());
    }
    Ok(out)
}

/// Reads a numeric matrix with a header row: one row per subject, one
/// column per hypothesis. Returns the column names and the row-major values.
pub fn read_matrix(path: &Path) -> Result<(Vec<String>, usize, Vec<f64>), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let fail = |msg: String| CliError::Input(format!("{}: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| fail(format!("line 1: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| fail(format!("line {}: {e}", e.position().map_or(0, |p| p.line()))))?;
        let line = record.position().map_or(0, |p| p.line());
        for raw in record.iter() {
            values.push(
                raw.parse::<f64>()
                    .map_err(|_| fail(format!("line {line}: '{raw}' is not a number")))?,
            );
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(fail("no data rows".into()));
    }
    Ok((names, rows, values))
}

pub fn write_pvalues(path: &Path, records: &[PValueRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| CliError::Input(format!("{}: {e}", path.display()));
    w.write_record(["id", "p", "t"]).map_err(io)?;
    for r in records {
        let t = r.t.map(|t| t.to_string()).unwrap_or_default();
        w.write_record([r.id.as_str(), &r.p.to_string(), &t]).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Input(e.to_string()))
}

/// Output target: a file, or stdout when no path is given.
pub struct Output(Option<PathBuf>);

impl Output {
    pub fn new(path: Option<PathBuf>) -> Self {
        Self(path)
    }

    pub fn write_bytes(&self, bytes: &[u8]) -> Result<(), CliError> {
        match &self.0 {
            Some(path) => fs::write(path, bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display()))),
            None => std::io::stdout()
                .write_all(bytes)
                .map_err(|e| CliError::Input(format!("stdout: {e}"))),
        }
    }

    pub fn write_json<T: Serialize>(&self, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Compute(e.to_string()))?;
        bytes.push(b'\n');
        self.write_bytes(&bytes)
    }

    pub fn write_csv<T: Serialize>(&self, rows: &[T]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in rows {
            w.serialize(row).map_err(|e| CliError::Compute(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Compute(e.to_string()))?;
        self.write_bytes(&bytes)
    }
}
