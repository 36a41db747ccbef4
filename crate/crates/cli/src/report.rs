//! Tables written as CSV plus an aligned text rendering, with a provenance
//! comment on the first line of every file.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{CliError, Result};

/// Config hash and seed stamped into every output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: String,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>, seed: impl ToString) -> Self {
        Self {
            config_hash: config_hash.into(),
            seed: seed.to_string(),
        }
    }

    /// Comment body, without the leading `#`.
    pub fn line(&self) -> String {
        format!("strad config_hash={} seed={}", self.config_hash, self.seed)
    }

    pub fn parse_line(line: &str) -> Option<Self> {
        let rest = line.strip_prefix('#')?.trim().strip_prefix("strad ")?;
        let mut hash = None;
        let mut seed = None;
        for field in rest.split_whitespace() {
            if let Some(v) = field.strip_prefix("config_hash=") {
                hash = Some(v.to_string());
            } else if let Some(v) = field.strip_prefix("seed=") {
                seed = Some(v.to_string());
            }
        }
        Some(Self {
            config_hash: hash?,
            seed: seed?,
        })
    }

    /// Provenance from the first line of an existing output file, if any.
    pub fn read_from(path: &Path) -> Result<Option<Self>> {
        let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut first = String::new();
        BufReader::new(file)
            .read_line(&mut first)
            .map_err(|e| CliError::io(path, e))?;
        Ok(Self::parse_line(first.trim_end()))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self, prov: &Provenance) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(&self.header)?;
        for row in &self.rows {
            wtr.write_record(row)?;
        }
        let body = wtr
            .into_inner()
            .map_err(|e| CliError::Usage(format!("csv buffer: {e}")))?;
        Ok(format!(
            "# {}\n{}",
            prov.line(),
            String::from_utf8_lossy(&body)
        ))
    }

    /// Left-aligned columns separated by two spaces; decimal floats are
    /// shortened, exponent forms are kept.
    pub fn render(&self) -> String {
        let cells: Vec<Vec<String>> = std::iter::once(self.header.clone())
            .chain(
                self.rows
                    .iter()
                    .map(|r| r.iter().map(|c| shorten(c)).collect()),
            )
            .collect();
        let widths: Vec<usize> = (0..self.header.len())
            .map(|i| cells.iter().map(|r| r[i].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &cells {
            let mut line = String::new();
            for (i, c) in row.iter().enumerate() {
                let _ = write!(line, "{:<w$}  ", c, w = widths[i]);
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}

fn shorten(cell: &str) -> String {
    match cell.parse::<f64>() {
        Ok(v) if cell.contains('.') && !cell.contains('e') => format!("{v:.4}"),
        _ => cell.to_string(),
    }
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Writes `<dir>/<stem>.csv` and `<dir>/<stem>.txt`.
pub fn write_table(dir: &Path, stem: &str, table: &Table, prov: &Provenance) -> Result<()> {
    write_file(&dir.join(format!("{stem}.csv")), &table.to_csv(prov)?)?;
    write_file(
        &dir.join(format!("{stem}.txt")),
        format!("# {}\n{}", prov.line(), table.render()),
    )
}

/// Median; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}
