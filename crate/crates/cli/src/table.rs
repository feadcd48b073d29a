//! Result tables and their CSV form.
//!
//! A file starts with `# key: value` metadata lines, followed by an RFC 4180
//! header and rows. Floats are written with 17 significant digits so that
//! reading a file back reproduces every value bit for bit; NaN is written as
//! `nan` and counted in the `nan` metadata entry.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Float(f64),
    Int(i64),
    Bool(bool),
    Text(String),
}

impl Value {
    fn kind(&self) -> &'static str {
        match self {
            Value::Float(_) => "f64",
            Value::Int(_) => "i64",
            Value::Bool(_) => "bool",
            Value::Text(_) => "str",
        }
    }

    fn render(&self) -> String {
        match self {
            Value::Float(x) => format_float(*x),
            Value::Int(i) => i.to_string(),
            Value::Bool(b) => b.to_string(),
            Value::Text(s) => s.clone(),
        }
    }

    fn parse(kind: &str, field: &str) -> Result<Self> {
        Ok(match kind {
            "f64" => Value::Float(
                field
                    .parse()
                    .with_context(|| format!("bad float `{field}`"))?,
            ),
            "i64" => Value::Int(
                field
                    .parse()
                    .with_context(|| format!("bad integer `{field}`"))?,
            ),
            "bool" => Value::Bool(
                field
                    .parse()
                    .with_context(|| format!("bad bool `{field}`"))?,
            ),
            "str" => Value::Text(field.to_string()),
            other => bail!("unknown column type `{other}`"),
        })
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Float(x) => Some(*x),
            Value::Int(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Float(x)
    }
}

impl From<usize> for Value {
    fn from(i: usize) -> Self {
        Value::Int(i as i64)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}

/// 17 significant digits in scientific notation; `nan`, `inf`, `-inf`.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    /// Ordered `key: value` entries written above the header.
    pub metadata: Vec<(String, String)>,
}

impl ResultTable {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Self::default()
        }
    }

    pub fn push(&mut self, row: Vec<Value>) -> Result<()> {
        ensure!(
            row.len() == self.columns.len(),
            "row has {} cells, table has {} columns",
            row.len(),
            self.columns.len()
        );
        if let Some(first) = self.rows.first() {
            for (k, (a, b)) in first.iter().zip(&row).enumerate() {
                ensure!(
                    a.kind() == b.kind(),
                    "column `{}` holds {} values, got {}",
                    self.columns[k],
                    a.kind(),
                    b.kind()
                );
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn meta(&mut self, key: &str, value: impl Into<String>) {
        self.metadata.push((key.to_string(), value.into()));
    }

    /// First metadata value stored under `key`.
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Cells of column `name`, in row order.
    pub fn values(&self, name: &str) -> Result<Vec<&Value>> {
        let k = self
            .column(name)
            .with_context(|| format!("no column `{name}`"))?;
        Ok(self.rows.iter().map(|r| &r[k]).collect())
    }

    pub fn floats(&self, name: &str) -> Result<Vec<f64>> {
        self.values(name)?
            .into_iter()
            .map(|v| {
                v.as_f64()
                    .with_context(|| format!("column `{name}` is not numeric"))
            })
            .collect()
    }

    fn nan_cells(&self) -> usize {
        self.rows
            .iter()
            .flatten()
            .filter(|v| matches!(v, Value::Float(x) if x.is_nan()))
            .count()
    }

    /// The file contents. Column types and the NaN count are added to the
    /// metadata block.
    pub fn to_csv(&self) -> Result<String> {
        let mut out = String::new();
        for (key, value) in &self.metadata {
            ensure!(
                !key.contains(':') && !key.contains('\n'),
                "bad metadata key `{key}`"
            );
            ensure!(
                !value.contains('\n'),
                "metadata value for `{key}` spans lines"
            );
            writeln!(out, "# {key}: {value}")?;
        }
        let types = match self.rows.first() {
            Some(row) => row.iter().map(Value::kind).collect::<Vec<_>>().join(","),
            None => String::new(),
        };
        writeln!(out, "# types: {types}")?;
        let nan = self.nan_cells();
        writeln!(
            out,
            "# nan: {}",
            if nan == 0 {
                "none".to_string()
            } else {
                format!("{nan} cells")
            }
        )?;

        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        writer.write_record(&self.columns)?;
        for row in &self.rows {
            writer.write_record(row.iter().map(Value::render))?;
        }
        out.push_str(std::str::from_utf8(&writer.into_inner()?)?);
        Ok(out)
    }

    /// Parses a file produced by [`ResultTable::to_csv`]. The generated
    /// `types` and `nan` entries are not kept in the metadata.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut metadata = Vec::new();
        let mut types: Vec<String> = Vec::new();
        let mut body_start = 0;
        for line in text.split_inclusive('\n') {
            let Some(rest) = line.strip_prefix("# ") else {
                break;
            };
            body_start += line.len();
            let rest = rest.trim_end_matches('\n');
            let (key, value) = rest
                .split_once(": ")
                .or_else(|| rest.strip_suffix(':').map(|k| (k, "")))
                .with_context(|| format!("bad metadata line `{rest}`"))?;
            match key {
                "types" => {
                    types = if value.is_empty() {
                        Vec::new()
                    } else {
                        value.split(',').map(str::to_string).collect()
                    }
                }
                "nan" => {}
                _ => metadata.push((key.to_string(), value.to_string())),
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(&text.as_bytes()[body_start..]);
        let columns: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let mut table = ResultTable {
            columns,
            rows: Vec::new(),
            metadata,
        };
        for (n, record) in reader.records().enumerate() {
            let record = record?;
            ensure!(
                types.len() == record.len(),
                "row {n}: {} cells for {} types",
                record.len(),
                types.len()
            );
            let row = record
                .iter()
                .zip(&types)
                .map(|(field, kind)| Value::parse(kind, field))
                .collect::<Result<Vec<_>>>()
                .with_context(|| format!("row {n}"))?;
            table.push(row)?;
        }
        Ok(table)
    }
}

/// Writes `contents` to a temporary file next to `path` and renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())
        .with_context(|| format!("writing {}", path.display()))?;
    tmp.persist(path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn write_table(table: &ResultTable, path: &Path) -> Result<()> {
    write_atomic(path, &table.to_csv()?)
}

pub fn read_table(path: &Path) -> Result<ResultTable> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ResultTable::from_csv(&text).with_context(|| format!("parsing {}", path.display()))
}
