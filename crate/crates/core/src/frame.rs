//! Typed columnar tables with per-column kinds and missing-cell markers.
//!
//! A [`TabularFrame`] is immutable once built. Numerical columns hold finite
//! reals, categorical columns hold strings, and `None` marks a missing cell in
//! either. Frames loaded from CSV keep the original text of numerical cells so
//! that export reproduces them byte for byte.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Categorical,
    Numerical,
}

impl std::fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ColumnKind::Categorical => f.write_str("categorical"),
            ColumnKind::Numerical => f.write_str("numerical"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ColumnData {
    Numerical(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numerical(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            ColumnData::Numerical(_) => ColumnKind::Numerical,
            ColumnData::Categorical(_) => ColumnKind::Categorical,
        }
    }

    fn take(&self, rows: &[usize]) -> ColumnData {
        match self {
            ColumnData::Numerical(v) => ColumnData::Numerical(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Categorical(v) => {
                ColumnData::Categorical(rows.iter().map(|&r| v[r].clone()).collect())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    name: String,
    data: ColumnData,
    // Source text of numerical cells, present only for columns read from text.
    text: Option<Vec<Option<String>>>,
}

impl Column {
    pub fn numerical(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        Column {
            name: name.into(),
            data: ColumnData::Numerical(values),
            text: None,
        }
    }

    pub fn categorical(name: impl Into<String>, values: Vec<Option<String>>) -> Self {
        Column {
            name: name.into(),
            data: ColumnData::Categorical(values),
            text: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ColumnKind {
        self.data.kind()
    }

    pub fn data(&self) -> &ColumnData {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_numerical(&self) -> Option<&[Option<f64>]> {
        match &self.data {
            ColumnData::Numerical(v) => Some(v),
            ColumnData::Categorical(_) => None,
        }
    }

    pub fn as_categorical(&self) -> Option<&[Option<String>]> {
        match &self.data {
            ColumnData::Categorical(v) => Some(v),
            ColumnData::Numerical(_) => None,
        }
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match &self.data {
            ColumnData::Numerical(v) => v[row].is_none(),
            ColumnData::Categorical(v) => v[row].is_none(),
        }
    }

    pub fn missing_count(&self) -> usize {
        (0..self.len()).filter(|&r| self.is_missing(r)).count()
    }

    /// Text of a cell as it is written on export; `None` for missing cells.
    pub fn cell_text(&self, row: usize) -> Option<Cow<'_, str>> {
        match &self.data {
            ColumnData::Categorical(v) => v[row].as_deref().map(Cow::Borrowed),
            ColumnData::Numerical(v) => {
                let value = v[row]?;
                match self.text.as_ref().and_then(|t| t[row].as_deref()) {
                    Some(s) => Some(Cow::Borrowed(s)),
                    None => Some(Cow::Owned(format_number(value))),
                }
            }
        }
    }

    pub(crate) fn take(&self, rows: &[usize]) -> Column {
        Column {
            name: self.name.clone(),
            data: self.data.take(rows),
            text: self
                .text
                .as_ref()
                .map(|t| rows.iter().map(|&r| t[r].clone()).collect()),
        }
    }

    fn append(&mut self, other: &Column) {
        match (&mut self.data, &other.data) {
            (ColumnData::Numerical(a), ColumnData::Numerical(b)) => {
                match (&mut self.text, &other.text) {
                    (Some(ta), Some(tb)) => ta.extend(tb.iter().cloned()),
                    (Some(ta), None) => ta.extend(b.iter().map(|v| v.map(format_number))),
                    (None, _) => {}
                }
                a.extend_from_slice(b);
            }
            (ColumnData::Categorical(a), ColumnData::Categorical(b)) => {
                a.extend(b.iter().cloned());
            }
            _ => unreachable!("kinds checked by caller"),
        }
    }
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn format_number(value: f64) -> String {
    format!("{value}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct TabularFrame {
    columns: Vec<Column>,
    row_count: usize,
}

impl TabularFrame {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::DuplicateColumn(c.name.clone()));
            }
        }
        let row_count = columns.first().map_or(0, Column::len);
        for c in &columns {
            if c.len() != row_count {
                return Err(Error::SchemaMismatch {
                    column: c.name.clone(),
                    reason: format!("length {} differs from row count {row_count}", c.len()),
                });
            }
            if let ColumnData::Numerical(v) = &c.data {
                if let Some(row) = v.iter().position(|x| x.is_some_and(|x| !x.is_finite())) {
                    return Err(Error::Parse {
                        row,
                        column: c.name.clone(),
                        value: format!("{}", v[row].unwrap_or_default()),
                    });
                }
            }
        }
        Ok(TabularFrame { columns, row_count })
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn column_count(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_count == 0
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn into_columns(self) -> Vec<Column> {
        self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&Column> {
        self.column(name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    /// Column names and kinds, in column order.
    pub fn schema(&self) -> Vec<(String, ColumnKind)> {
        self.columns
            .iter()
            .map(|c| (c.name.clone(), c.kind()))
            .collect()
    }

    /// New frame holding the given rows in the given order. Indices may repeat.
    pub fn take_rows(&self, rows: &[usize]) -> TabularFrame {
        TabularFrame {
            columns: self.columns.iter().map(|c| c.take(rows)).collect(),
            row_count: rows.len(),
        }
    }

    pub fn drop_columns<S: AsRef<str>>(&self, names: &[S]) -> TabularFrame {
        let drop: HashSet<&str> = names.iter().map(|s| s.as_ref()).collect();
        TabularFrame {
            columns: self
                .columns
                .iter()
                .filter(|c| !drop.contains(c.name.as_str()))
                .cloned()
                .collect(),
            row_count: self.row_count,
        }
    }

    /// Frame with the named columns in the given order.
    pub fn select<S: AsRef<str>>(&self, names: &[S]) -> Result<TabularFrame> {
        let columns = names
            .iter()
            .map(|n| self.require(n.as_ref()).cloned())
            .collect::<Result<Vec<_>>>()?;
        let mut frame = TabularFrame::new(columns)?;
        frame.row_count = self.row_count;
        Ok(frame)
    }

    /// Replaces the column of the same name, keeping its position.
    pub fn replace_column(&self, column: Column) -> Result<TabularFrame> {
        let idx = self
            .columns
            .iter()
            .position(|c| c.name == column.name)
            .ok_or_else(|| Error::UnknownColumn(column.name.clone()))?;
        let mut columns = self.columns.clone();
        columns[idx] = column;
        TabularFrame::new(columns)
    }

    pub fn push_column(&self, column: Column) -> Result<TabularFrame> {
        let mut columns = self.columns.clone();
        columns.push(column);
        TabularFrame::new(columns)
    }

    pub fn check_same_schema(&self, other: &TabularFrame) -> Result<()> {
        if self.columns.len() != other.columns.len() {
            let missing = self
                .column_names()
                .find(|n| other.column(n).is_none())
                .or_else(|| other.column_names().find(|n| self.column(n).is_none()))
                .unwrap_or("<unknown>");
            return Err(Error::SchemaMismatch {
                column: missing.to_string(),
                reason: "column present on one side only".into(),
            });
        }
        for (a, b) in self.columns.iter().zip(&other.columns) {
            if a.name != b.name {
                return Err(Error::SchemaMismatch {
                    column: a.name.clone(),
                    reason: format!("expected `{}` at this position, found `{}`", a.name, b.name),
                });
            }
            if a.kind() != b.kind() {
                return Err(Error::SchemaMismatch {
                    column: a.name.clone(),
                    reason: format!("kind {} vs {}", a.kind(), b.kind()),
                });
            }
        }
        Ok(())
    }

    /// Rows of `self` followed by rows of `other`. Schemas must match exactly.
    pub fn concat(&self, other: &TabularFrame) -> Result<TabularFrame> {
        self.check_same_schema(other)?;
        let mut columns = self.columns.clone();
        for (a, b) in columns.iter_mut().zip(&other.columns) {
            a.append(b);
        }
        Ok(TabularFrame {
            columns,
            row_count: self.row_count + other.row_count,
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W, delimiter: u8) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_writer(writer);
        w.write_record(self.column_names())?;
        let mut record: Vec<Cow<'_, str>> = Vec::with_capacity(self.columns.len());
        for row in 0..self.row_count {
            record.clear();
            record.extend(
                self.columns
                    .iter()
                    .map(|c| c.cell_text(row).unwrap_or(Cow::Borrowed(""))),
            );
            w.write_record(record.iter().map(|s| s.as_bytes()))?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file), b',')
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsvOptions {
    pub delimiter: u8,
    /// Cells equal to any of these (after trimming) are missing.
    pub missing_tokens: Vec<String>,
    /// Numeric columns with at most this many distinct values are read as
    /// categorical. Zero disables the rule.
    pub categorical_cutoff: usize,
    pub kind_overrides: BTreeMap<String, ColumnKind>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            delimiter: b',',
            missing_tokens: vec![String::new(), "NA".into(), "null".into()],
            categorical_cutoff: 0,
            kind_overrides: BTreeMap::new(),
        }
    }
}

impl CsvOptions {
    fn is_missing(&self, cell: &str) -> bool {
        let cell = cell.trim();
        cell.is_empty() || self.missing_tokens.iter().any(|t| t == cell)
    }
}

pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<TabularFrame> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(file), options)
}

pub fn read_csv<R: Read>(reader: R, options: &CsvOptions) -> Result<TabularFrame> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if headers.is_empty() {
        return Err(Error::EmptyHeader { column: 0 });
    }
    if let Some(column) = headers.iter().position(|h| h.trim().is_empty()) {
        return Err(Error::EmptyHeader { column });
    }
    let mut cells: Vec<Vec<Option<String>>> = vec![Vec::new(); headers.len()];
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::RaggedRow {
                row: idx,
                expected: headers.len(),
                found: record.len(),
            });
        }
        for (col, cell) in record.iter().enumerate() {
            cells[col].push((!options.is_missing(cell)).then(|| cell.to_string()));
        }
    }
    let columns = headers
        .into_iter()
        .zip(cells)
        .map(|(name, raw)| build_column(name, raw, options))
        .collect::<Result<Vec<_>>>()?;
    TabularFrame::new(columns)
}

fn parse_finite(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Kind inference rule: numeric-parseable columns are numerical unless the
/// cardinality cutoff or an explicit override says otherwise.
pub fn infer_kind(
    name: &str,
    cells: &[Option<String>],
    options: &CsvOptions,
) -> Result<ColumnKind> {
    if let Some(kind) = options.kind_overrides.get(name) {
        return Ok(*kind);
    }
    let present: Vec<&str> = cells.iter().flatten().map(String::as_str).collect();
    if present.is_empty() {
        return Err(Error::Undeterminable(name.to_string()));
    }
    let parsed: Option<Vec<f64>> = present.iter().map(|c| parse_finite(c)).collect();
    let Some(values) = parsed else {
        return Ok(ColumnKind::Categorical);
    };
    if options.categorical_cutoff > 0 {
        let unique: HashSet<u64> = values.iter().map(|v| canonical_bits(*v)).collect();
        if unique.len() <= options.categorical_cutoff {
            return Ok(ColumnKind::Categorical);
        }
    }
    Ok(ColumnKind::Numerical)
}

fn build_column(name: String, raw: Vec<Option<String>>, options: &CsvOptions) -> Result<Column> {
    match infer_kind(&name, &raw, options)? {
        ColumnKind::Categorical => Ok(Column::categorical(name, raw)),
        ColumnKind::Numerical => {
            let mut values = Vec::with_capacity(raw.len());
            for (row, cell) in raw.iter().enumerate() {
                match cell {
                    None => values.push(None),
                    Some(s) => match parse_finite(s) {
                        Some(v) => values.push(Some(v)),
                        None => {
                            return Err(Error::Parse {
                                row,
                                column: name,
                                value: s.clone(),
                            })
                        }
                    },
                }
            }
            Ok(Column {
                name,
                data: ColumnData::Numerical(values),
                text: Some(raw),
            })
        }
    }
}

pub(crate) fn canonical_bits(v: f64) -> u64 {
    if v == 0.0 {
        0.0f64.to_bits()
    } else {
        v.to_bits()
    }
}
