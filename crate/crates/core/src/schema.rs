//! Tabular datasets with one word-set column, their schema manifests, and
//! CSV ingestion/emission.
//!
//! A schema manifest is a small key/value text file:
//!
//! ```text
//! # comments start with '#'
//! delimiter = ,
//! column = skills : wordset
//! column = client_location : categorical
//! column = fixed_price : continuous
//! ```
//!
//! Columns appear in file order. `delimiter` is the single character that
//! separates tokens inside a word-set cell.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Categorical,
    WordSet,
}

impl ColumnKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnKind::Continuous => "continuous",
            ColumnKind::Categorical => "categorical",
            ColumnKind::WordSet => "wordset",
        }
    }
}

impl std::str::FromStr for ColumnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "continuous" => Ok(ColumnKind::Continuous),
            "categorical" => Ok(ColumnKind::Categorical),
            "wordset" | "word_set" | "word-set" => Ok(ColumnKind::WordSet),
            other => Err(Error::Schema(format!("unknown column kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Column {
            name: name.into(),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    columns: Vec<Column>,
    delimiter: char,
}

impl Schema {
    /// Validates uniqueness of names and the single word-set column rule.
    pub fn new(columns: Vec<Column>, delimiter: char) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Schema("schema has no columns".into()));
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if c.name.trim().is_empty() {
                return Err(Error::Schema("empty column name".into()));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", c.name)));
            }
        }
        let wordsets = columns.iter().filter(|c| c.kind == ColumnKind::WordSet).count();
        if wordsets != 1 {
            return Err(Error::Schema(format!(
                "exactly one word-set column is required, found {wordsets}"
            )));
        }
        if delimiter == '"' || delimiter.is_whitespace() {
            return Err(Error::Schema(format!("invalid word-set delimiter {delimiter:?}")));
        }
        Ok(Schema { columns, delimiter })
    }

    pub fn parse_manifest(text: &str) -> Result<Self> {
        let mut delimiter = None;
        let mut columns = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Schema(format!("line {}: expected `key = value`", lineno + 1)))?;
            match key.trim() {
                "delimiter" => {
                    let v = value.trim();
                    let mut chars = v.chars();
                    match (chars.next(), chars.next()) {
                        (Some(c), None) => delimiter = Some(c),
                        _ => {
                            return Err(Error::Schema(format!(
                                "line {}: delimiter must be a single character, got `{v}`",
                                lineno + 1
                            )))
                        }
                    }
                }
                "column" => {
                    let (name, kind) = value.rsplit_once(':').ok_or_else(|| {
                        Error::Schema(format!("line {}: expected `column = name : kind`", lineno + 1))
                    })?;
                    columns.push(Column::new(name.trim(), kind.parse()?));
                }
                other => {
                    return Err(Error::Schema(format!(
                        "line {}: unknown key `{other}`",
                        lineno + 1
                    )))
                }
            }
        }
        Schema::new(columns, delimiter.unwrap_or(','))
    }

    pub fn load_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Schema::parse_manifest(&text)
    }

    pub fn to_manifest(&self) -> String {
        let mut out = format!("delimiter = {}\n", self.delimiter);
        for c in &self.columns {
            out.push_str(&format!("column = {} : {}\n", c.name, c.kind.as_str()));
        }
        out
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn delimiter(&self) -> char {
        self.delimiter
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn wordset_index(&self) -> usize {
        self.columns
            .iter()
            .position(|c| c.kind == ColumnKind::WordSet)
            .expect("schema invariant: one word-set column")
    }

    pub fn wordset_column(&self) -> &Column {
        &self.columns[self.wordset_index()]
    }

    /// Number of columns that are not the word set (`p`).
    pub fn passthrough_count(&self) -> usize {
        self.columns.len() - 1
    }
}

/// The tokens of one word-set cell.
///
/// Keeps first-occurrence order (used by the tagged corpus) but compares as
/// a set.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct WordSet(Vec<String>);

impl WordSet {
    pub fn new() -> Self {
        WordSet(Vec::new())
    }

    /// Trims every token, drops empty tokens and later duplicates.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out = WordSet::new();
        for t in tokens {
            out.insert(t.as_ref());
        }
        out
    }

    pub fn parse(cell: &str, delimiter: char) -> Self {
        WordSet::from_tokens(cell.split(delimiter))
    }

    /// Returns `false` when the (trimmed) token was empty or already present.
    pub fn insert(&mut self, token: &str) -> bool {
        let token = token.trim();
        if token.is_empty() || self.contains(token) {
            return false;
        }
        self.0.push(token.to_string());
        true
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.iter().any(|t| t == token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn sorted(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.iter().collect();
        v.sort_unstable();
        v
    }

    /// Order-insensitive identity: sorted tokens joined by `delimiter`.
    pub fn signature(&self, delimiter: char) -> String {
        self.sorted().join(&delimiter.to_string())
    }

    pub fn join(&self, delimiter: char) -> String {
        self.0.join(&delimiter.to_string())
    }
}

impl PartialEq for WordSet {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.iter().all(|t| other.contains(t))
    }
}

impl Eq for WordSet {}

impl<S: AsRef<str>> FromIterator<S> for WordSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        WordSet::from_tokens(iter)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Number(f64),
    Token(String),
    Words(WordSet),
}

impl Value {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_token(&self) -> Option<&str> {
        match self {
            Value::Token(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_words(&self) -> Option<&WordSet> {
        match self {
            Value::Words(w) => Some(w),
            _ => None,
        }
    }

    fn matches(&self, kind: ColumnKind) -> bool {
        matches!(
            (self, kind),
            (Value::Number(_), ColumnKind::Continuous)
                | (Value::Token(_), ColumnKind::Categorical)
                | (Value::Words(_), ColumnKind::WordSet)
        )
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(x) => write!(f, "{x}"),
            Value::Token(t) => f.write_str(t),
            Value::Words(w) => f.write_str(&w.join(',')),
        }
    }
}

pub type Row = Vec<Value>;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    rows: Vec<Row>,
}

impl Dataset {
    pub fn new(schema: Schema, rows: Vec<Row>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            check_row(&schema, i, row)?;
        }
        Ok(Dataset { schema, rows })
    }

    pub fn empty(schema: Schema) -> Self {
        Dataset {
            schema,
            rows: Vec::new(),
        }
    }

    /// Builds a dataset whose schema is a single word-set column.
    pub fn from_wordsets(name: &str, delimiter: char, sets: Vec<WordSet>) -> Result<Self> {
        let schema = Schema::new(vec![Column::new(name, ColumnKind::WordSet)], delimiter)?;
        Dataset::new(schema, sets.into_iter().map(|w| vec![Value::Words(w)]).collect())
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: Row) -> Result<()> {
        check_row(&self.schema, self.rows.len(), &row)?;
        self.rows.push(row);
        Ok(())
    }

    /// The word-set cells in row order.
    pub fn wordsets(&self) -> impl Iterator<Item = &WordSet> + '_ {
        let idx = self.schema.wordset_index();
        self.rows
            .iter()
            .map(move |r| r[idx].as_words().expect("validated row"))
    }

    /// Word-set cells of a named column, failing if the column is not a word set.
    pub fn wordsets_of(&self, column: &str) -> Result<impl Iterator<Item = &WordSet> + '_> {
        let idx = self
            .schema
            .index_of(column)
            .ok_or_else(|| Error::UnknownColumn(column.to_string()))?;
        if self.schema.columns()[idx].kind != ColumnKind::WordSet {
            return Err(Error::NotWordSet(column.to_string()));
        }
        Ok(self
            .rows
            .iter()
            .map(move |r| r[idx].as_words().expect("validated row")))
    }

    /// Rows `i % len` for `i in 0..n`.
    pub fn upsample(&self, n: usize) -> Dataset {
        let rows = if self.rows.is_empty() {
            Vec::new()
        } else {
            (0..n).map(|i| self.rows[i % self.rows.len()].clone()).collect()
        };
        Dataset {
            schema: self.schema.clone(),
            rows,
        }
    }

    pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Dataset::read_csv(file, schema).map_err(|e| match e {
            Error::Csv { source, .. } => Error::csv(path, source),
            other => other,
        })
    }

    pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::csv("<input>", e))?.clone();
        let mut positions = Vec::with_capacity(schema.len());
        for col in schema.columns() {
            let pos = headers
                .iter()
                .position(|h| h.trim() == col.name)
                .ok_or_else(|| Error::Schema(format!("missing column `{}` in CSV header", col.name)))?;
            positions.push(pos);
        }
        let mut rows = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::csv("<input>", e))?;
            let mut row = Vec::with_capacity(schema.len());
            for (col, &pos) in schema.columns().iter().zip(&positions) {
                let cell = record.get(pos).unwrap_or("");
                row.push(parse_cell(cell, col, schema.delimiter(), i)?);
            }
            rows.push(row);
        }
        Ok(Dataset {
            schema: schema.clone(),
            rows,
        })
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file).map_err(|e| match e {
            Error::Csv { source, .. } => Error::csv(path, source),
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(self.schema.columns().iter().map(|c| c.name.as_str()))
            .map_err(|e| Error::csv("<output>", e))?;
        let delim = self.schema.delimiter();
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|v| match v {
                    Value::Number(x) => format!("{x}"),
                    Value::Token(t) => t.clone(),
                    Value::Words(w) => w.join(delim),
                })
                .collect();
            wtr.write_record(&cells).map_err(|e| Error::csv("<output>", e))?;
        }
        wtr.flush().map_err(|e| Error::io("<output>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv writer emits utf-8"))
    }
}

fn parse_cell(cell: &str, col: &Column, delimiter: char, row: usize) -> Result<Value> {
    match col.kind {
        ColumnKind::Continuous => {
            let x: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row,
                column: col.name.clone(),
                message: format!("`{cell}` is not a number"),
            })?;
            if !x.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: col.name.clone(),
                    message: format!("`{cell}` is not finite"),
                });
            }
            Ok(Value::Number(x))
        }
        ColumnKind::Categorical => Ok(Value::Token(cell.trim().to_string())),
        ColumnKind::WordSet => Ok(Value::Words(WordSet::parse(cell, delimiter))),
    }
}

fn check_row(schema: &Schema, i: usize, row: &Row) -> Result<()> {
    if row.len() != schema.len() {
        return Err(Error::Schema(format!(
            "row {i} has {} values, schema has {} columns",
            row.len(),
            schema.len()
        )));
    }
    for (v, col) in row.iter().zip(schema.columns()) {
        if !v.matches(col.kind) {
            return Err(Error::Schema(format!(
                "row {i}: value for `{}` does not match kind {}",
                col.name,
                col.kind.as_str()
            )));
        }
        if let Value::Number(x) = v {
            if !x.is_finite() {
                return Err(Error::Parse {
                    row: i,
                    column: col.name.clone(),
                    message: "non-finite value".into(),
                });
            }
        }
        if let Value::Words(w) = v {
            if w.iter().any(|t| t.contains(schema.delimiter()) || t.trim() != t) {
                return Err(Error::Schema(format!(
                    "row {i}: word-set token contains the delimiter or padding"
                )));
            }
        }
    }
    Ok(())
}
