//! Relational tables: loading, missing-value normalization, column profiling
//! and cell tokenization.
//!
//! A [`TableData`] holds raw string cells; a cell is `None` once it has been
//! recognised as missing by [`normalize_missing`]. Every row also carries a
//! stable row key so that rows keep their identity through shuffling and
//! subsampling.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A single cell. `None` marks a missing value.
pub type Cell = Option<String>;

/// Missing-value spellings recognised by default (compared trimmed and case-folded).
pub const DEFAULT_MISSING_TOKENS: &[&str] = &["", "na", "n/a", "null", "none", "-"];

/// Punctuation alphabet used by the character-class features.
const PUNCTUATION: &[char] = &['.', ',', ';', ':', '!', '?', '\'', '"', '(', ')', '-'];

#[derive(Debug, Error)]
pub enum TableError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv parse error: {0}")]
    Csv(#[from] csv::Error),
    #[error("header row is missing or has an empty column name")]
    EmptyHeader,
    #[error("row {row}: expected {expected} cells, found {found}")]
    RowLengthMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("duplicate column name `{0}` (names are compared trimmed and case-folded)")]
    DuplicateColumn(String),
    #[error("column index {index} out of range for a table with {n_cols} columns")]
    ColumnOutOfRange { index: usize, n_cols: usize },
    #[error("invalid table id `{0}`: use ASCII letters, digits or '-'")]
    InvalidTableId(String),
    #[error("invalid metadata: {0}")]
    Metadata(String),
}

pub type Result<T> = std::result::Result<T, TableError>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeclaredType {
    Numeric,
    Text,
    #[default]
    Unknown,
}

/// Column name plus optional free-text description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub description: Option<String>,
    pub declared_type: DeclaredType,
}

impl ColumnMeta {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            description: None,
            declared_type: DeclaredType::Unknown,
        }
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = Some(description.into());
        self
    }

    pub fn normalized_name(&self) -> String {
        normalize_name(&self.name)
    }
}

/// Trimmed, case-folded column name.
pub fn normalize_name(name: &str) -> String {
    name.trim().to_lowercase()
}

/// In-memory relational table.
#[derive(Clone, Debug, PartialEq)]
pub struct TableData {
    table_id: String,
    columns: Vec<ColumnMeta>,
    rows: Vec<Vec<Cell>>,
    row_keys: Vec<String>,
}

impl TableData {
    /// Builds a table, keying rows by their position.
    pub fn new(
        table_id: impl Into<String>,
        columns: Vec<ColumnMeta>,
        rows: Vec<Vec<Cell>>,
    ) -> Result<Self> {
        let row_keys = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::with_row_keys(table_id, columns, rows, row_keys)
    }

    pub fn with_row_keys(
        table_id: impl Into<String>,
        columns: Vec<ColumnMeta>,
        rows: Vec<Vec<Cell>>,
        row_keys: Vec<String>,
    ) -> Result<Self> {
        let table_id = table_id.into();
        validate_table_id(&table_id)?;
        let mut seen = HashSet::new();
        for col in &columns {
            let norm = col.normalized_name();
            if norm.is_empty() {
                return Err(TableError::EmptyHeader);
            }
            if !seen.insert(norm) {
                return Err(TableError::DuplicateColumn(col.name.clone()));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(TableError::RowLengthMismatch {
                    row: i,
                    expected: columns.len(),
                    found: row.len(),
                });
            }
        }
        assert_eq!(rows.len(), row_keys.len(), "one key per row");
        Ok(Self {
            table_id,
            columns,
            rows,
            row_keys,
        })
    }

    pub fn table_id(&self) -> &str {
        &self.table_id
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn columns_mut(&mut self) -> &mut [ColumnMeta] {
        &mut self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn row_keys(&self) -> &[String] {
        &self.row_keys
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    /// Data size in cells: rows times columns.
    pub fn n_cells(&self) -> usize {
        self.n_rows() * self.n_cols()
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<&str> {
        self.rows[row][col].as_deref()
    }

    pub fn set_cell(&mut self, row: usize, col: usize, value: Cell) {
        self.rows[row][col] = value;
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        let norm = normalize_name(name);
        self.columns
            .iter()
            .position(|c| c.normalized_name() == norm)
    }

    pub fn missing_count(&self) -> usize {
        self.rows.iter().flatten().filter(|c| c.is_none()).count()
    }

    /// Fraction of missing cells over the whole table; 0 for an empty table.
    pub fn missing_rate(&self) -> f64 {
        let n = self.n_cells();
        if n == 0 {
            0.0
        } else {
            self.missing_count() as f64 / n as f64
        }
    }

    pub fn with_table_id(mut self, table_id: impl Into<String>) -> Result<Self> {
        let id = table_id.into();
        validate_table_id(&id)?;
        self.table_id = id;
        Ok(self)
    }

    /// Keeps the given rows in the given order, preserving their keys.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            table_id: self.table_id.clone(),
            columns: self.columns.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            row_keys: indices.iter().map(|&i| self.row_keys[i].clone()).collect(),
        }
    }

    /// Keeps the given columns in the given order.
    pub fn select_columns(&self, indices: &[usize]) -> Self {
        Self {
            table_id: self.table_id.clone(),
            columns: indices.iter().map(|&i| self.columns[i].clone()).collect(),
            rows: self
                .rows
                .iter()
                .map(|row| indices.iter().map(|&i| row[i].clone()).collect())
                .collect(),
            row_keys: self.row_keys.clone(),
        }
    }

    /// Re-keys rows by position and returns the old-key → new-key mapping.
    pub fn rekey_rows(&mut self) -> BTreeMap<String, String> {
        let mut mapping = BTreeMap::new();
        for (i, key) in self.row_keys.iter_mut().enumerate() {
            let new_key = i.to_string();
            mapping.insert(std::mem::replace(key, new_key.clone()), new_key);
        }
        mapping
    }
}

fn validate_table_id(id: &str) -> Result<()> {
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
        return Err(TableError::InvalidTableId(id.to_string()));
    }
    Ok(())
}

/// Delimited-text format options.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvOptions {
    pub delimiter: char,
    pub quote: char,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: ',',
            quote: '"',
        }
    }
}

/// Loads a delimited file with a header row. Cells are kept verbatim.
pub fn load_table(
    path: impl AsRef<Path>,
    table_id: &str,
    options: &CsvOptions,
) -> Result<TableData> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| TableError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_table(BufReader::new(file), table_id, options)
}

pub fn read_table<R: Read>(reader: R, table_id: &str, options: &CsvOptions) -> Result<TableData> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(ascii_byte(options.delimiter)?)
        .quote(ascii_byte(options.quote)?)
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() || header.iter().any(|h| h.trim().is_empty()) {
        return Err(TableError::EmptyHeader);
    }
    let columns: Vec<ColumnMeta> = header.iter().map(|h| ColumnMeta::new(h.trim())).collect();
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != columns.len() {
            return Err(TableError::RowLengthMismatch {
                row: i,
                expected: columns.len(),
                found: record.len(),
            });
        }
        rows.push(record.iter().map(|v| Some(v.to_string())).collect());
    }
    TableData::new(table_id, columns, rows)
}

fn ascii_byte(c: char) -> Result<u8> {
    if c.is_ascii() {
        Ok(c as u8)
    } else {
        Err(TableError::Metadata(format!(
            "delimiter/quote `{c}` must be ASCII"
        )))
    }
}

/// Writes the table as CSV; missing cells become empty fields.
pub fn write_table(table: &TableData, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| TableError::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_table_to(table, file)
}

pub fn write_table_to<W: Write>(table: &TableData, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(table.columns.iter().map(|c| c.name.as_str()))?;
    for row in &table.rows {
        wtr.write_record(row.iter().map(|c| c.as_deref().unwrap_or("")))?;
    }
    wtr.flush().map_err(|source| TableError::Io {
        path: "<csv output>".into(),
        source,
    })?;
    Ok(())
}

/// Per-column metadata sidecar, keyed by column name.
///
/// ```toml
/// [columns.Title]
/// description = "title of the film"
/// declared_type = "text"
///
/// [columns."Foreign Nationality"]
/// zero_fill = true
/// ```
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TableMetadata {
    #[serde(default)]
    pub columns: BTreeMap<String, ColumnSidecar>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnSidecar {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_type: Option<DeclaredType>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub zero_fill: bool,
}

impl TableMetadata {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TableError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| TableError::Metadata(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("metadata serializes")
    }

    /// Captures descriptions and declared types of a table.
    pub fn from_table(table: &TableData) -> Self {
        let columns = table
            .columns()
            .iter()
            .map(|c| {
                (
                    c.name.clone(),
                    ColumnSidecar {
                        description: c.description.clone(),
                        declared_type: match c.declared_type {
                            DeclaredType::Unknown => None,
                            t => Some(t),
                        },
                        zero_fill: false,
                    },
                )
            })
            .collect();
        Self { columns }
    }

    /// Copies descriptions and types onto the table's columns and returns the
    /// names flagged for zero filling. Entries naming absent columns are
    /// reported and skipped.
    pub fn apply(&self, table: &mut TableData) -> Vec<String> {
        let mut zero_fill = Vec::new();
        for (name, side) in &self.columns {
            let Some(idx) = table.column_index(name) else {
                warn!(
                    "metadata names column `{name}` absent from table {}",
                    table.table_id()
                );
                continue;
            };
            let col = &mut table.columns[idx];
            if let Some(d) = &side.description {
                col.description = Some(d.clone());
            }
            if let Some(t) = side.declared_type {
                col.declared_type = t;
            }
            if side.zero_fill {
                zero_fill.push(col.name.clone());
            }
        }
        zero_fill
    }
}

/// Replaces missing-value spellings with `None`; in zero-fill columns missing
/// cells become `"0"` instead.
pub fn normalize_missing<S: AsRef<str>>(
    table: &TableData,
    missing_tokens: &[S],
    zero_fill_columns: &[String],
) -> TableData {
    let tokens: HashSet<String> = missing_tokens
        .iter()
        .map(|t| t.as_ref().trim().to_lowercase())
        .collect();
    let mut zero_fill = vec![false; table.n_cols()];
    for name in zero_fill_columns {
        match table.column_index(name) {
            Some(i) => zero_fill[i] = true,
            None => warn!(
                "zero-fill column `{name}` not present in table {}",
                table.table_id()
            ),
        }
    }
    let mut out = table.clone();
    for row in &mut out.rows {
        for (c, cell) in row.iter_mut().enumerate() {
            let is_missing = match cell {
                None => true,
                Some(v) => tokens.contains(&v.trim().to_lowercase()),
            };
            if is_missing {
                *cell = if zero_fill[c] {
                    Some("0".to_string())
                } else {
                    None
                };
            }
        }
    }
    out
}

/// [`normalize_missing`] with [`DEFAULT_MISSING_TOKENS`].
pub fn normalize_missing_default(table: &TableData, zero_fill_columns: &[String]) -> TableData {
    normalize_missing(table, DEFAULT_MISSING_TOKENS, zero_fill_columns)
}

/// Parses integer, decimal and scientific notation, with optional
/// well-formed thousands separators. Non-finite results are rejected.
pub fn parse_number(raw: &str) -> Option<f64> {
    let s = raw.trim();
    let bytes = s.as_bytes();
    let mut i = 0;
    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
        i += 1;
    }
    let int_start = i;
    while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b',') {
        i += 1;
    }
    let int_part = &s[int_start..i];
    if int_part.contains(',') && !valid_grouping(int_part) {
        return None;
    }
    let mut digits = int_part.bytes().filter(u8::is_ascii_digit).count();
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
            digits += 1;
        }
    }
    if digits == 0 {
        return None;
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        i += 1;
        if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
            i += 1;
        }
        let exp_start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i == exp_start {
            return None;
        }
    }
    if i != bytes.len() {
        return None;
    }
    let value: f64 = s.replace(',', "").parse().ok()?;
    value.is_finite().then_some(value)
}

fn valid_grouping(int_part: &str) -> bool {
    let mut groups = int_part.split(',');
    let first = groups.next().unwrap_or("");
    (1..=3).contains(&first.len()) && groups.all(|g| g.len() == 3)
}

/// Per-column statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnProfile {
    /// `[mean, min, max, variance, std]`, or `None` when no cell is numeric.
    pub v_num: Option<[f64; 5]>,
    /// `[space, punctuation, special, digit]` ratios, or `None` when every cell is missing.
    pub v_char: Option<[f64; 4]>,
    pub missing_rate: f64,
    pub distinct_ratio: f64,
    pub linguistic_fraction: f64,
    pub n_valid: usize,
}

/// Fill value for inapplicable feature blocks.
pub const NOT_APPLICABLE: f64 = -1.0;

pub const FEATURE_LEN: usize = 9;

impl ColumnProfile {
    /// Numeric and character blocks concatenated, inapplicable blocks filled with −1.
    pub fn feature_vector(&self) -> [f64; FEATURE_LEN] {
        let mut v = [NOT_APPLICABLE; FEATURE_LEN];
        if let Some(num) = self.v_num {
            v[..5].copy_from_slice(&num);
        }
        if let Some(ch) = self.v_char {
            v[5..].copy_from_slice(&ch);
        }
        v
    }

    /// Which entries of [`feature_vector`](Self::feature_vector) carry real values.
    pub fn applicable_mask(&self) -> [bool; FEATURE_LEN] {
        let mut m = [false; FEATURE_LEN];
        m[..5].fill(self.v_num.is_some());
        m[5..].fill(self.v_char.is_some());
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum CharClass {
    Space,
    Punc,
    Special,
    Digit,
    Other,
}

fn classify(c: char) -> CharClass {
    if c.is_whitespace() {
        CharClass::Space
    } else if PUNCTUATION.contains(&c) {
        CharClass::Punc
    } else if c.is_ascii_digit() {
        CharClass::Digit
    } else if c.is_alphanumeric() {
        CharClass::Other
    } else {
        CharClass::Special
    }
}

/// `[space, punc, special, digit]` fractions of one cell's characters.
pub fn char_ratios(value: &str) -> [f64; 4] {
    let mut counts = [0usize; 4];
    let mut total = 0usize;
    for c in value.chars() {
        total += 1;
        match classify(c) {
            CharClass::Space => counts[0] += 1,
            CharClass::Punc => counts[1] += 1,
            CharClass::Special => counts[2] += 1,
            CharClass::Digit => counts[3] += 1,
            CharClass::Other => {}
        }
    }
    if total == 0 {
        return [0.0; 4];
    }
    counts.map(|n| n as f64 / total as f64)
}

pub fn profile_column(table: &TableData, col: usize) -> Result<ColumnProfile> {
    if col >= table.n_cols() {
        return Err(TableError::ColumnOutOfRange {
            index: col,
            n_cols: table.n_cols(),
        });
    }
    let values: Vec<&str> = table
        .rows
        .iter()
        .filter_map(|r| r[col].as_deref())
        .collect();
    Ok(profile_values(&values, table.n_rows()))
}

/// Profiles every column, in parallel.
pub fn profile_table(table: &TableData) -> Vec<ColumnProfile> {
    use rayon::prelude::*;
    (0..table.n_cols())
        .into_par_iter()
        .map(|c| profile_column(table, c).expect("index in range"))
        .collect()
}

fn profile_values(values: &[&str], n_rows: usize) -> ColumnProfile {
    let n_valid = values.len();
    let missing_rate = if n_rows == 0 {
        1.0
    } else {
        (n_rows - n_valid) as f64 / n_rows as f64
    };
    if n_valid == 0 {
        return ColumnProfile {
            v_num: None,
            v_char: None,
            missing_rate,
            distinct_ratio: 0.0,
            linguistic_fraction: 0.0,
            n_valid,
        };
    }

    let numbers: Vec<f64> = values.iter().filter_map(|v| parse_number(v)).collect();
    let v_num = numeric_summary(&numbers);

    let mut sums = [0.0f64; 4];
    for v in values {
        for (s, r) in sums.iter_mut().zip(char_ratios(v)) {
            *s += r;
        }
    }
    let v_char = Some(sums.map(|s| s / n_valid as f64));

    let distinct: HashSet<&str> = values.iter().map(|v| v.trim()).collect();
    ColumnProfile {
        v_num,
        v_char,
        missing_rate,
        distinct_ratio: distinct.len() as f64 / n_valid as f64,
        linguistic_fraction: (n_valid - numbers.len()) as f64 / n_valid as f64,
        n_valid,
    }
}

/// Population statistics `[mean, min, max, variance, std]`.
fn numeric_summary(xs: &[f64]) -> Option<[f64; 5]> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = (xs.iter().sum::<f64>() / n).clamp(min, max);
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some([mean, min, max, var, var.sqrt()])
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizeMode {
    /// Whole cell becomes one token.
    #[default]
    Cell,
    /// One token per whitespace-separated word.
    Word,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizeOptions {
    pub mode: TokenizeMode,
    /// Round numeric tokens to five significant digits.
    pub quantize_numeric: bool,
}

/// Splits a non-missing cell into normalized tokens.
pub fn tokenize_cell(value: &str, options: TokenizeOptions) -> Vec<String> {
    match options.mode {
        TokenizeMode::Cell => {
            let words: Vec<&str> = value.split_whitespace().collect();
            if words.is_empty() {
                return Vec::new();
            }
            let joined = words.join(" ");
            vec![normalize_token(&joined, options.quantize_numeric)]
        }
        TokenizeMode::Word => value
            .split_whitespace()
            .map(|w| normalize_token(w, options.quantize_numeric))
            .collect(),
    }
}

fn normalize_token(text: &str, quantize: bool) -> String {
    if quantize {
        if let Some(x) = parse_number(text) {
            return quantize_number(x);
        }
    }
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

/// Shortest decimal rendering of `x` rounded to five significant digits.
pub fn quantize_number(x: f64) -> String {
    let rounded: f64 = format!("{x:.4e}")
        .parse()
        .expect("scientific notation parses");
    format!("{rounded}")
}
