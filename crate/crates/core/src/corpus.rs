//! Loading WikiSQL-layout data, repairing column types and filtering noisy
//! questions.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sql_template::{extract_template, ColumnType, ConstituentVector, SqlQuery};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Some(Split::Train),
            "dev" | "valid" | "validation" => Some(Split::Dev),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableSchema {
    pub table_id: String,
    pub column_names: Vec<String>,
    pub column_types: Vec<ColumnType>,
    /// Cell values, used only to infer column types.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rows: Vec<Vec<String>>,
}

impl TableSchema {
    pub fn validate(&self) -> Result<()> {
        let columns = self.column_names.len();
        if self.column_types.len() != columns {
            return Err(Error::InvalidSchema {
                table_id: self.table_id.clone(),
                message: format!(
                    "{} column names but {} column types",
                    columns,
                    self.column_types.len()
                ),
            });
        }
        if let Some((i, row)) = self.rows.iter().enumerate().find(|(_, r)| r.len() != columns) {
            return Err(Error::InvalidSchema {
                table_id: self.table_id.clone(),
                message: format!("row {i} has {} cells, expected {columns}", row.len()),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawRecord {
    pub id: String,
    pub question_text: String,
    pub sql: SqlQuery,
    pub table_id: String,
    pub split: Split,
}

/// A cleaned, tokenized question together with its SQL template.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub tokens: Vec<String>,
    pub template: ConstituentVector,
    pub split: Split,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitCounts {
    pub input: usize,
    pub retained: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CleaningReport {
    pub input: usize,
    pub retained: usize,
    pub rejected_too_short: usize,
    pub rejected_low_alphabetic: usize,
    pub retyped_to_number: usize,
    pub retyped_to_date: usize,
    pub per_split: BTreeMap<Split, SplitCounts>,
}

impl CleaningReport {
    pub fn rejected(&self) -> usize {
        self.rejected_too_short + self.rejected_low_alphabetic
    }

    /// Sums two partial reports. Integer addition, so the order of merging
    /// does not matter.
    pub fn merge(mut self, other: &CleaningReport) -> CleaningReport {
        self.input += other.input;
        self.retained += other.retained;
        self.rejected_too_short += other.rejected_too_short;
        self.rejected_low_alphabetic += other.rejected_low_alphabetic;
        self.retyped_to_number += other.retyped_to_number;
        self.retyped_to_date += other.retyped_to_date;
        for (split, counts) in &other.per_split {
            let entry = self.per_split.entry(*split).or_default();
            entry.input += counts.input;
            entry.retained += counts.retained;
        }
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningConfig {
    pub min_tokens: usize,
    pub min_alphabetic_fraction: f64,
    /// Fraction of non-empty cells that must match a pattern before a column
    /// is retyped.
    pub retype_threshold: f64,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        CleaningConfig {
            min_tokens: 4,
            min_alphabetic_fraction: 0.5,
            retype_threshold: 0.9,
        }
    }
}

#[derive(Deserialize)]
struct TableLine {
    id: String,
    header: Vec<String>,
    #[serde(default)]
    types: Option<Vec<String>>,
    #[serde(default)]
    rows: Vec<Vec<serde_json::Value>>,
}

#[derive(Deserialize)]
struct QuestionLine {
    #[serde(default)]
    id: Option<serde_json::Value>,
    question: String,
    table_id: String,
    sql: serde_json::Value,
    #[serde(default)]
    split: Option<String>,
}

fn cell_to_string(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn split_from_path(path: &Path) -> Option<Split> {
    let stem = path.file_stem()?.to_str()?.to_ascii_lowercase();
    [Split::Train, Split::Dev, Split::Test]
        .into_iter()
        .find(|s| stem.contains(s.name()))
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = (usize, Result<String>)> + '_> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(move |(i, line)| (i + 1, line.map_err(|e| Error::io(path, e)))))
}

pub fn load_tables(path: &Path) -> Result<BTreeMap<String, TableSchema>> {
    let mut tables = BTreeMap::new();
    for (line_no, line) in open_lines(path)? {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::Malformed {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let parsed: TableLine = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let column_types = match parsed.types {
            Some(types) => types.iter().map(|t| ColumnType::from_declared(t)).collect(),
            None => vec![ColumnType::Text; parsed.header.len()],
        };
        let schema = TableSchema {
            table_id: parsed.id,
            column_names: parsed.header,
            column_types,
            rows: parsed
                .rows
                .iter()
                .map(|row| row.iter().map(cell_to_string).collect())
                .collect(),
        };
        schema.validate()?;
        if tables.contains_key(&schema.table_id) {
            return Err(malformed(format!("duplicate table id {}", schema.table_id)));
        }
        tables.insert(schema.table_id.clone(), schema);
    }
    Ok(tables)
}

pub fn load_questions(path: &Path) -> Result<Vec<RawRecord>> {
    let default_split = split_from_path(path);
    let mut records = Vec::new();
    for (line_no, line) in open_lines(path)? {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::Malformed {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let parsed: QuestionLine = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let split = match parsed.split.as_deref() {
            Some(s) => Split::parse(s).ok_or_else(|| malformed(format!("unknown split {s:?}")))?,
            None => default_split
                .ok_or_else(|| malformed("record has no split and the file name names none".into()))?,
        };
        let sql = SqlQuery::from_wire(&parsed.sql).map_err(malformed)?;
        let id = match parsed.id {
            Some(serde_json::Value::String(s)) => s,
            Some(other) => other.to_string(),
            None => format!("{}-{}", split.name(), line_no),
        };
        records.push(RawRecord {
            id,
            question_text: parsed.question,
            sql,
            table_id: parsed.table_id,
            split,
        });
    }
    Ok(records)
}

/// Loads a questions file and its tables file, checking that every record
/// resolves to a table and that every referenced column exists.
pub fn load_dataset(
    questions_path: &Path,
    tables_path: &Path,
) -> Result<(Vec<RawRecord>, BTreeMap<String, TableSchema>)> {
    let tables = load_tables(tables_path)?;
    let records = load_questions(questions_path)?;
    for record in &records {
        let schema = tables.get(&record.table_id).ok_or_else(|| Error::UnknownTable {
            record: record.id.clone(),
            table_id: record.table_id.clone(),
        })?;
        let columns = schema.column_names.len();
        let columns_used = std::iter::once(record.sql.select_column)
            .chain(record.sql.conditions.iter().map(|c| c.column));
        for index in columns_used {
            if index >= columns {
                return Err(Error::ColumnOutOfRange {
                    table_id: schema.table_id.clone(),
                    index,
                    columns,
                });
            }
        }
    }
    Ok((records, tables))
}

static NUMERIC: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^[+-]?(?:(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?|\.\d+)$").unwrap()
});

const MONTHS: &str = "january|february|march|april|may|june|july|august|september|october|november|december|jan|feb|mar|apr|jun|jul|aug|sep|sept|oct|nov|dec";

static DATES: LazyLock<Vec<Regex>> = LazyLock::new(|| {
    vec![
        Regex::new(r"^\d{4}-\d{1,2}-\d{1,2}$").unwrap(),
        Regex::new(&format!(r"(?i)^\d{{1,2}}\s+(?:{MONTHS})\.?,?\s+\d{{4}}$")).unwrap(),
        Regex::new(&format!(r"(?i)^(?:{MONTHS})\.?\s+\d{{1,2}},?\s+\d{{4}}$")).unwrap(),
        Regex::new(r"^\d{1,2}/\d{1,2}/\d{4}$").unwrap(),
    ]
});

pub fn is_numeric_cell(cell: &str) -> bool {
    NUMERIC.is_match(cell.trim())
}

pub fn is_date_cell(cell: &str) -> bool {
    let cell = cell.trim();
    DATES.iter().any(|re| re.is_match(cell))
}

/// Retypes columns whose non-empty cells mostly look numeric or like dates.
/// Numeric takes precedence; columns without non-empty cells keep their type.
pub fn infer_column_types(schema: &TableSchema) -> TableSchema {
    infer_column_types_with(schema, CleaningConfig::default().retype_threshold)
}

pub fn infer_column_types_with(schema: &TableSchema, threshold: f64) -> TableSchema {
    let mut out = schema.clone();
    for (col, ty) in out.column_types.iter_mut().enumerate() {
        let cells: Vec<&str> = schema
            .rows
            .iter()
            .map(|row| row[col].trim())
            .filter(|c| !c.is_empty())
            .collect();
        if cells.is_empty() {
            continue;
        }
        let total = cells.len() as f64;
        let numeric = cells.iter().filter(|c| is_numeric_cell(c)).count() as f64;
        let dated = cells.iter().filter(|c| is_date_cell(c)).count() as f64;
        if numeric / total >= threshold {
            *ty = ColumnType::Number;
        } else if dated / total >= threshold {
            *ty = ColumnType::Date;
        }
    }
    out
}

/// Retypes every table, returning the repaired map and a report holding only
/// the retyping counts.
pub fn repair_tables(
    tables: &BTreeMap<String, TableSchema>,
    config: &CleaningConfig,
) -> (BTreeMap<String, TableSchema>, CleaningReport) {
    let mut report = CleaningReport::default();
    let repaired = tables
        .iter()
        .map(|(id, schema)| {
            let fixed = infer_column_types_with(schema, config.retype_threshold);
            for (before, after) in schema.column_types.iter().zip(&fixed.column_types) {
                if before != after {
                    match after {
                        ColumnType::Number => report.retyped_to_number += 1,
                        ColumnType::Date => report.retyped_to_date += 1,
                        ColumnType::Text => {}
                    }
                }
            }
            (id.clone(), fixed)
        })
        .collect();
    (repaired, report)
}

/// Lowercases, splits on whitespace and peels punctuation off both ends of
/// each word as single-character tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let word = word.to_lowercase();
        let chars: Vec<char> = word.chars().collect();
        let start = chars.iter().position(|c| c.is_alphanumeric());
        let Some(start) = start else {
            tokens.extend(chars.iter().map(|c| c.to_string()));
            continue;
        };
        let end = chars.iter().rposition(|c| c.is_alphanumeric()).unwrap() + 1;
        tokens.extend(chars[..start].iter().map(|c| c.to_string()));
        tokens.push(chars[start..end].iter().collect());
        tokens.extend(chars[end..].iter().map(|c| c.to_string()));
    }
    tokens
}

fn alphabetic_fraction(text: &str) -> f64 {
    let (alpha, total) = text
        .chars()
        .filter(|c| !c.is_whitespace())
        .fold((0usize, 0usize), |(a, t), c| (a + c.is_alphabetic() as usize, t + 1));
    if total == 0 {
        0.0
    } else {
        alpha as f64 / total as f64
    }
}

enum Verdict {
    Keep(Question),
    TooShort,
    LowAlphabetic,
}

fn judge(
    record: &RawRecord,
    tables: &BTreeMap<String, TableSchema>,
    config: &CleaningConfig,
) -> Result<Verdict> {
    let tokens = tokenize(&record.question_text);
    if tokens.len() < config.min_tokens {
        return Ok(Verdict::TooShort);
    }
    if alphabetic_fraction(&record.question_text) < config.min_alphabetic_fraction {
        return Ok(Verdict::LowAlphabetic);
    }
    let schema = tables.get(&record.table_id).ok_or_else(|| Error::UnknownTable {
        record: record.id.clone(),
        table_id: record.table_id.clone(),
    })?;
    Ok(Verdict::Keep(Question {
        id: record.id.clone(),
        tokens,
        template: extract_template(&record.sql, schema)?,
        split: record.split,
    }))
}

/// Drops questions that are too short or mostly non-alphabetic and tokenizes
/// the rest. `tables` should already be repaired with [`repair_tables`].
pub fn clean_questions(
    records: &[RawRecord],
    tables: &BTreeMap<String, TableSchema>,
    config: &CleaningConfig,
) -> Result<(Vec<Question>, CleaningReport)> {
    let verdicts = records
        .par_iter()
        .map(|r| judge(r, tables, config))
        .collect::<Result<Vec<_>>>()?;

    let mut report = CleaningReport {
        input: records.len(),
        ..Default::default()
    };
    let mut questions = Vec::new();
    for (record, verdict) in records.iter().zip(verdicts) {
        let split = report.per_split.entry(record.split).or_default();
        split.input += 1;
        match verdict {
            Verdict::Keep(q) => {
                split.retained += 1;
                report.retained += 1;
                questions.push(q);
            }
            Verdict::TooShort => report.rejected_too_short += 1,
            Verdict::LowAlphabetic => report.rejected_low_alphabetic += 1,
        }
    }
    Ok((questions, report))
}
