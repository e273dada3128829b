//! The restricted WikiSQL query dialect and its template abstraction.
//!
//! A query selects exactly one column, optionally through an aggregator, and
//! filters with a conjunction of `column op value` conditions. Its *template*
//! ([`ConstituentVector`]) forgets column identities and literal values and keeps
//! only five constituents: the select column's type, the aggregator, and the
//! number of `=`, `>` and `<` conditions. [`sqlsd`] counts how many of the five
//! differ between two templates.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::TableSchema;
use crate::error::{Error, Result};

/// Column type of a table column, after type repair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Text,
    Number,
    Date,
}

impl ColumnType {
    pub const ALL: [ColumnType; 3] = [ColumnType::Text, ColumnType::Number, ColumnType::Date];

    pub fn name(self) -> &'static str {
        match self {
            ColumnType::Text => "text",
            ColumnType::Number => "number",
            ColumnType::Date => "date",
        }
    }

    /// Parses the type names found in WikiSQL table files (`real` is the
    /// release's spelling of numeric). Unknown names fall back to text.
    pub fn from_declared(name: &str) -> ColumnType {
        match name.to_ascii_lowercase().as_str() {
            "real" | "number" | "numeric" | "int" | "integer" | "float" => ColumnType::Number,
            "date" | "datetime" => ColumnType::Date,
            _ => ColumnType::Text,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    None,
    Max,
    Min,
    Count,
    Sum,
    Avg,
}

impl Aggregator {
    pub const ALL: [Aggregator; 6] = [
        Aggregator::None,
        Aggregator::Max,
        Aggregator::Min,
        Aggregator::Count,
        Aggregator::Sum,
        Aggregator::Avg,
    ];

    /// WikiSQL integer code.
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u64) -> Option<Aggregator> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Aggregator::None => "none",
            Aggregator::Max => "max",
            Aggregator::Min => "min",
            Aggregator::Count => "count",
            Aggregator::Sum => "sum",
            Aggregator::Avg => "avg",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionOp {
    Eq,
    Gt,
    Lt,
}

impl ConditionOp {
    pub const ALL: [ConditionOp; 3] = [ConditionOp::Eq, ConditionOp::Gt, ConditionOp::Lt];

    /// WikiSQL integer code.
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u64) -> Option<ConditionOp> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn symbol(self) -> &'static str {
        match self {
            ConditionOp::Eq => "=",
            ConditionOp::Gt => ">",
            ConditionOp::Lt => "<",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Condition {
    pub column: usize,
    pub op: ConditionOp,
    pub value: String,
}

/// A single-table, single-column, join-free query.
#[derive(Clone, Debug, PartialEq)]
pub struct SqlQuery {
    pub select_column: usize,
    pub aggregator: Aggregator,
    pub conditions: Vec<Condition>,
}

impl SqlQuery {
    /// Parses the WikiSQL wire form `{"sel": int, "agg": int, "conds": [[col, op, value], ...]}`.
    pub fn from_wire(value: &serde_json::Value) -> std::result::Result<SqlQuery, String> {
        let obj = value.as_object().ok_or("sql is not an object")?;
        let sel = obj
            .get("sel")
            .and_then(|v| v.as_u64())
            .ok_or("sql.sel must be a non-negative integer")?;
        let agg_code = obj
            .get("agg")
            .and_then(|v| v.as_u64())
            .ok_or("sql.agg must be a non-negative integer")?;
        let aggregator =
            Aggregator::from_code(agg_code).ok_or_else(|| format!("unknown aggregator code {agg_code}"))?;
        let mut conditions = Vec::new();
        if let Some(conds) = obj.get("conds") {
            let conds = conds.as_array().ok_or("sql.conds must be an array")?;
            for cond in conds {
                let parts = cond
                    .as_array()
                    .filter(|p| p.len() == 3)
                    .ok_or("each condition must be [column, op, value]")?;
                let column = parts[0]
                    .as_u64()
                    .ok_or("condition column must be a non-negative integer")?;
                let op_code = parts[1].as_u64().ok_or("condition op must be an integer")?;
                let op = ConditionOp::from_code(op_code)
                    .ok_or_else(|| format!("unknown condition operator code {op_code}"))?;
                let value = match &parts[2] {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                conditions.push(Condition {
                    column: column as usize,
                    op,
                    value,
                });
            }
        }
        Ok(SqlQuery {
            select_column: sel as usize,
            aggregator,
            conditions,
        })
    }

    pub fn to_wire(&self) -> serde_json::Value {
        serde_json::json!({
            "sel": self.select_column,
            "agg": self.aggregator.code(),
            "conds": self
                .conditions
                .iter()
                .map(|c| serde_json::json!([c.column, c.op.code(), c.value]))
                .collect::<Vec<_>>(),
        })
    }
}

/// The template of a query: the five constituents compared by [`sqlsd`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConstituentVector {
    pub select_type: ColumnType,
    pub aggregator: Aggregator,
    pub count_eq: u32,
    pub count_gt: u32,
    pub count_lt: u32,
}

impl ConstituentVector {
    pub fn new(
        select_type: ColumnType,
        aggregator: Aggregator,
        count_eq: u32,
        count_gt: u32,
        count_lt: u32,
    ) -> Self {
        ConstituentVector {
            select_type,
            aggregator,
            count_eq,
            count_gt,
            count_lt,
        }
    }

    /// Compact label, e.g. `text|count|1|0|0`.
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ConstituentVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}|{}|{}|{}|{}",
            self.select_type.name(),
            self.aggregator.name(),
            self.count_eq,
            self.count_gt,
            self.count_lt
        )
    }
}

pub fn extract_template(query: &SqlQuery, schema: &TableSchema) -> Result<ConstituentVector> {
    let columns = schema.column_types.len();
    let out_of_range = |index: usize| Error::ColumnOutOfRange {
        table_id: schema.table_id.clone(),
        index,
        columns,
    };
    let select_type = *schema
        .column_types
        .get(query.select_column)
        .ok_or_else(|| out_of_range(query.select_column))?;
    let mut counts = [0u32; 3];
    for cond in &query.conditions {
        if cond.column >= columns {
            return Err(out_of_range(cond.column));
        }
        counts[cond.op as usize] += 1;
    }
    Ok(ConstituentVector {
        select_type,
        aggregator: query.aggregator,
        count_eq: counts[0],
        count_gt: counts[1],
        count_lt: counts[2],
    })
}

/// SQL structure distance: the number of constituents on which the two
/// templates disagree, in `0..=5`.
pub fn sqlsd(a: &ConstituentVector, b: &ConstituentVector) -> u8 {
    (a.select_type != b.select_type) as u8
        + (a.aggregator != b.aggregator) as u8
        + (a.count_eq != b.count_eq) as u8
        + (a.count_gt != b.count_gt) as u8
        + (a.count_lt != b.count_lt) as u8
}

pub fn same_template(a: &ConstituentVector, b: &ConstituentVector) -> bool {
    sqlsd(a, b) == 0
}
