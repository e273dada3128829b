//! Template extraction and the SQL structure distance.
//!
//!     cargo run --example sqlsd_templates

use sqlpattern::corpus::TableSchema;
use sqlpattern::sql_template::{extract_template, same_template, sqlsd, Aggregator, Condition, ConditionOp, SqlQuery};
use sqlpattern::sql_template::ColumnType::{Date, Number, Text};

fn main() {
    let schema = TableSchema {
        table_id: "games".into(),
        column_names: vec!["team".into(), "opponent".into(), "points".into(), "date".into()],
        column_types: vec![Text, Text, Number, Date],
        rows: vec![],
    };
    let eq = |column, value: &str| Condition { column, op: ConditionOp::Eq, value: value.into() };
    let gt = |column, value: &str| Condition { column, op: ConditionOp::Gt, value: value.into() };
    let queries = [
        ("Who did the reds play on 12 May 2001?", SqlQuery { select_column: 1, aggregator: Aggregator::None, conditions: vec![eq(0, "reds"), eq(3, "12 May 2001")] }),
        ("Which opponent did the blues face on 3 June 1999?", SqlQuery { select_column: 1, aggregator: Aggregator::None, conditions: vec![eq(0, "blues"), eq(3, "3 June 1999")] }),
        ("How many games had more than 20 points?", SqlQuery { select_column: 0, aggregator: Aggregator::Count, conditions: vec![gt(2, "20")] }),
        ("What is the highest points against the reds?", SqlQuery { select_column: 2, aggregator: Aggregator::Max, conditions: vec![eq(1, "reds")] }),
    ];
    let templates: Vec<_> = queries.iter().map(|(_, q)| extract_template(q, &schema).unwrap()).collect();
    for ((text, _), t) in queries.iter().zip(&templates) {
        println!("{t:<22} {text}");
    }
    println!();
    for i in 0..templates.len() {
        for j in i + 1..templates.len() {
            println!(
                "sqlsd(q{}, q{}) = {}  same template: {}",
                i + 1,
                j + 1,
                sqlsd(&templates[i], &templates[j]),
                same_template(&templates[i], &templates[j])
            );
        }
    }
}
