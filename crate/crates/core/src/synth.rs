//! Synthetic WikiSQL-style corpus.
//!
//! Questions are realized from a fixed inventory of SQL templates through
//! phrase variation and entity, column-name and number substitution, over
//! generated tables whose declared column types are all `text` (the typing
//! mistake the cleaning step repairs). A matching text embedding file is
//! generated too: synonyms share a direction, everything else is random.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{RawRecord, Split, TableSchema};
use crate::error::Result;
use crate::pipeline::PipelineConfig;
use crate::sql_template::{Aggregator, ColumnType, Condition, ConditionOp, ConstituentVector, SqlQuery};
use crate::util::{atomic_write, derive_seed};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub questions: usize,
    pub tables: usize,
    pub rows_per_table: usize,
    /// Share of deliberately unusable questions (too short or symbol soup).
    pub junk_fraction: f64,
    pub embedding_dim: usize,
    /// Train and dev shares; the remainder is test.
    pub split: (f64, f64),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            questions: 2400,
            tables: 150,
            rows_per_table: 8,
            junk_fraction: 0.03,
            embedding_dim: 50,
            split: (0.8, 0.1),
            seed: 7,
        }
    }
}

/// The template inventory the generator draws from.
pub fn templates() -> Vec<ConstituentVector> {
    use Aggregator::*;
    use ColumnType::*;
    let t = ConstituentVector::new;
    vec![
        t(Text, None, 1, 0, 0),
        t(Text, None, 2, 0, 0),
        t(Text, None, 1, 1, 0),
        t(Text, None, 1, 0, 1),
        t(Text, Count, 1, 0, 0),
        t(Text, Count, 0, 1, 0),
        t(Number, None, 1, 0, 0),
        t(Number, None, 2, 0, 0),
        t(Number, Max, 1, 0, 0),
        t(Number, Min, 1, 0, 0),
        t(Number, Sum, 1, 0, 0),
        t(Number, Avg, 1, 0, 0),
        t(Number, Avg, 0, 1, 0),
        t(Number, Sum, 0, 0, 1),
        t(Date, None, 1, 0, 0),
        t(Date, None, 2, 0, 0),
    ]
}

const TEXT_COLUMNS: &[&str] = &[
    "player", "team", "school", "venue", "nationality", "position", "opponent", "country", "home team",
    "away team", "director", "title", "city", "party", "winner", "driver", "artist", "network", "label",
    "result", "coach", "club", "province", "candidate", "circuit", "manufacturer",
];
const NUMBER_COLUMNS: &[&str] = &[
    "points", "goals", "rank", "attendance", "laps", "wins", "losses", "seasons", "score", "pick", "round",
    "population", "votes", "episodes", "week", "grid", "silver", "gold", "bronze", "caps", "tries", "area",
];
const DATE_COLUMNS: &[&str] = &[
    "date", "air date", "release date", "date of birth", "signing date", "opening date", "election date",
    "first aired", "debut date",
];

fn select_phrases(agg: Aggregator, ty: ColumnType) -> &'static [&'static str] {
    match (agg, ty) {
        (Aggregator::None, ColumnType::Text) => &[
            "what is the {c}", "which {c}", "name the {c}", "tell me the {c}", "who is the {c}", "what {c}",
            "give the {c}",
        ],
        (Aggregator::None, ColumnType::Date) => &[
            "what is the {c}", "on which {c}", "name the {c}", "tell me the {c}", "when is the {c}", "what {c}",
        ],
        (Aggregator::None, _) => &[
            "what is the {c}", "which {c}", "name the {c}", "tell me the {c}", "what {c}", "give the {c}",
        ],
        (Aggregator::Count, _) => &[
            "how many {c}", "what is the number of {c}", "count the {c}", "what is the count of {c}",
            "how many different {c}",
        ],
        (Aggregator::Max, _) => &[
            "what is the highest {c}", "what is the largest {c}", "what is the maximum {c}", "name the most {c}",
            "which is the biggest {c}",
        ],
        (Aggregator::Min, _) => &[
            "what is the lowest {c}", "what is the smallest {c}", "what is the minimum {c}", "name the least {c}",
            "which is the fewest {c}",
        ],
        (Aggregator::Sum, _) => &[
            "what is the total {c}", "what is the sum of {c}", "how much {c} in total", "what are the combined {c}",
        ],
        (Aggregator::Avg, _) => &[
            "what is the average {c}", "what is the mean {c}", "what is the typical {c}", "give the average {c}",
        ],
    }
}

fn condition_phrases(op: ConditionOp) -> &'static [&'static str] {
    match op {
        ConditionOp::Eq => &[
            "when the {c} is {v}", "for {c} {v}", "with a {c} of {v}", "where {c} is {v}", "that has {c} of {v}",
            "for the {c} of {v}",
        ],
        ConditionOp::Gt => &[
            "when the {c} is more than {v}", "with {c} greater than {v}", "where {c} is over {v}",
            "that has {c} larger than {v}", "with {c} above {v}",
        ],
        ConditionOp::Lt => &[
            "when the {c} is less than {v}", "with {c} smaller than {v}", "where {c} is under {v}",
            "that has {c} fewer than {v}", "with {c} below {v}",
        ],
    }
}

/// Words that share an embedding direction.
const SYNONYM_GROUPS: &[&[&str]] = &[
    &["highest", "largest", "maximum", "most", "biggest"],
    &["lowest", "smallest", "minimum", "least", "fewest"],
    &["total", "sum", "combined"],
    &["average", "mean", "typical"],
    &["more", "greater", "over", "larger", "above"],
    &["less", "smaller", "under", "fewer", "below"],
    &["what", "which", "who", "when"],
    &["name", "tell", "give"],
];

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ren", "sa", "to", "vel", "dor", "an", "bri", "cel", "fa", "gor", "hal", "is", "jen",
    "mar", "nor", "os", "pel", "quin", "ros", "tan", "ul", "var", "wen", "yor", "zel", "ber", "tum",
];

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub tables: Vec<TableSchema>,
    pub records: Vec<RawRecord>,
    pub embeddings: Vec<(String, Vec<f64>)>,
}

/// Paths written by [`SynthCorpus::write`].
#[derive(Clone, Debug)]
pub struct SynthFiles {
    pub questions: PathBuf,
    pub tables: PathBuf,
    pub embeddings: PathBuf,
}

struct Table {
    schema: TableSchema,
    text: Vec<usize>,
    number: Vec<usize>,
    date: Vec<usize>,
}

fn pseudo_word<R: Rng>(rng: &mut R) -> String {
    let n = rng.gen_range(2..=3);
    (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect()
}

fn date_cell<R: Rng>(rng: &mut R) -> String {
    const MONTHS: [&str; 12] = [
        "January", "February", "March", "April", "May", "June", "July", "August", "September", "October",
        "November", "December",
    ];
    let (y, m, d) = (rng.gen_range(1950..2018), rng.gen_range(1..=12), rng.gen_range(1..=28));
    match rng.gen_range(0..4) {
        0 => format!("{y:04}-{m:02}-{d:02}"),
        1 => format!("{d} {} {y}", MONTHS[m - 1]),
        2 => format!("{} {d}, {y}", MONTHS[m - 1]),
        _ => format!("{m:02}/{d:02}/{y}"),
    }
}

fn make_table<R: Rng>(id: usize, rows: usize, entities: &[String], rng: &mut R) -> Table {
    let n_text = rng.gen_range(2..=4);
    let n_number = rng.gen_range(2..=3);
    let n_date = rng.gen_range(0..=1) + usize::from(rng.gen_bool(0.5));
    let mut kinds: Vec<(ColumnType, &str)> = Vec::new();
    kinds.extend(TEXT_COLUMNS.choose_multiple(rng, n_text).map(|c| (ColumnType::Text, *c)));
    kinds.extend(NUMBER_COLUMNS.choose_multiple(rng, n_number).map(|c| (ColumnType::Number, *c)));
    kinds.extend(DATE_COLUMNS.choose_multiple(rng, n_date).map(|c| (ColumnType::Date, *c)));
    kinds.shuffle(rng);
    let cells: Vec<Vec<String>> = (0..rows)
        .map(|_| {
            kinds
                .iter()
                .map(|(ty, _)| match ty {
                    ColumnType::Text => {
                        let words = rng.gen_range(1..=2);
                        (0..words)
                            .map(|_| entities.choose(rng).unwrap().as_str())
                            .collect::<Vec<_>>()
                            .join(" ")
                    }
                    ColumnType::Number => rng.gen_range(0..300).to_string(),
                    ColumnType::Date => date_cell(rng),
                })
                .collect()
        })
        .collect();
    let idx = |want: ColumnType| -> Vec<usize> {
        kinds.iter().enumerate().filter(|(_, (t, _))| *t == want).map(|(i, _)| i).collect()
    };
    Table {
        text: idx(ColumnType::Text),
        number: idx(ColumnType::Number),
        date: idx(ColumnType::Date),
        schema: TableSchema {
            table_id: format!("1-{id:05}"),
            column_names: kinds.iter().map(|(_, n)| n.to_string()).collect(),
            column_types: vec![ColumnType::Text; kinds.len()],
            rows: cells,
        },
    }
}

fn fill(phrase: &str, column: &str, value: &str) -> String {
    phrase.replace("{c}", column).replace("{v}", value)
}

/// Picks columns for `template` on `table`, or `None` when the table cannot
/// express it.
fn realize<R: Rng>(template: &ConstituentVector, table: &Table, rng: &mut R) -> Option<(SqlQuery, String)> {
    let select_pool = match template.select_type {
        ColumnType::Text => &table.text,
        ColumnType::Number => &table.number,
        ColumnType::Date => &table.date,
    };
    let select = *select_pool.choose(rng)?;
    let mut used = vec![select];
    let mut conditions = Vec::new();
    for (op, count) in [
        (ConditionOp::Eq, template.count_eq),
        (ConditionOp::Gt, template.count_gt),
        (ConditionOp::Lt, template.count_lt),
    ] {
        for _ in 0..count {
            let pool: Vec<usize> = match op {
                ConditionOp::Eq => table.text.iter().chain(&table.date).copied().collect(),
                _ => table.number.clone(),
            };
            let free: Vec<usize> = pool.into_iter().filter(|c| !used.contains(c)).collect();
            let column = *free.choose(rng)?;
            used.push(column);
            let value = match op {
                ConditionOp::Eq => table.schema.rows.choose(rng).unwrap()[column].clone(),
                _ => rng.gen_range(1..250).to_string(),
            };
            conditions.push(Condition { column, op, value });
        }
    }

    let names = &table.schema.column_names;
    let mut text = fill(
        select_phrases(template.aggregator, template.select_type).choose(rng).unwrap(),
        &names[select],
        "",
    );
    let mut order: Vec<&Condition> = conditions.iter().collect();
    order.shuffle(rng);
    for (i, c) in order.iter().enumerate() {
        text.push_str(if i == 0 { " " } else { " and " });
        text.push_str(&fill(condition_phrases(c.op).choose(rng).unwrap(), &names[c.column], &c.value));
    }
    if rng.gen_bool(0.7) {
        text.push('?');
    }
    let mut chars = text.chars();
    let text = match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => text,
    };
    Some((
        SqlQuery {
            select_column: select,
            aggregator: template.aggregator,
            conditions,
        },
        text,
    ))
}

fn junk_text<R: Rng>(rng: &mut R) -> String {
    match rng.gen_range(0..3) {
        0 => "??".to_string(),
        1 => format!("### {} !!! {} %%%", rng.gen_range(0..999), rng.gen_range(0..999)),
        _ => format!("{} {}", pseudo_word(rng), rng.gen_range(0..99)),
    }
}

pub fn generate(config: &SynthConfig) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let entity_set: BTreeSet<String> = (0..800).map(|_| pseudo_word(&mut rng)).collect();
    let entities: Vec<String> = entity_set.into_iter().collect();
    let tables: Vec<Table> = (0..config.tables)
        .map(|i| make_table(i, config.rows_per_table, &entities, &mut rng))
        .collect();
    let inventory = templates();

    let mut records = Vec::with_capacity(config.questions);
    for i in 0..config.questions {
        let template = inventory[i % inventory.len()];
        let (table, sql, text) = loop {
            let table = tables.choose(&mut rng).unwrap();
            if let Some((sql, text)) = realize(&template, table, &mut rng) {
                break (table, sql, text);
            }
        };
        let text = if rng.gen_bool(config.junk_fraction) {
            junk_text(&mut rng)
        } else {
            text
        };
        records.push(RawRecord {
            id: String::new(),
            question_text: text,
            sql,
            table_id: table.schema.table_id.clone(),
            split: Split::Train,
        });
    }
    records.shuffle(&mut rng);
    let n = records.len() as f64;
    let train_end = (n * config.split.0).round() as usize;
    let dev_end = (n * (config.split.0 + config.split.1)).round() as usize;
    for (i, r) in records.iter_mut().enumerate() {
        r.id = format!("q{i:05}");
        r.split = if i < train_end {
            Split::Train
        } else if i < dev_end {
            Split::Dev
        } else {
            Split::Test
        };
    }

    let embeddings = synth_embeddings(&tables, &records, config.embedding_dim, derive_seed(config.seed, 1));
    SynthCorpus {
        tables: tables.into_iter().map(|t| t.schema).collect(),
        records,
        embeddings,
    }
}

/// Vectors for every token the corpus can produce, in sorted word order.
fn synth_embeddings(tables: &[Table], records: &[RawRecord], dim: usize, seed: u64) -> Vec<(String, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vocab: BTreeSet<String> = BTreeSet::new();
    for r in records {
        vocab.extend(crate::corpus::tokenize(&r.question_text));
    }
    for t in tables {
        for row in &t.schema.rows {
            for cell in row {
                vocab.extend(crate::corpus::tokenize(cell));
            }
        }
    }
    for n in 0..300 {
        vocab.insert(n.to_string());
    }
    let random_vec = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let group_bases: Vec<Vec<f64>> = SYNONYM_GROUPS.iter().map(|_| random_vec(&mut rng)).collect();
    let number_base = random_vec(&mut rng);
    vocab
        .into_iter()
        .map(|word| {
            let noise = random_vec(&mut rng);
            let base = SYNONYM_GROUPS
                .iter()
                .position(|g| g.contains(&word.as_str()))
                .map(|g| &group_bases[g])
                .or_else(|| word.chars().all(|c| c.is_ascii_digit()).then_some(&number_base));
            let v = match base {
                Some(b) => b.iter().zip(&noise).map(|(x, n)| x + 0.3 * n).collect(),
                None => noise,
            };
            (word, v)
        })
        .collect()
}

impl SynthCorpus {
    pub fn questions_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let line = serde_json::json!({
                "id": r.id,
                "question": r.question_text,
                "table_id": r.table_id,
                "sql": r.sql.to_wire(),
                "split": r.split.name(),
            });
            let _ = writeln!(out, "{line}");
        }
        out
    }

    /// Tables in WikiSQL layout, every column declared `text`.
    pub fn tables_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.tables {
            let line = serde_json::json!({
                "id": t.table_id,
                "header": t.column_names,
                "types": vec!["text"; t.column_names.len()],
                "rows": t.rows,
            });
            let _ = writeln!(out, "{line}");
        }
        out
    }

    /// `count dim` header, then `word v1 ... vd` lines.
    pub fn embeddings_text(&self) -> String {
        let dim = self.embeddings.first().map_or(0, |(_, v)| v.len());
        let mut out = format!("{} {}\n", self.embeddings.len(), dim);
        for (word, v) in &self.embeddings {
            out.push_str(word);
            for x in v {
                let _ = write!(out, " {x:.6}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<SynthFiles> {
        let files = SynthFiles {
            questions: dir.join("questions.jsonl"),
            tables: dir.join("tables.jsonl"),
            embeddings: dir.join("embeddings.txt"),
        };
        atomic_write(&files.questions, self.questions_jsonl().as_bytes())?;
        atomic_write(&files.tables, self.tables_jsonl().as_bytes())?;
        atomic_write(&files.embeddings, self.embeddings_text().as_bytes())?;
        Ok(files)
    }
}

/// Pipeline settings for the desk-scale experiment on a generated corpus:
/// 20 clusters, 32 hidden units, a vocabulary threshold scaled to the small
/// corpus and smaller batches so the short run still takes enough steps.
pub fn desk_pipeline_config(files: &SynthFiles, out_dir: &Path, embedding_dim: usize, seed: u64) -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.paths.questions = files.questions.clone();
    c.paths.tables = files.tables.clone();
    c.paths.embeddings = files.embeddings.clone();
    c.paths.model_dir = out_dir.join("model");
    c.paths.report_dir = out_dir.join("report");
    c.seed = seed;
    c.embedding_dim = embedding_dim;
    c.lexical.alpha = 20;
    c.lexical.k = 20;
    c.train.hidden_size = 32;
    c.train.epochs = 20;
    c.train.batch_size = 64;
    c.train.learning_rate = 3e-3;
    c.train.pairs_per_epoch = 6000;
    c.export.min_group_size = 50;
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sql_template::extract_template;

    #[test]
    fn inventory_is_distinct() {
        let t = templates();
        let set: BTreeSet<_> = t.iter().collect();
        assert_eq!(set.len(), t.len());
        assert!(t.len() >= 12);
    }

    #[test]
    fn generated_queries_fit_their_tables() {
        let corpus = generate(&SynthConfig {
            questions: 300,
            tables: 20,
            ..Default::default()
        });
        assert_eq!(corpus.records.len(), 300);
        let inventory = templates();
        for r in &corpus.records {
            let table = corpus.tables.iter().find(|t| t.table_id == r.table_id).unwrap();
            let repaired = crate::corpus::infer_column_types(table);
            let t = extract_template(&r.sql, &repaired).unwrap();
            assert!(inventory.contains(&t), "{t} from {:?}", r.question_text);
        }
    }

    #[test]
    fn deterministic() {
        let cfg = SynthConfig {
            questions: 50,
            tables: 5,
            ..Default::default()
        };
        let a = generate(&cfg);
        let b = generate(&cfg);
        assert_eq!(a.questions_jsonl(), b.questions_jsonl());
        assert_eq!(a.embeddings_text(), b.embeddings_text());
    }
}
