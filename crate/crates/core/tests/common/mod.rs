//! Oracles and fixtures shared by the integration tests. The oracles are
//! written independently of the library code they check.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sqlpattern::corpus::{self, CleaningConfig, Question, Split};
use sqlpattern::lexical::{LexicalConfig, LexicalModel};
use sqlpattern::matcher::{DistanceScorer, IndexEntry, Query};
use sqlpattern::sql_template::{Aggregator, ColumnType, ConstituentVector};
use sqlpattern::synth::{generate, SynthConfig};

pub const COLUMN_TYPES: [ColumnType; 3] = [ColumnType::Text, ColumnType::Number, ColumnType::Date];
pub const AGGREGATORS: [Aggregator; 6] = [
    Aggregator::None,
    Aggregator::Max,
    Aggregator::Min,
    Aggregator::Count,
    Aggregator::Sum,
    Aggregator::Avg,
];

/// Mismatching constituents, counted one field at a time.
pub fn literal_sqlsd(a: &ConstituentVector, b: &ConstituentVector) -> u8 {
    let fields_a = [
        format!("{:?}", a.select_type),
        format!("{:?}", a.aggregator),
        a.count_eq.to_string(),
        a.count_gt.to_string(),
        a.count_lt.to_string(),
    ];
    let fields_b = [
        format!("{:?}", b.select_type),
        format!("{:?}", b.aggregator),
        b.count_eq.to_string(),
        b.count_gt.to_string(),
        b.count_lt.to_string(),
    ];
    let mut mismatches = 0;
    for i in 0..5 {
        if fields_a[i] != fields_b[i] {
            mismatches += 1;
        }
    }
    mismatches
}

/// Every template with operator counts in `0..=cap`.
pub fn all_templates(cap: u32) -> Vec<ConstituentVector> {
    let mut out = Vec::new();
    for t in COLUMN_TYPES {
        for a in AGGREGATORS {
            for eq in 0..=cap {
                for gt in 0..=cap {
                    for lt in 0..=cap {
                        out.push(ConstituentVector::new(t, a, eq, gt, lt));
                    }
                }
            }
        }
    }
    out
}

pub fn random_template<R: Rng>(rng: &mut R, cap: u32) -> ConstituentVector {
    ConstituentVector::new(
        COLUMN_TYPES[rng.gen_range(0..3)],
        AGGREGATORS[rng.gen_range(0..6)],
        rng.gen_range(0..=cap),
        rng.gen_range(0..=cap),
        rng.gen_range(0..=cap),
    )
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Squared error of one pair computed straight from a flat parameter vector
/// laid out as `[W_x (4H x I), W_h (4H x H), b (4H), v (H), c]`, gates in the
/// order input, forget, output, candidate. The head is
/// `softplus(c + sum softplus(v_j) |ha_j - hb_j|)`.
pub fn straight_line_pair_loss(
    flat: &[f64],
    input: usize,
    hidden: usize,
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    target: f64,
) -> f64 {
    let wx = &flat[..4 * hidden * input];
    let wh = &flat[4 * hidden * input..4 * hidden * (input + hidden)];
    let bias = &flat[4 * hidden * (input + hidden)..4 * hidden * (input + hidden + 1)];
    let head_w = &flat[4 * hidden * (input + hidden + 1)..4 * hidden * (input + hidden + 1) + hidden];
    let head_b = flat[flat.len() - 1];

    let run = |seq: &[Vec<f64>]| -> Vec<f64> {
        let mut h = vec![0.0; hidden];
        let mut c = vec![0.0; hidden];
        for x in seq {
            let mut z = vec![0.0; 4 * hidden];
            for r in 0..4 * hidden {
                let mut s = bias[r];
                for k in 0..input {
                    s += wx[r * input + k] * x[k];
                }
                for k in 0..hidden {
                    s += wh[r * hidden + k] * h[k];
                }
                z[r] = s;
            }
            let mut h_next = vec![0.0; hidden];
            for j in 0..hidden {
                let i_gate = sig(z[j]);
                let f_gate = sig(z[hidden + j]);
                let o_gate = sig(z[2 * hidden + j]);
                let g_gate = z[3 * hidden + j].tanh();
                c[j] = f_gate * c[j] + i_gate * g_gate;
                h_next[j] = o_gate * c[j].tanh();
            }
            h = h_next;
        }
        h
    };
    let ha = run(a);
    let hb = run(b);
    let mut z = head_b;
    for j in 0..hidden {
        z += (1.0 + head_w[j].exp()).ln() * (ha[j] - hb[j]).abs();
    }
    let prediction = (1.0 + z.exp()).ln();
    (prediction - target).powi(2)
}

/// A deterministic scorer whose distances look arbitrary: a hash of the
/// query tokens and the member id mapped into `[0, 3)`.
#[derive(Clone, Copy, Debug)]
pub struct HashScorer(pub u64);

impl DistanceScorer for HashScorer {
    fn score(&self, query: Query<'_>, members: &[IndexEntry]) -> sqlpattern::Result<Vec<f64>> {
        Ok(members
            .iter()
            .map(|m| {
                let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ self.0;
                for byte in query.tokens.join(" ").bytes().chain(m.id.bytes()) {
                    h ^= byte as u64;
                    h = h.wrapping_mul(0x100_0000_01b3);
                }
                (h >> 11) as f64 / (1u64 << 53) as f64 * 3.0
            })
            .collect())
    }
}

/// A generated corpus cleaned in memory, with a lexical model over its
/// training split.
pub struct MemoryCorpus {
    pub train: Vec<Question>,
    pub dev: Vec<Question>,
    pub test: Vec<Question>,
    pub lexical: LexicalModel,
}

pub fn memory_corpus(questions: usize, k: usize, seed: u64) -> MemoryCorpus {
    let synth = generate(&SynthConfig {
        questions,
        tables: 20,
        seed,
        ..Default::default()
    });
    let tables: BTreeMap<String, _> = synth.tables.iter().map(|t| (t.table_id.clone(), t.clone())).collect();
    let cleaning = CleaningConfig::default();
    let (tables, _) = corpus::repair_tables(&tables, &cleaning);
    let (all, _) = corpus::clean_questions(&synth.records, &tables, &cleaning).unwrap();
    let pick = |s: Split| all.iter().filter(|q| q.split == s).cloned().collect::<Vec<_>>();
    let train = pick(Split::Train);
    let lexical = LexicalModel::fit(
        &train,
        &LexicalConfig {
            alpha: 5,
            k,
            seed,
            ..Default::default()
        },
    )
    .unwrap();
    MemoryCorpus {
        dev: pick(Split::Dev),
        test: pick(Split::Test),
        train,
        lexical,
    }
}

/// Small hand-written corpus in the on-disk formats: 12 usable questions over
/// two tables plus one junk question, and a 4-dimensional embedding file.
pub struct FileFixture {
    pub dir: tempfile::TempDir,
    pub questions: PathBuf,
    pub tables: PathBuf,
    pub embeddings: PathBuf,
}

pub const FIXTURE_QUESTIONS: &[(&str, &str, &str, &str, &str)] = &[
    // id, question, table, sql, split
    ("q1", "What is the team of player smith?", "t1", r#"{"sel":1,"agg":0,"conds":[[0,0,"smith"]]}"#, "train"),
    ("q2", "What is the team of player jones?", "t1", r#"{"sel":1,"agg":0,"conds":[[0,0,"jones"]]}"#, "train"),
    ("q3", "Which team has the player brown?", "t1", r#"{"sel":1,"agg":0,"conds":[[0,0,"brown"]]}"#, "train"),
    ("q4", "How many players scored more than 10 points?", "t1", r#"{"sel":0,"agg":3,"conds":[[2,1,"10"]]}"#, "train"),
    ("q5", "How many players scored more than 20 points?", "t1", r#"{"sel":0,"agg":3,"conds":[[2,1,"20"]]}"#, "train"),
    ("q6", "How many teams have more than 5 points?", "t1", r#"{"sel":1,"agg":3,"conds":[[2,1,"5"]]}"#, "train"),
    ("q7", "What is the highest points of team reds?", "t1", r#"{"sel":2,"agg":1,"conds":[[1,0,"reds"]]}"#, "train"),
    ("q8", "What is the highest points of team blues?", "t1", r#"{"sel":2,"agg":1,"conds":[[1,0,"blues"]]}"#, "train"),
    ("q9", "What is the date of the game in oslo?", "t2", r#"{"sel":1,"agg":0,"conds":[[0,0,"oslo"]]}"#, "train"),
    ("q10", "What is the date of the game in rome?", "t2", r#"{"sel":1,"agg":0,"conds":[[0,0,"rome"]]}"#, "train"),
    ("q11", "What is the team of player green?", "t1", r#"{"sel":1,"agg":0,"conds":[[0,0,"green"]]}"#, "test"),
    ("q12", "How many players scored more than 30 points?", "t1", r#"{"sel":0,"agg":3,"conds":[[2,1,"30"]]}"#, "test"),
    ("q13", "?? 12", "t1", r#"{"sel":0,"agg":0,"conds":[]}"#, "dev"),
];

const FIXTURE_TABLES: &str = r#"{"id": "t1", "header": ["player", "team", "points"], "types": ["text", "text", "text"], "rows": [["smith", "reds", "12"], ["jones", "blues", "25"], ["brown", "reds", "7"]]}
{"id": "t2", "header": ["city", "date"], "types": ["text", "text"], "rows": [["oslo", "2001-05-02"], ["rome", "1999-11-30"]]}
"#;

fn fixture_embeddings() -> String {
    let mut words: Vec<String> = Vec::new();
    for (_, q, _, _, _) in FIXTURE_QUESTIONS {
        words.extend(corpus::tokenize(q));
    }
    words.sort();
    words.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut out = format!("{} 4\n", words.len());
    for w in words {
        out.push_str(&w);
        for _ in 0..4 {
            out.push_str(&format!(" {:.4}", rng.gen_range(-1.0..1.0)));
        }
        out.push('\n');
    }
    out
}

pub fn file_fixture() -> FileFixture {
    let dir = tempfile::tempdir().unwrap();
    let questions = dir.path().join("questions.jsonl");
    let tables = dir.path().join("tables.jsonl");
    let embeddings = dir.path().join("embeddings.txt");
    let mut lines = String::new();
    for (id, q, t, sql, split) in FIXTURE_QUESTIONS {
        lines.push_str(&format!(
            "{{\"id\": \"{id}\", \"question\": {}, \"table_id\": \"{t}\", \"sql\": {sql}, \"split\": \"{split}\"}}\n",
            serde_json::to_string(q).unwrap()
        ));
    }
    std::fs::write(&questions, lines).unwrap();
    std::fs::write(&tables, FIXTURE_TABLES).unwrap();
    std::fs::write(&embeddings, fixture_embeddings()).unwrap();
    FileFixture {
        dir,
        questions,
        tables,
        embeddings,
    }
}

impl FileFixture {
    pub fn out(&self) -> &Path {
        self.dir.path()
    }

    /// Fast settings sized for the fixture.
    pub fn config(&self) -> sqlpattern::pipeline::PipelineConfig {
        let mut c = sqlpattern::pipeline::PipelineConfig::default();
        c.paths.questions = self.questions.clone();
        c.paths.tables = self.tables.clone();
        c.paths.embeddings = self.embeddings.clone();
        c.paths.model_dir = self.dir.path().join("model");
        c.paths.report_dir = self.dir.path().join("report");
        c.seed = 3;
        c.embedding_dim = 4;
        c.lexical.alpha = 1;
        c.lexical.k = 2;
        c.train.hidden_size = 4;
        c.train.epochs = 3;
        c.train.batch_size = 16;
        c.train.pairs_per_epoch = 48;
        c
    }

    /// The same settings as a TOML file, for the binary.
    pub fn config_file(&self) -> PathBuf {
        let path = self.dir.path().join("config.toml");
        std::fs::write(&path, self.config().to_toml_string()).unwrap();
        path
    }
}

/// Largest relative error between backpropagated and central-difference
/// gradients of one random pair.
pub fn gradient_check_trial(hidden: usize, seed: u64, step: f64) -> f64 {
    use sqlpattern::encoder::SiameseParams;
    let input = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = SiameseParams::zeros(input, hidden);
    let flat: Vec<f64> = (0..params.parameter_count()).map(|_| rng.gen_range(-0.6..0.6)).collect();
    params.set_flat(&flat);
    let sequence = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        let len = rng.gen_range(1..=6);
        (0..len).map(|_| (0..input).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
    };
    let a = sequence(&mut rng);
    let b = sequence(&mut rng);
    let target = rng.gen_range(0..=5) as f64;

    let a_refs: Vec<&[f64]> = a.iter().map(Vec::as_slice).collect();
    let b_refs: Vec<&[f64]> = b.iter().map(Vec::as_slice).collect();
    let mut grads = params.zeros_like();
    params.pair_loss(&a_refs, &b_refs, target, Some((&mut grads, 1.0))).unwrap();
    let analytic = grads.to_flat();

    let mut worst: f64 = 0.0;
    let mut probe = flat.clone();
    for i in 0..flat.len() {
        probe[i] = flat[i] + step;
        let up = straight_line_pair_loss(&probe, input, hidden, &a, &b, target);
        probe[i] = flat[i] - step;
        let down = straight_line_pair_loss(&probe, input, hidden, &a, &b, target);
        probe[i] = flat[i];
        let numeric = (up - down) / (2.0 * step);
        let err = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    worst
}
