//! Threshold sweeps, baselines and hidden-state export.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Question, Split};
use crate::encoder::{encode_question, EmbeddingTable, SiameseModel};
use crate::error::{Error, Result};
use crate::matcher::{score_query, DistanceScorer, QuestionIndex, ScoredQuery};
use crate::sql_template::same_template;

/// `0.10, 0.15, ..., 2.50`.
pub fn default_beta_grid() -> Vec<f64> {
    beta_grid(0.1, 2.5, 0.05)
}

/// Inclusive grid from `start` to `stop`. Values are rounded to nine
/// decimals so that e.g. `0.1 + 3 * 0.05` prints as `0.25`.
pub fn beta_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || stop < start {
        return Vec::new();
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BaselineKind {
    EmbeddingsAverage,
    AcceptAll,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::EmbeddingsAverage => "embeddings",
            BaselineKind::AcceptAll => "accept-all",
        }
    }
}

/// Raw tallies behind one report row.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalCounts {
    pub n_test: usize,
    pub correct: usize,
    pub rejected: usize,
    /// Rejections whose searched cluster did contain a same-template question.
    pub incorrectly_rejected: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub beta: f64,
    pub accuracy_non_rejected: f64,
    pub accuracy_all: f64,
    pub pct_rejected: f64,
    pub pct_incorrectly_rejected: f64,
    pub n_test: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalCounts {
    pub fn row(&self, beta: f64) -> EvalRow {
        let accepted = self.n_test - self.rejected;
        EvalRow {
            beta,
            accuracy_non_rejected: ratio(self.correct, accepted),
            accuracy_all: ratio(self.correct, self.n_test),
            pct_rejected: ratio(self.rejected, self.n_test),
            pct_incorrectly_rejected: ratio(self.incorrectly_rejected, self.rejected),
            n_test: self.n_test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Option<Split>,
    pub rows: Vec<EvalRow>,
    pub baselines: Vec<(BaselineKind, EvalRow)>,
    pub corpus_hash: String,
    pub model_hash: String,
}

impl EvalReport {
    /// Row with the highest `accuracy_all`; the first wins ties.
    pub fn best_row(&self) -> Option<&EvalRow> {
        self.rows.iter().fold(None, |best: Option<&EvalRow>, r| match best {
            Some(b) if b.accuracy_all >= r.accuracy_all => Some(b),
            _ => Some(r),
        })
    }

    pub fn baseline(&self, kind: BaselineKind) -> Option<&EvalRow> {
        self.baselines.iter().find(|(k, _)| *k == kind).map(|(_, r)| r)
    }

    /// Headered CSV: one row per beta, then one per baseline keyed by name.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("beta,accuracy_non_rejected,accuracy_all,pct_rejected,pct_incorrectly_rejected,n_test\n");
        let mut line = |key: &str, r: &EvalRow| {
            let _ = writeln!(
                out,
                "{key},{},{},{},{},{}",
                r.accuracy_non_rejected, r.accuracy_all, r.pct_rejected, r.pct_incorrectly_rejected, r.n_test
            );
        };
        for r in &self.rows {
            line(&r.beta.to_string(), r);
        }
        for (kind, r) in &self.baselines {
            line(kind.name(), r);
        }
        out
    }
}

/// Per-question outcome of scoring, shared by every beta of a sweep.
#[derive(Clone, Debug)]
pub struct ScoredTest {
    pub scored: ScoredQuery,
    pub best_is_correct: bool,
    pub partner_in_cluster: bool,
}

pub fn score_test_set(test: &[Question], index: &QuestionIndex, scorer: &dyn DistanceScorer) -> Result<Vec<ScoredTest>> {
    if test.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    test.par_iter()
        .map(|q| {
            let scored = score_query(q.into(), index, scorer)?;
            let members = index.members(scored.cluster);
            let best_is_correct = scored
                .best
                .is_some_and(|(m, _)| same_template(&q.template, &members[m].template));
            Ok(ScoredTest {
                partner_in_cluster: index.cluster_has_template(scored.cluster, &q.template),
                scored,
                best_is_correct,
            })
        })
        .collect()
}

/// Tallies at threshold `beta`. A match is correct when the chosen question
/// has the same template; a rejection is incorrect when the searched cluster
/// held a same-template question.
pub fn counts_at(scored: &[ScoredTest], beta: f64) -> EvalCounts {
    let mut counts = EvalCounts {
        n_test: scored.len(),
        ..Default::default()
    };
    for s in scored {
        if s.scored.min_distance() < beta {
            counts.correct += s.best_is_correct as usize;
        } else {
            counts.rejected += 1;
            counts.incorrectly_rejected += s.partner_in_cluster as usize;
        }
    }
    counts
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config("beta grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) || grid.iter().any(|b| !(*b >= 0.0)) {
        return Err(Error::Config("beta grid must be non-negative and strictly increasing".into()));
    }
    Ok(())
}

/// Sweeps `beta_grid` over `test`. Baseline rows are left empty; add them
/// with [`baseline_accept_all`] and [`baseline_embeddings`].
pub fn evaluate(
    test: &[Question],
    index: &QuestionIndex,
    scorer: &dyn DistanceScorer,
    beta_grid: &[f64],
) -> Result<EvalReport> {
    validate_grid(beta_grid)?;
    let scored = score_test_set(test, index, scorer)?;
    Ok(EvalReport {
        split: test.first().map(|q| q.split),
        rows: beta_grid.iter().map(|&b| counts_at(&scored, b).row(b)).collect(),
        baselines: Vec::new(),
        corpus_hash: String::new(),
        model_hash: String::new(),
    })
}

/// The model without a threshold: always take the closest cluster member.
pub fn baseline_accept_all(test: &[Question], index: &QuestionIndex, scorer: &dyn DistanceScorer) -> Result<EvalRow> {
    let scored = score_test_set(test, index, scorer)?;
    Ok(counts_at(&scored, f64::INFINITY).row(f64::INFINITY))
}

/// Mean of the known token vectors; `None` when every token is unknown.
pub fn mean_embedding(tokens: &[String], embeddings: &EmbeddingTable) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; embeddings.dim()];
    let mut n = 0usize;
    for v in tokens.iter().filter_map(|t| embeddings.get(t)) {
        sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
        n += 1;
    }
    (n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect())
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Picks, inside the query's nearest cluster, the member whose mean word
/// embedding has the highest cosine with the query's (ties to the smaller
/// id). Never rejects, except that an empty cluster offers no candidate.
/// A query with no known token counts as incorrect.
pub fn baseline_embeddings(test: &[Question], index: &QuestionIndex, embeddings: &EmbeddingTable) -> Result<EvalRow> {
    if test.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    let member_means: Vec<Vec<Option<Vec<f64>>>> = (0..index.cluster_count())
        .into_par_iter()
        .map(|c| {
            index
                .members(c)
                .iter()
                .map(|m| mean_embedding(&m.tokens, embeddings))
                .collect()
        })
        .collect();
    let outcomes: Vec<(bool, bool, bool)> = test
        .par_iter()
        .map(|q| {
            let cluster = index.cluster_of(&q.tokens);
            let members = index.members(cluster);
            if members.is_empty() {
                return (false, true, false);
            }
            let Some(query_mean) = mean_embedding(&q.tokens, embeddings) else {
                return (false, false, false);
            };
            let mut best: Option<(usize, f64)> = None;
            for (i, mean) in member_means[cluster].iter().enumerate() {
                let sim = mean.as_ref().map_or(f64::NEG_INFINITY, |m| cosine(&query_mean, m));
                best = match best {
                    Some((j, bs)) if bs > sim || (bs == sim && members[j].id <= members[i].id) => Some((j, bs)),
                    _ => Some((i, sim)),
                };
            }
            let (chosen, _) = best.unwrap();
            (same_template(&q.template, &members[chosen].template), false, false)
        })
        .collect();
    let mut counts = EvalCounts {
        n_test: test.len(),
        ..Default::default()
    };
    for (correct, rejected, partner) in outcomes {
        counts.correct += correct as usize;
        counts.rejected += rejected as usize;
        counts.incorrectly_rejected += partner as usize;
    }
    Ok(counts.row(f64::INFINITY))
}

#[derive(Clone, Debug, PartialEq)]
pub struct HiddenStateRow {
    pub id: String,
    pub template: String,
    pub vector: Vec<f64>,
}

/// Encoder states of every question whose template occurs at least
/// `min_group_size` times among `questions`.
pub fn export_hidden_states(questions: &[Question], model: &SiameseModel, min_group_size: usize) -> Result<Vec<HiddenStateRow>> {
    let mut group_sizes: BTreeMap<_, usize> = BTreeMap::new();
    for q in questions {
        *group_sizes.entry(q.template).or_default() += 1;
    }
    questions
        .par_iter()
        .filter(|q| group_sizes[&q.template] >= min_group_size)
        .map(|q| {
            Ok(HiddenStateRow {
                id: q.id.clone(),
                template: q.template.label(),
                vector: encode_question(&q.tokens, model)?,
            })
        })
        .collect()
}

/// `id,template,d0..d{H-1}` CSV.
pub fn hidden_states_csv(rows: &[HiddenStateRow], hidden_size: usize) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string(), "template".to_string()];
    header.extend((0..hidden_size).map(|i| format!("d{i}")));
    let csv_err = |e: csv::Error| Error::Config(format!("csv: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.id.clone(), r.template.clone()];
        rec.extend(r.vector.iter().map(|x| x.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))
}
