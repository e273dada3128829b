//! Nearest-template lookup with a rejection threshold.
//!
//! A query is routed to its nearest lexical cluster and scored against every
//! member of that cluster only. The closest member is accepted when its
//! predicted distance is strictly below `beta`; otherwise the query is
//! rejected.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Question;
use crate::encoder::{encode_question, SiameseModel};
use crate::error::{Error, Result};
use crate::lexical::LexicalModel;
use crate::sql_template::{sqlsd, ConstituentVector};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatcherConfig {
    pub beta: f64,
}

impl MatcherConfig {
    pub fn new(beta: f64) -> Result<MatcherConfig> {
        if !(beta >= 0.0) {
            return Err(Error::Config(format!("beta must be non-negative, got {beta}")));
        }
        Ok(MatcherConfig { beta })
    }
}

impl Default for MatcherConfig {
    fn default() -> Self {
        MatcherConfig { beta: 0.75 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndexEntry {
    pub id: String,
    pub tokens: Vec<String>,
    pub template: ConstituentVector,
    /// Encoder output for `tokens`, when precomputed.
    pub hidden: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct QuestionIndex {
    lexical: LexicalModel,
    members: Vec<Vec<IndexEntry>>,
}

impl QuestionIndex {
    pub fn lexical(&self) -> &LexicalModel {
        &self.lexical
    }

    pub fn cluster_count(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self, cluster: usize) -> &[IndexEntry] {
        &self.members[cluster]
    }

    pub fn len(&self) -> usize {
        self.members.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cluster_of(&self, tokens: &[String]) -> usize {
        self.lexical.cluster_of(tokens)
    }

    /// Whether `cluster` holds a question with exactly this template.
    pub fn cluster_has_template(&self, cluster: usize, template: &ConstituentVector) -> bool {
        self.members[cluster].iter().any(|m| &m.template == template)
    }
}

/// Places every training question under the cluster recorded for it in
/// `lexical`, optionally caching its encoding under `model`.
pub fn build_index(train: &[Question], lexical: &LexicalModel, model: Option<&SiameseModel>) -> Result<QuestionIndex> {
    let assignments = lexical.clusters.assignments();
    if lexical.ids.len() != assignments.len() {
        return Err(Error::IndexMismatch(format!(
            "{} ids for {} cluster assignments",
            lexical.ids.len(),
            assignments.len()
        )));
    }
    if train.len() != lexical.ids.len() {
        return Err(Error::IndexMismatch(format!(
            "cluster model covers {} questions, training split has {}",
            lexical.ids.len(),
            train.len()
        )));
    }
    let cluster_by_id: HashMap<&str, usize> = lexical
        .ids
        .iter()
        .map(String::as_str)
        .zip(assignments.iter().copied())
        .collect();
    let hidden: Vec<Option<Vec<f64>>> = match model {
        Some(model) => train
            .par_iter()
            .map(|q| encode_question(&q.tokens, model).map(Some))
            .collect::<Result<_>>()?,
        None => vec![None; train.len()],
    };
    let mut members = vec![Vec::new(); lexical.clusters.k()];
    for (q, hidden) in train.iter().zip(hidden) {
        let cluster = *cluster_by_id
            .get(q.id.as_str())
            .ok_or_else(|| Error::IndexMismatch(format!("question {} is not in the cluster model", q.id)))?;
        members[cluster].push(IndexEntry {
            id: q.id.clone(),
            tokens: q.tokens.clone(),
            template: q.template,
            hidden,
        });
    }
    Ok(QuestionIndex {
        lexical: lexical.clone(),
        members,
    })
}

/// A question to be matched. The template is known only for evaluation data.
#[derive(Clone, Copy, Debug)]
pub struct Query<'a> {
    pub tokens: &'a [String],
    pub template: Option<&'a ConstituentVector>,
}

impl<'a> From<&'a Question> for Query<'a> {
    fn from(q: &'a Question) -> Self {
        Query {
            tokens: &q.tokens,
            template: Some(&q.template),
        }
    }
}

/// Anything that predicts a template distance between a query and cluster
/// members.
pub trait DistanceScorer: Sync {
    fn score(&self, query: Query<'_>, members: &[IndexEntry]) -> Result<Vec<f64>>;
}

impl DistanceScorer for SiameseModel {
    fn score(&self, query: Query<'_>, members: &[IndexEntry]) -> Result<Vec<f64>> {
        if members.is_empty() {
            return Ok(Vec::new());
        }
        let q = encode_question(query.tokens, self)?;
        members
            .iter()
            .map(|m| match &m.hidden {
                Some(h) => Ok(self.distance_between(&q, h)),
                None => encode_question(&m.tokens, self).map(|h| self.distance_between(&q, &h)),
            })
            .collect()
    }
}

/// Scores with the true SQLSD of the templates. Needs templated queries.
#[derive(Clone, Copy, Debug, Default)]
pub struct TemplateOracle;

impl DistanceScorer for TemplateOracle {
    fn score(&self, query: Query<'_>, members: &[IndexEntry]) -> Result<Vec<f64>> {
        let template = query
            .template
            .ok_or_else(|| Error::Config("the template oracle needs the query's template".into()))?;
        Ok(members.iter().map(|m| sqlsd(template, &m.template) as f64).collect())
    }
}

/// Best candidate of one cluster, independent of any threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredQuery {
    pub cluster: usize,
    /// Index into the cluster's member list and its distance.
    pub best: Option<(usize, f64)>,
}

impl ScoredQuery {
    pub fn min_distance(&self) -> f64 {
        self.best.map_or(f64::INFINITY, |(_, d)| d)
    }

    pub fn decide(&self, index: &QuestionIndex, beta: f64) -> MatchResult {
        match self.best {
            Some((member, distance)) if distance < beta => MatchResult::Matched {
                train_id: index.members(self.cluster)[member].id.clone(),
                distance,
                cluster: self.cluster,
            },
            _ => MatchResult::Rejected {
                cluster: self.cluster,
                min_distance: self.min_distance(),
            },
        }
    }
}

/// Nearest cluster, then the member with the smallest distance; ties go to
/// the lexicographically smaller question id.
pub fn score_query(query: Query<'_>, index: &QuestionIndex, scorer: &dyn DistanceScorer) -> Result<ScoredQuery> {
    if query.tokens.is_empty() {
        return Err(Error::EmptySequence);
    }
    let cluster = index.cluster_of(query.tokens);
    let members = index.members(cluster);
    let distances = scorer.score(query, members)?;
    let mut best: Option<(usize, f64)> = None;
    for (i, &d) in distances.iter().enumerate() {
        best = match best {
            Some((j, bd)) if bd < d || (bd == d && members[j].id <= members[i].id) => Some((j, bd)),
            _ => Some((i, d)),
        };
    }
    Ok(ScoredQuery { cluster, best })
}

#[derive(Clone, Debug, PartialEq)]
pub enum MatchResult {
    Matched {
        train_id: String,
        distance: f64,
        cluster: usize,
    },
    /// `min_distance` is infinite when the cluster is empty.
    Rejected { cluster: usize, min_distance: f64 },
}

impl MatchResult {
    pub fn is_matched(&self) -> bool {
        matches!(self, MatchResult::Matched { .. })
    }

    pub fn cluster(&self) -> usize {
        match self {
            MatchResult::Matched { cluster, .. } | MatchResult::Rejected { cluster, .. } => *cluster,
        }
    }

    pub fn to_record(&self, id: &str) -> MatchRecord {
        match self {
            MatchResult::Matched {
                train_id,
                distance,
                cluster,
            } => MatchRecord {
                id: id.to_string(),
                status: "matched".into(),
                train_id: Some(train_id.clone()),
                predicted_distance: Some(*distance),
                cluster: *cluster,
            },
            MatchResult::Rejected { cluster, min_distance } => MatchRecord {
                id: id.to_string(),
                status: "rejected".into(),
                train_id: None,
                predicted_distance: min_distance.is_finite().then_some(*min_distance),
                cluster: *cluster,
            },
        }
    }
}

/// Line-oriented form of a [`MatchResult`]. A rejection carries the minimum
/// distance seen, or null for an empty cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub id: String,
    pub status: String,
    pub train_id: Option<String>,
    pub predicted_distance: Option<f64>,
    pub cluster: usize,
}

pub fn match_query(
    query: Query<'_>,
    index: &QuestionIndex,
    scorer: &dyn DistanceScorer,
    config: &MatcherConfig,
) -> Result<MatchResult> {
    Ok(score_query(query, index, scorer)?.decide(index, config.beta))
}
