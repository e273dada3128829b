//! Frequency-thresholded vocabulary, binary bag-of-words vectors and k-means
//! over them.
//!
//! Questions are short, so the bag is kept sparse: a [`OneHotVector`] is the
//! sorted list of active vocabulary indices. Centroids are dense. The squared
//! distance between a binary vector `x` and a centroid `c` expands to
//! `|x| - 2 * sum(c[i] for i in x) + ||c||^2`, which needs only the active
//! indices plus a cached centroid norm.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Question;
use crate::error::{Error, Result};
use crate::util::atomic_write;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LexicalConfig {
    /// A word enters the vocabulary when its training frequency is strictly
    /// greater than this.
    pub alpha: usize,
    pub k: usize,
    pub max_iterations: usize,
    /// Stop early once inertia improves by no more than this. Zero means
    /// iterate until assignments stop changing.
    pub convergence_epsilon: f64,
    pub seed: u64,
}

impl Default for LexicalConfig {
    fn default() -> Self {
        LexicalConfig {
            alpha: 50,
            k: 500,
            max_iterations: 100,
            convergence_epsilon: 0.0,
            seed: 0,
        }
    }
}

impl LexicalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 1 || self.k < 1 || self.max_iterations < 1 {
            return Err(Error::Config(
                "lexical config needs alpha >= 1, k >= 1 and max_iterations >= 1".into(),
            ));
        }
        if !(self.convergence_epsilon >= 0.0) {
            return Err(Error::Config("convergence_epsilon must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    frequencies: Vec<usize>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from words already in index order.
    pub fn from_words(words: Vec<String>, frequencies: Vec<usize>) -> Vocabulary {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocabulary {
            words,
            frequencies,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn frequencies(&self) -> &[usize] {
        &self.frequencies
    }
}

/// Counts token frequencies over `questions` and keeps words seen more than
/// `alpha` times, most frequent first with ties in lexicographic order.
/// Callers pass the training split only.
pub fn build_vocab(questions: &[Question], alpha: usize) -> Result<Vocabulary> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for q in questions {
        for t in &q.tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c > alpha).collect();
    if kept.is_empty() {
        return Err(Error::EmptyVocabulary { alpha });
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let (words, frequencies) = kept.into_iter().map(|(w, c)| (w.to_string(), c)).unzip();
    Ok(Vocabulary::from_words(words, frequencies))
}

/// Binary presence vector: sorted, de-duplicated vocabulary indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OneHotVector(Vec<u32>);

impl OneHotVector {
    pub fn from_indices(mut indices: Vec<u32>) -> OneHotVector {
        indices.sort_unstable();
        indices.dedup();
        OneHotVector(indices)
    }

    pub fn indices(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Dense 0/1 form of dimension `dim`.
    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        for &i in &self.0 {
            v[i as usize] = 1.0;
        }
        v
    }
}

pub fn encode(tokens: &[String], vocab: &Vocabulary) -> OneHotVector {
    OneHotVector::from_indices(
        tokens
            .iter()
            .filter_map(|t| vocab.index_of(t).map(|i| i as u32))
            .collect(),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterModel {
    dim: usize,
    centroids: Vec<Vec<f64>>,
    norms: Vec<f64>,
    /// Cluster of each fitted point, aligned with the input order.
    assignments: Vec<usize>,
    /// Inertia after each assignment step.
    inertia_history: Vec<f64>,
}

impl ClusterModel {
    pub fn from_parts(dim: usize, centroids: Vec<Vec<f64>>, assignments: Vec<usize>, inertia_history: Vec<f64>) -> Result<ClusterModel> {
        if centroids.is_empty() || centroids.iter().any(|c| c.len() != dim) {
            return Err(Error::IndexMismatch(format!(
                "cluster model needs at least one centroid of dimension {dim}"
            )));
        }
        if let Some(&bad) = assignments.iter().find(|&&a| a >= centroids.len()) {
            return Err(Error::IndexMismatch(format!(
                "assignment to cluster {bad} but only {} centroids",
                centroids.len()
            )));
        }
        let norms = centroids.iter().map(|c| c.iter().map(|x| x * x).sum()).collect();
        Ok(ClusterModel {
            dim,
            centroids,
            norms,
            assignments,
            inertia_history,
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn inertia_history(&self) -> &[f64] {
        &self.inertia_history
    }

    pub fn iterations(&self) -> usize {
        self.inertia_history.len()
    }

    pub fn inertia(&self) -> f64 {
        self.inertia_history.last().copied().unwrap_or(0.0)
    }

    /// Point indices of each cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.k()];
        for (point, &cluster) in self.assignments.iter().enumerate() {
            members[cluster].push(point);
        }
        members
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &c in &self.assignments {
            sizes[c] += 1;
        }
        sizes
    }

    pub fn squared_distance(&self, vector: &OneHotVector, cluster: usize) -> f64 {
        squared_distance(vector, &self.centroids[cluster], self.norms[cluster])
    }
}

/// A fitted vocabulary and cluster model over named training questions.
/// `ids[i]` is the question whose cluster is `clusters.assignments()[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LexicalModel {
    pub vocabulary: Vocabulary,
    pub clusters: ClusterModel,
    pub ids: Vec<String>,
}

impl LexicalModel {
    /// Builds the vocabulary from `train` and clusters its questions.
    pub fn fit(train: &[Question], config: &LexicalConfig) -> Result<LexicalModel> {
        config.validate()?;
        let vocabulary = build_vocab(train, config.alpha)?;
        let vectors: Vec<OneHotVector> = train.iter().map(|q| encode(&q.tokens, &vocabulary)).collect();
        let clusters = kmeans_fit(&vectors, vocabulary.len(), config)?;
        Ok(LexicalModel {
            vocabulary,
            clusters,
            ids: train.iter().map(|q| q.id.clone()).collect(),
        })
    }

    pub fn cluster_of(&self, tokens: &[String]) -> usize {
        assign_cluster(&encode(tokens, &self.vocabulary), &self.clusters)
    }
}

/// Magic of the lexical model file. The layout mirrors the model checkpoint:
/// magic, `u32` version, `u64` header length, JSON header, then the
/// centroids as little-endian `f64`, row by row.
pub const LEXICAL_MAGIC: &[u8; 8] = b"SPSLEXIC";
pub const LEXICAL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LexicalHeader {
    dim: usize,
    k: usize,
    words: Vec<String>,
    frequencies: Vec<usize>,
    ids: Vec<String>,
    assignments: Vec<usize>,
    inertia_history: Vec<f64>,
    config: LexicalConfig,
}

impl LexicalModel {
    pub fn to_bytes(&self, config: &LexicalConfig) -> Vec<u8> {
        let header = LexicalHeader {
            dim: self.clusters.dim,
            k: self.clusters.k(),
            words: self.vocabulary.words().to_vec(),
            frequencies: self.vocabulary.frequencies().to_vec(),
            ids: self.ids.clone(),
            assignments: self.clusters.assignments.clone(),
            inertia_history: self.clusters.inertia_history.clone(),
            config: *config,
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(20 + header.len() + 8 * self.clusters.k() * self.clusters.dim);
        out.extend_from_slice(LEXICAL_MAGIC);
        out.extend_from_slice(&LEXICAL_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for x in self.clusters.centroids.iter().flatten() {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<(LexicalModel, LexicalConfig)> {
        let bad = |m: &str| Error::artifact(origin, m);
        if bytes.len() < 20 || &bytes[..8] != LEXICAL_MAGIC {
            return Err(bad("not a lexical model file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != LEXICAL_VERSION {
            return Err(bad(&format!("unsupported lexical model version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let header_end = 20usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated header"))?;
        let h: LexicalHeader = serde_json::from_slice(&bytes[20..header_end])?;
        let body = &bytes[header_end..];
        if h.words.len() != h.dim || h.frequencies.len() != h.dim || h.ids.len() != h.assignments.len() {
            return Err(bad("header fields disagree"));
        }
        if h.k == 0 || body.len() != 8 * h.k * h.dim {
            return Err(bad("centroid block has the wrong length"));
        }
        let flat: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let centroids = if h.dim == 0 {
            vec![Vec::new(); h.k]
        } else {
            flat.chunks(h.dim).map(<[f64]>::to_vec).collect()
        };
        let clusters = ClusterModel::from_parts(h.dim, centroids, h.assignments, h.inertia_history)
            .map_err(|e| bad(&e.to_string()))?;
        let model = LexicalModel {
            vocabulary: Vocabulary::from_words(h.words, h.frequencies),
            clusters,
            ids: h.ids,
        };
        Ok((model, h.config))
    }

    pub fn save(&self, path: &Path, config: &LexicalConfig) -> Result<()> {
        atomic_write(path, &self.to_bytes(config))
    }

    pub fn load(path: &Path) -> Result<(LexicalModel, LexicalConfig)> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        LexicalModel::from_bytes(&bytes, path)
    }
}

fn squared_distance(x: &OneHotVector, centroid: &[f64], centroid_norm: f64) -> f64 {
    let dot: f64 = x.indices().iter().map(|&i| centroid[i as usize]).sum();
    (x.len() as f64 - 2.0 * dot + centroid_norm).max(0.0)
}

fn nearest(x: &OneHotVector, centroids: &[Vec<f64>], norms: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, (centroid, &norm)) in centroids.iter().zip(norms).enumerate() {
        let d = squared_distance(x, centroid, norm);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Nearest centroid by Euclidean distance; ties go to the lowest cluster id.
pub fn assign_cluster(vector: &OneHotVector, model: &ClusterModel) -> usize {
    nearest(vector, &model.centroids, &model.norms).0
}

fn norms_of(centroids: &[Vec<f64>]) -> Vec<f64> {
    centroids.iter().map(|c| c.iter().map(|x| x * x).sum()).collect()
}

fn kmeans_plus_plus(vectors: &[OneHotVector], k: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = vectors.len();
    let first = &vectors[rng.gen_range(0..n)];
    let mut centroids = vec![first.to_dense(dim)];
    let first_norm = first.len() as f64;
    let mut closest: Vec<f64> = vectors
        .par_iter()
        .map(|x| squared_distance(x, &centroids[0], first_norm))
        .collect();
    while centroids.len() < k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in closest.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        let centroid = vectors[pick].to_dense(dim);
        let norm = vectors[pick].len() as f64;
        closest
            .par_iter_mut()
            .zip(vectors.par_iter())
            .for_each(|(best, x)| *best = best.min(squared_distance(x, &centroid, norm)));
        centroids.push(centroid);
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Stops when an assignment step changes nothing, when inertia improves by no
/// more than `convergence_epsilon` (if positive), or after `max_iterations`
/// assignment steps. A cluster left empty by an update is reseeded at the
/// point farthest from its nearest centroid, so the model always keeps `k`
/// centroids.
pub fn kmeans_fit(vectors: &[OneHotVector], dim: usize, config: &LexicalConfig) -> Result<ClusterModel> {
    config.validate()?;
    if vectors.len() < config.k {
        return Err(Error::TooFewPoints {
            k: config.k,
            points: vectors.len(),
        });
    }
    if let Some(bad) = vectors.iter().flat_map(|v| v.indices()).find(|&&i| i as usize >= dim) {
        return Err(Error::IndexMismatch(format!("vector index {bad} outside dimension {dim}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut centroids = kmeans_plus_plus(vectors, config.k, dim, &mut rng);
    let mut norms = norms_of(&centroids);

    let assign_all = |centroids: &[Vec<f64>], norms: &[f64]| -> (Vec<usize>, Vec<f64>) {
        vectors.par_iter().map(|x| nearest(x, centroids, norms)).unzip()
    };

    let (mut assignments, distances) = assign_all(&centroids, &norms);
    let mut inertia_history = vec![distances.iter().sum::<f64>()];

    while inertia_history.len() < config.max_iterations {
        // Sums run in point order so the result does not depend on threading.
        let mut sums = vec![vec![0.0; dim]; config.k];
        let mut counts = vec![0usize; config.k];
        for (x, &c) in vectors.iter().zip(&assignments) {
            counts[c] += 1;
            for &i in x.indices() {
                sums[c][i as usize] += 1.0;
            }
        }
        for ((centroid, sum), &count) in centroids.iter_mut().zip(sums).zip(&counts) {
            if count > 0 {
                *centroid = sum.into_iter().map(|s| s / count as f64).collect();
            }
        }
        norms = norms_of(&centroids);

        let empty: Vec<usize> = (0..config.k).filter(|&c| counts[c] == 0).collect();
        if !empty.is_empty() {
            let mut used = vec![false; vectors.len()];
            for c in empty {
                let mut far = (usize::MAX, -1.0);
                for (p, x) in vectors.iter().enumerate() {
                    if used[p] {
                        continue;
                    }
                    let d = nearest(x, &centroids, &norms).1;
                    if d > far.1 {
                        far = (p, d);
                    }
                }
                if far.0 == usize::MAX {
                    break;
                }
                used[far.0] = true;
                centroids[c] = vectors[far.0].to_dense(dim);
                norms[c] = vectors[far.0].len() as f64;
            }
        }

        let (next, distances) = assign_all(&centroids, &norms);
        let inertia: f64 = distances.iter().sum();
        let previous = *inertia_history.last().unwrap();
        inertia_history.push(inertia);
        let unchanged = next == assignments;
        assignments = next;
        if unchanged || (config.convergence_epsilon > 0.0 && previous - inertia <= config.convergence_epsilon) {
            break;
        }
    }

    ClusterModel::from_parts(dim, centroids, assignments, inertia_history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;
    use crate::sql_template::{Aggregator, ColumnType, ConstituentVector};

    fn question(text: &str) -> Question {
        Question {
            id: text.into(),
            tokens: text.split_whitespace().map(String::from).collect(),
            template: ConstituentVector::new(ColumnType::Text, Aggregator::None, 0, 0, 0),
            split: Split::Train,
        }
    }

    fn config(k: usize, seed: u64) -> LexicalConfig {
        LexicalConfig {
            alpha: 1,
            k,
            max_iterations: 100,
            convergence_epsilon: 0.0,
            seed,
        }
    }

    #[test]
    fn strict_frequency_threshold() {
        let mut qs = vec![question("the"); 51];
        qs.extend(vec![question("a"); 50]);
        let vocab = build_vocab(&qs, 50).unwrap();
        assert_eq!(vocab.words(), ["the"]);
    }

    #[test]
    fn tiny_corpus_vocabulary() {
        let qs = vec![question("who was the winner"); 3];
        let vocab = build_vocab(&qs, 2).unwrap();
        // All four words occur three times; ties sort lexicographically.
        assert_eq!(vocab.words(), ["the", "was", "who", "winner"]);
        assert!(matches!(build_vocab(&qs, 3), Err(Error::EmptyVocabulary { alpha: 3 })));
    }

    #[test]
    fn encoding_is_binary() {
        let vocab = build_vocab(&vec![question("who was it"); 3], 1).unwrap();
        let toks = |s: &str| s.split_whitespace().map(String::from).collect::<Vec<_>>();
        assert!(encode(&toks("zebra yak"), &vocab).is_empty());
        assert_eq!(encode(&toks("who who was"), &vocab).len(), 2);
    }

    #[test]
    fn k_one_centroid_is_mean() {
        let vs = vec![
            OneHotVector::from_indices(vec![0, 1]),
            OneHotVector::from_indices(vec![1]),
            OneHotVector::from_indices(vec![2]),
            OneHotVector::default(),
        ];
        let model = kmeans_fit(&vs, 3, &config(1, 3)).unwrap();
        assert_eq!(model.centroids()[0], vec![0.25, 0.5, 0.25]);
    }

    #[test]
    fn identical_points_have_zero_inertia() {
        let vs = vec![OneHotVector::from_indices(vec![1, 3]); 10];
        let model = kmeans_fit(&vs, 4, &config(3, 9)).unwrap();
        assert_eq!(model.inertia_history()[0], 0.0);
        assert_eq!(model.inertia(), 0.0);
        assert_eq!(model.k(), 3);
    }

    #[test]
    fn too_few_points() {
        let vs = vec![OneHotVector::default(); 2];
        assert!(matches!(kmeans_fit(&vs, 1, &config(3, 0)), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn empty_vector_goes_to_smallest_norm_centroid() {
        let model = ClusterModel::from_parts(
            2,
            vec![vec![1.0, 1.0], vec![0.5, 0.0], vec![0.0, 0.5]],
            vec![],
            vec![],
        )
        .unwrap();
        // Norms 2.0, 0.25, 0.25: tie between 1 and 2 resolves to 1.
        assert_eq!(assign_cluster(&OneHotVector::default(), &model), 1);
        assert_eq!(assign_cluster(&OneHotVector::from_indices(vec![0, 1]), &model), 0);
    }

    #[test]
    fn lexical_model_round_trips() {
        let qs: Vec<Question> = ["who is the coach", "who is the winner", "how many goals were scored", "how many wins"]
            .iter()
            .map(|t| question(t))
            .collect();
        let config = LexicalConfig { alpha: 1, k: 2, seed: 3, ..Default::default() };
        let model = LexicalModel::fit(&qs, &config).unwrap();
        let bytes = model.to_bytes(&config);
        let (back, back_config) = LexicalModel::from_bytes(&bytes, Path::new("m")).unwrap();
        assert_eq!(back, model);
        assert_eq!(back_config, config);
        assert!(LexicalModel::from_bytes(&bytes[..bytes.len() - 1], Path::new("m")).is_err());
    }
}
