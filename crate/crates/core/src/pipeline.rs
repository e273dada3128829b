//! File-based commands: each reads artifacts from earlier steps, writes its
//! own atomically and records a [`RunManifest`] next to them.
//!
//! Artifacts in `model_dir`:
//!
//! | file | written by |
//! |---|---|
//! | `corpus.jsonl`, `cleaning_report.json` | [`cmd_clean`] |
//! | `lexical.bin` | [`cmd_cluster`] |
//! | `model.ckpt`, `loss_log.csv` | [`cmd_train`] |
//!
//! and in `report_dir`: `eval_report.csv` ([`cmd_eval`]) and
//! `hidden_states.csv` ([`cmd_export_embeddings`]).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::corpus::{self, CleaningConfig, CleaningReport, Question, Split};
use crate::encoder::{self, load_checkpoint, load_embeddings, save_checkpoint, EmbeddingTable, SiameseModel, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{self, BaselineKind, EvalReport};
use crate::lexical::{LexicalConfig, LexicalModel};
use crate::matcher::{build_index, match_query, MatchRecord, MatchResult, MatcherConfig, Query};
use crate::util::{atomic_write, derive_seed, file_sha256, sha256_hex};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const CLEANING_REPORT_FILE: &str = "cleaning_report.json";
pub const LEXICAL_FILE: &str = "lexical.bin";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOSS_LOG_FILE: &str = "loss_log.csv";
pub const EVAL_REPORT_FILE: &str = "eval_report.csv";
pub const HIDDEN_STATES_FILE: &str = "hidden_states.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub questions: PathBuf,
    pub tables: PathBuf,
    pub embeddings: PathBuf,
    pub model_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            questions: "data/questions.jsonl".into(),
            tables: "data/tables.jsonl".into(),
            embeddings: "data/embeddings.txt".into(),
            model_dir: "run/model".into(),
            report_dir: "run/report".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BetaGridSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for BetaGridSpec {
    fn default() -> Self {
        BetaGridSpec {
            start: 0.1,
            stop: 2.5,
            step: 0.05,
        }
    }
}

impl BetaGridSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0 && self.start > 0.0 && self.stop >= self.start) {
            return Err(Error::Config(format!(
                "beta grid needs 0 < start <= stop and step > 0, got {}..{} step {}",
                self.start, self.stop, self.step
            )));
        }
        Ok(eval::beta_grid(self.start, self.stop, self.step))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExportConfig {
    /// Only templates with at least this many questions are exported.
    pub min_group_size: usize,
    /// Restrict the export to one split; all retained questions otherwise.
    pub split: Option<Split>,
}

impl Default for ExportConfig {
    fn default() -> Self {
        ExportConfig {
            min_group_size: 500,
            split: None,
        }
    }
}

/// Everything a run depends on. Component seeds are derived from `seed`, so
/// the `seed` fields inside `lexical` and `train` are overwritten.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub seed: u64,
    pub embedding_dim: usize,
    pub cleaning: CleaningConfig,
    pub lexical: LexicalConfig,
    pub train: TrainConfig,
    pub matcher: MatcherConfig,
    pub beta_grid: BetaGridSpec,
    pub eval_split: Split,
    pub export: ExportConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            paths: PathsConfig::default(),
            seed: 0,
            embedding_dim: 300,
            cleaning: CleaningConfig::default(),
            lexical: LexicalConfig::default(),
            train: TrainConfig::default(),
            matcher: MatcherConfig::default(),
            beta_grid: BetaGridSpec::default(),
            eval_split: Split::Test,
            export: ExportConfig::default(),
        }
    }
}

const LEXICAL_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<PipelineConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PipelineConfig::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The config with component seeds filled in from the global seed.
    pub fn resolved(&self) -> PipelineConfig {
        let mut c = self.clone();
        c.lexical.seed = derive_seed(self.seed, LEXICAL_STREAM);
        c.train.seed = derive_seed(self.seed, TRAIN_STREAM);
        c
    }

    pub fn model_path(&self, file: &str) -> PathBuf {
        self.paths.model_dir.join(file)
    }

    pub fn report_path(&self, file: &str) -> PathBuf {
        self.paths.report_dir.join(file)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: PipelineConfig,
    /// Input path to SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, String>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

impl RunManifest {
    fn start(command: &str, config: &PipelineConfig) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            started_unix: unix_now(),
            finished_unix: 0,
        }
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), file_sha256(path)?);
        Ok(())
    }

    /// Writes `bytes` atomically and records its hash.
    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        atomic_write(path, bytes)?;
        self.artifacts.insert(path.display().to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn finish(mut self, dir: &Path) -> Result<PathBuf> {
        self.finished_unix = unix_now();
        let path = dir.join(format!("{}.manifest.json", self.command));
        let mut bytes = serde_json::to_vec_pretty(&self)?;
        bytes.push(b'\n');
        atomic_write(&path, &bytes)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<RunManifest> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn corpus_jsonl(questions: &[Question]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for q in questions {
        serde_json::to_writer(&mut out, q)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn load_corpus(path: &Path) -> Result<Vec<Question>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let q = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(q);
    }
    Ok(out)
}

pub fn split_of(questions: &[Question], split: Split) -> Vec<Question> {
    questions.iter().filter(|q| q.split == split).cloned().collect()
}

#[derive(Clone, Debug)]
pub struct CleanOutput {
    pub questions: Vec<Question>,
    pub report: CleaningReport,
    pub manifest: PathBuf,
}

/// Repairs column types, cleans and tokenizes every split.
pub fn cmd_clean(config: &PipelineConfig) -> Result<CleanOutput> {
    let config = config.resolved();
    let paths = &config.paths;
    let mut manifest = RunManifest::start("clean", &config);
    let (records, tables) = corpus::load_dataset(&paths.questions, &paths.tables)?;
    manifest.input(&paths.questions)?;
    manifest.input(&paths.tables)?;
    let (tables, retype_report) = corpus::repair_tables(&tables, &config.cleaning);
    let (questions, report) = corpus::clean_questions(&records, &tables, &config.cleaning)?;
    let report = report.merge(&retype_report);
    if questions.is_empty() {
        return Err(Error::Config("cleaning retained no questions".into()));
    }
    log::info!(
        "retained {} of {} questions ({} too short, {} mostly non-alphabetic); retyped {} columns to number, {} to date",
        report.retained,
        report.input,
        report.rejected_too_short,
        report.rejected_low_alphabetic,
        report.retyped_to_number,
        report.retyped_to_date
    );
    create_dir(&paths.model_dir)?;
    manifest.write(&config.model_path(CORPUS_FILE), &corpus_jsonl(&questions)?)?;
    let mut report_bytes = serde_json::to_vec_pretty(&report)?;
    report_bytes.push(b'\n');
    manifest.write(&config.model_path(CLEANING_REPORT_FILE), &report_bytes)?;
    let manifest = manifest.finish(&paths.model_dir)?;
    Ok(CleanOutput {
        questions,
        report,
        manifest,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterSummary {
    pub clusters: usize,
    pub vocabulary: usize,
    pub mean_size: f64,
    pub min_size: usize,
    pub max_size: usize,
    pub iterations: usize,
}

impl ClusterSummary {
    pub fn of(model: &LexicalModel) -> ClusterSummary {
        let sizes = model.clusters.cluster_sizes();
        ClusterSummary {
            clusters: sizes.len(),
            vocabulary: model.vocabulary.len(),
            mean_size: sizes.iter().sum::<usize>() as f64 / sizes.len() as f64,
            min_size: sizes.iter().copied().min().unwrap_or(0),
            max_size: sizes.iter().copied().max().unwrap_or(0),
            iterations: model.clusters.iterations(),
        }
    }
}

/// Fits the vocabulary and k-means on the training split of the corpus.
pub fn cmd_cluster(config: &PipelineConfig) -> Result<(LexicalModel, ClusterSummary)> {
    let config = config.resolved();
    let mut manifest = RunManifest::start("cluster", &config);
    let corpus_path = config.model_path(CORPUS_FILE);
    let train = split_of(&load_corpus(&corpus_path)?, Split::Train);
    manifest.input(&corpus_path)?;
    let model = LexicalModel::fit(&train, &config.lexical)?;
    let summary = ClusterSummary::of(&model);
    log::info!(
        "{} clusters over a {}-word vocabulary after {} iterations; size mean {:.1}, min {}, max {}",
        summary.clusters,
        summary.vocabulary,
        summary.iterations,
        summary.mean_size,
        summary.min_size,
        summary.max_size
    );
    manifest.write(&config.model_path(LEXICAL_FILE), &model.to_bytes(&config.lexical))?;
    manifest.finish(&config.paths.model_dir)?;
    Ok((model, summary))
}

/// Training questions in the order the lexical model stores their ids, with
/// their cluster assignments.
fn aligned_train(questions: &[Question], lexical: &LexicalModel) -> Result<(Vec<Question>, Vec<usize>)> {
    let by_id: BTreeMap<&str, &Question> = questions.iter().map(|q| (q.id.as_str(), q)).collect();
    let train = lexical
        .ids
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|q| (*q).clone())
                .ok_or_else(|| Error::IndexMismatch(format!("clustered question {id} is not in the corpus")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((train, lexical.clusters.assignments().to_vec()))
}

pub fn loss_log_csv(losses: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(out, "{},{l}", i + 1);
    }
    out
}

/// Samples fresh pairs each epoch and trains the Siamese model.
pub fn cmd_train(config: &PipelineConfig) -> Result<SiameseModel> {
    let config = config.resolved();
    let mut manifest = RunManifest::start("train", &config);
    let corpus_path = config.model_path(CORPUS_FILE);
    let lexical_path = config.model_path(LEXICAL_FILE);
    let questions = load_corpus(&corpus_path)?;
    let (lexical, _) = LexicalModel::load(&lexical_path)?;
    let embeddings = Arc::new(load_embeddings(&config.paths.embeddings, config.embedding_dim)?);
    manifest.input(&corpus_path)?;
    manifest.input(&lexical_path)?;
    manifest.input(&config.paths.embeddings)?;
    let (train, assignments) = aligned_train(&questions, &lexical)?;

    let seed = config.train.seed;
    let per_epoch = config.train.pairs_per_epoch;
    let (model, log) = encoder::train(embeddings, &config.train, |epoch| {
        let sample = encoder::make_pairs(&train, &assignments, per_epoch, derive_seed(seed, epoch as u64))?;
        if !sample.skipped_strata.is_empty() {
            log::debug!("epoch {}: no pairs for distances {:?}", epoch + 1, sample.skipped_strata);
        }
        Ok(sample.pairs)
    })?;
    manifest.write(&config.model_path(LOSS_LOG_FILE), loss_log_csv(&log.epoch_losses).as_bytes())?;
    let ckpt = config.model_path(CHECKPOINT_FILE);
    save_checkpoint(&ckpt, &model, Some(&config.train))?;
    manifest.artifacts.insert(ckpt.display().to_string(), file_sha256(&ckpt)?);
    manifest.finish(&config.paths.model_dir)?;
    Ok(model)
}

/// Loaded inputs shared by match, eval and export.
pub struct Trained {
    pub questions: Vec<Question>,
    pub lexical: LexicalModel,
    pub model: SiameseModel,
    pub embeddings: Arc<EmbeddingTable>,
}

pub fn load_trained(config: &PipelineConfig) -> Result<Trained> {
    let questions = load_corpus(&config.model_path(CORPUS_FILE))?;
    let (lexical, _) = LexicalModel::load(&config.model_path(LEXICAL_FILE))?;
    let embeddings = Arc::new(load_embeddings(&config.paths.embeddings, config.embedding_dim)?);
    let (model, _) = load_checkpoint(&config.model_path(CHECKPOINT_FILE), embeddings.clone())?;
    Ok(Trained {
        questions,
        lexical,
        model,
        embeddings,
    })
}

/// Matches one question against the training set. Writes nothing.
pub fn cmd_match(config: &PipelineConfig, question_text: &str) -> Result<(MatchResult, MatchRecord)> {
    let tokens = corpus::tokenize(question_text);
    if tokens.is_empty() {
        return Err(Error::EmptySequence);
    }
    let matcher = MatcherConfig::new(config.matcher.beta)?;
    let trained = load_trained(config)?;
    let (train, _) = aligned_train(&trained.questions, &trained.lexical)?;
    let index = build_index(&train, &trained.lexical, Some(&trained.model))?;
    let result = match_query(
        Query {
            tokens: &tokens,
            template: None,
        },
        &index,
        &trained.model,
        &matcher,
    )?;
    let record = result.to_record("query");
    Ok((result, record))
}

/// Beta sweep on the evaluation split plus both baseline rows.
pub fn cmd_eval(config: &PipelineConfig) -> Result<EvalReport> {
    let config = config.resolved();
    let grid = config.beta_grid.values()?;
    let mut manifest = RunManifest::start("eval", &config);
    let trained = load_trained(&config)?;
    for p in [
        config.model_path(CORPUS_FILE),
        config.model_path(LEXICAL_FILE),
        config.model_path(CHECKPOINT_FILE),
        config.paths.embeddings.clone(),
    ] {
        manifest.input(&p)?;
    }
    let (train, _) = aligned_train(&trained.questions, &trained.lexical)?;
    let test = split_of(&trained.questions, config.eval_split);
    if test.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    let index = build_index(&train, &trained.lexical, Some(&trained.model))?;
    let mut report = eval::evaluate(&test, &index, &trained.model, &grid)?;
    report.split = Some(config.eval_split);
    report.baselines.push((
        BaselineKind::EmbeddingsAverage,
        eval::baseline_embeddings(&test, &index, &trained.embeddings)?,
    ));
    report.baselines.push((
        BaselineKind::AcceptAll,
        eval::baseline_accept_all(&test, &index, &trained.model)?,
    ));
    report.corpus_hash = file_sha256(&config.model_path(CORPUS_FILE))?;
    report.model_hash = file_sha256(&config.model_path(CHECKPOINT_FILE))?;
    if let Some(best) = report.best_row() {
        log::info!(
            "best beta {}: accuracy_all {:.3}, accuracy_non_rejected {:.3}, rejected {:.3}",
            best.beta,
            best.accuracy_all,
            best.accuracy_non_rejected,
            best.pct_rejected
        );
    }
    create_dir(&config.paths.report_dir)?;
    manifest.write(&config.report_path(EVAL_REPORT_FILE), report.to_csv().as_bytes())?;
    manifest.finish(&config.paths.report_dir)?;
    Ok(report)
}

/// Writes encoder states for plotting; returns the number of rows.
pub fn cmd_export_embeddings(config: &PipelineConfig) -> Result<usize> {
    let config = config.resolved();
    let mut manifest = RunManifest::start("export-embeddings", &config);
    let trained = load_trained(&config)?;
    for p in [
        config.model_path(CORPUS_FILE),
        config.model_path(CHECKPOINT_FILE),
        config.paths.embeddings.clone(),
    ] {
        manifest.input(&p)?;
    }
    let questions = match config.export.split {
        Some(split) => split_of(&trained.questions, split),
        None => trained.questions.clone(),
    };
    let rows = eval::export_hidden_states(&questions, &trained.model, config.export.min_group_size)?;
    let bytes = eval::hidden_states_csv(&rows, trained.model.hidden_size())?;
    create_dir(&config.paths.report_dir)?;
    manifest.write(&config.report_path(HIDDEN_STATES_FILE), &bytes)?;
    manifest.finish(&config.paths.report_dir)?;
    Ok(rows.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_toml() {
        let mut c = PipelineConfig::default();
        c.lexical.k = 20;
        c.train.hidden_size = 32;
        c.export.split = Some(Split::Train);
        let back = PipelineConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let c = PipelineConfig::from_toml_str("seed = 9\n[lexical]\nk = 3\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.lexical.k, 3);
        assert_eq!(c.lexical.alpha, 50);
        assert_eq!(c.train.epochs, 25);
        assert!(PipelineConfig::from_toml_str("[lexical]\nk = \"x\"\n").is_err());
    }

    #[test]
    fn seeds_fan_out() {
        let c = PipelineConfig {
            seed: 4,
            ..Default::default()
        }
        .resolved();
        assert_ne!(c.lexical.seed, c.train.seed);
        assert_eq!(c, c.resolved());
    }

    #[test]
    fn default_grid_has_49_values() {
        assert_eq!(BetaGridSpec::default().values().unwrap().len(), 49);
        assert!(BetaGridSpec { step: 0.0, ..Default::default() }.values().is_err());
    }
}
