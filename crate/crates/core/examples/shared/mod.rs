//! Helpers shared by the examples.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use sqlpattern::corpus::{clean_questions, repair_tables, CleaningConfig, Question, Split};
use sqlpattern::encoder::{EmbeddingTable, SiameseModel};
use sqlpattern::lexical::{LexicalConfig, LexicalModel};
use sqlpattern::synth::{generate, SynthConfig};

pub struct Cleaned {
    pub train: Vec<Question>,
    pub test: Vec<Question>,
    pub embeddings: Arc<EmbeddingTable>,
}

/// A generated corpus, cleaned in memory.
pub fn cleaned(config: &SynthConfig) -> sqlpattern::Result<Cleaned> {
    let corpus = generate(config);
    let tables: BTreeMap<_, _> = corpus.tables.iter().map(|t| (t.table_id.clone(), t.clone())).collect();
    let (tables, _) = repair_tables(&tables, &CleaningConfig::default());
    let (questions, _) = clean_questions(&corpus.records, &tables, &CleaningConfig::default())?;
    let embeddings = EmbeddingTable::from_entries(config.embedding_dim, corpus.embeddings.iter().map(|(w, v)| (w.as_str(), v.clone())))?;
    Ok(Cleaned {
        train: questions.iter().filter(|q| q.split == Split::Train).cloned().collect(),
        test: questions.iter().filter(|q| q.split == Split::Test).cloned().collect(),
        embeddings: Arc::new(embeddings),
    })
}

/// Clusters and trains a small model on `data`.
pub fn trained(data: &Cleaned, epochs: usize) -> sqlpattern::Result<(LexicalModel, SiameseModel)> {
    let lexical = LexicalModel::fit(&data.train, &LexicalConfig { alpha: 15, k: 10, seed: 1, ..Default::default() })?;
    let config = sqlpattern::encoder::TrainConfig {
        epochs,
        hidden_size: 24,
        batch_size: 64,
        learning_rate: 3e-3,
        pairs_per_epoch: 3000,
        seed: 2,
        ..Default::default()
    };
    let assignments = lexical.clusters.assignments().to_vec();
    let (model, _) = sqlpattern::encoder::train(data.embeddings.clone(), &config, |epoch| {
        Ok(sqlpattern::encoder::make_pairs(&data.train, &assignments, config.pairs_per_epoch, epoch as u64)?.pairs)
    })?;
    Ok((lexical, model))
}
