//! Mini-batch training of the Siamese regressor against SQLSD targets.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::embeddings::EmbeddingTable;
use super::model::{SiameseModel, SiameseParams, TrainingMetadata};
use super::pairs::PairExample;
use crate::error::{Error, Result};
use crate::util::sha256_hex;

/// Examples per gradient-accumulation chunk. Fixed so the summation order, and
/// therefore the result, does not depend on the number of threads.
const CHUNK: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Global gradient-norm clip applied to each batch gradient.
    pub clip_norm: f64,
    pub hidden_size: usize,
    pub max_sequence_length: usize,
    pub pairs_per_epoch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 25,
            batch_size: 1024,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            clip_norm: 5.0,
            hidden_size: 100,
            max_sequence_length: 60,
            pairs_per_epoch: 60_000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive_ints = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("hidden_size", self.hidden_size),
            ("max_sequence_length", self.max_sequence_length),
            ("pairs_per_epoch", self.pairs_per_epoch),
        ];
        if let Some((name, _)) = positive_ints.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        let positive_reals = [
            ("learning_rate", self.learning_rate),
            ("adam_epsilon", self.adam_epsilon),
            ("clip_norm", self.clip_norm),
        ];
        if let Some((name, _)) = positive_reals.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

struct Adam {
    m: SiameseParams,
    v: SiameseParams,
    step: i32,
}

impl Adam {
    fn new(params: &SiameseParams) -> Adam {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut SiameseParams, grads: &SiameseParams, config: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (config.adam_beta1, config.adam_beta2);
        let correction1 = 1.0 - b1.powi(self.step);
        let correction2 = 1.0 - b2.powi(self.step);
        let lr = config.learning_rate;
        let eps = config.adam_epsilon;
        let slots = params
            .slices_mut()
            .into_iter()
            .zip(grads.slices())
            .zip(self.m.slices_mut().into_iter().zip(self.v.slices_mut()));
        for ((p, g), (m, v)) in slots {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / correction1;
                let v_hat = v[i] / correction2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    /// Mean squared error over each epoch's pairs, measured before each
    /// batch's update.
    pub epoch_losses: Vec<f64>,
    pub truncated_sequences: usize,
}

/// Mean squared error and its gradient over `pairs`, accumulated in fixed
/// chunks and summed in order.
pub fn batch_loss_and_gradient(
    params: &SiameseParams,
    embeddings: &EmbeddingTable,
    pairs: &[PairExample<'_>],
    max_sequence_length: usize,
) -> Result<(f64, SiameseParams)> {
    let n = pairs.len() as f64;
    let embed = |tokens: &[String]| -> Vec<&[f64]> {
        tokens
            .iter()
            .take(max_sequence_length)
            .map(|t| embeddings.lookup(t))
            .collect()
    };
    let partials = pairs
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grads = params.zeros_like();
            let mut loss = 0.0;
            for pair in chunk {
                let a = embed(&pair.question_a.tokens);
                let b = embed(&pair.question_b.tokens);
                loss += params.pair_loss(&a, &b, pair.target as f64, Some((&mut grads, 1.0 / n)))?;
            }
            Ok((loss, grads))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    let mut grads = params.zeros_like();
    for (loss, g) in &partials {
        total += loss;
        grads.add_assign(g);
    }
    Ok((total / n, grads))
}

/// Trains from a seeded random initialization. `pairs_for_epoch(e)` supplies
/// the pairs of epoch `e`.
pub fn train<'q, F>(embeddings: Arc<EmbeddingTable>, config: &TrainConfig, pairs_for_epoch: F) -> Result<(SiameseModel, TrainingLog)>
where
    F: FnMut(usize) -> Result<Vec<PairExample<'q>>>,
{
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = SiameseParams::random(embeddings.dim(), config.hidden_size, &mut rng);
    train_from(embeddings, init, config, pairs_for_epoch)
}

/// Trains starting from `init`. Embeddings stay frozen.
pub fn train_from<'q, F>(
    embeddings: Arc<EmbeddingTable>,
    init: SiameseParams,
    config: &TrainConfig,
    mut pairs_for_epoch: F,
) -> Result<(SiameseModel, TrainingLog)>
where
    F: FnMut(usize) -> Result<Vec<PairExample<'q>>>,
{
    config.validate()?;
    if init.input_size() != embeddings.dim() {
        return Err(Error::Config(format!(
            "initial parameters expect inputs of size {}, embeddings have {}",
            init.input_size(),
            embeddings.dim()
        )));
    }
    let mut params = init;
    let mut adam = Adam::new(&params);
    let mut log = TrainingLog::default();

    for epoch in 0..config.epochs {
        let pairs = pairs_for_epoch(epoch)?;
        if pairs.is_empty() {
            return Err(Error::NoTrainingData);
        }
        log.truncated_sequences += pairs
            .iter()
            .flat_map(|p| [p.question_a, p.question_b])
            .filter(|q| q.tokens.len() > config.max_sequence_length)
            .count();
        let mut epoch_loss = 0.0;
        for (batch_index, batch) in pairs.chunks(config.batch_size).enumerate() {
            let (loss, mut grads) =
                batch_loss_and_gradient(&params, &embeddings, batch, config.max_sequence_length)?;
            let norm = grads.norm();
            if !loss.is_finite() || !norm.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_index,
                });
            }
            if norm > config.clip_norm {
                grads.scale(config.clip_norm / norm);
            }
            adam.update(&mut params, &grads, config);
            epoch_loss += loss * batch.len() as f64;
        }
        let epoch_loss = epoch_loss / pairs.len() as f64;
        log::info!("epoch {} loss {:.6}", epoch + 1, epoch_loss);
        log.epoch_losses.push(epoch_loss);
    }
    if log.truncated_sequences > 0 {
        log::info!(
            "{} sequences truncated to {} tokens",
            log.truncated_sequences,
            config.max_sequence_length
        );
    }

    let metadata = TrainingMetadata {
        config_hash: config.hash(),
        embedding_hash: embeddings.hash().to_string(),
        epochs: config.epochs,
        epoch_losses: log.epoch_losses.clone(),
        final_loss: log.epoch_losses.last().copied().unwrap_or(f64::NAN),
        truncated_sequences: log.truncated_sequences,
    };
    let model = SiameseModel::new(embeddings, params, config.max_sequence_length, metadata)?;
    Ok((model, log))
}
