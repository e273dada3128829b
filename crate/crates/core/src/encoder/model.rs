use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::embeddings::EmbeddingTable;
use super::lstm::{sigmoid, LstmParams};
use crate::error::{Error, Result};

pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `softplus(softplus(v) · |h_a - h_b| + b)`. The effective weights
/// `softplus(v)` are positive, so the predicted distance never decreases as
/// the encodings move apart and identical encodings score the minimum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionHead {
    /// Raw weights `v`.
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl RegressionHead {
    pub fn zeros(hidden_size: usize) -> RegressionHead {
        RegressionHead {
            weights: vec![0.0; hidden_size],
            bias: 0.0,
        }
    }

    fn pre_activation(&self, a: &[f64], b: &[f64]) -> f64 {
        self.bias
            + self
                .weights
                .iter()
                .zip(a.iter().zip(b))
                .map(|(v, (x, y))| softplus(*v) * (x - y).abs())
                .sum::<f64>()
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        softplus(self.pre_activation(a, b))
    }
}

/// The trainable part of the Siamese network: one LSTM shared by both
/// branches plus the regression head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiameseParams {
    pub lstm: LstmParams,
    pub head: RegressionHead,
}

impl SiameseParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> SiameseParams {
        SiameseParams {
            lstm: LstmParams::zeros(input_size, hidden_size),
            head: RegressionHead::zeros(hidden_size),
        }
    }

    pub fn random<R: Rng>(input_size: usize, hidden_size: usize, rng: &mut R) -> SiameseParams {
        let lstm = LstmParams::random(input_size, hidden_size, rng);
        let scale = 1.0 / (hidden_size as f64).sqrt();
        let head = RegressionHead {
            weights: (0..hidden_size).map(|_| rng.gen_range(-scale..scale)).collect(),
            bias: 0.0,
        };
        SiameseParams { lstm, head }
    }

    pub fn zeros_like(&self) -> SiameseParams {
        SiameseParams::zeros(self.lstm.input_size, self.lstm.hidden_size)
    }

    pub fn input_size(&self) -> usize {
        self.lstm.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.lstm.hidden_size
    }

    pub fn parameter_count(&self) -> usize {
        self.lstm.parameter_count() + self.head.weights.len() + 1
    }

    /// Every parameter in a fixed order: LSTM input weights, recurrent
    /// weights, biases, head weights, head bias.
    pub fn slices(&self) -> [&[f64]; 5] {
        let [wi, wh, b] = self.lstm.slices();
        [wi, wh, b, &self.head.weights, std::slice::from_ref(&self.head.bias)]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 5] {
        let [wi, wh, b] = self.lstm.slices_mut();
        [wi, wh, b, &mut self.head.weights, std::slice::from_mut(&mut self.head.bias)]
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.parameter_count());
        let mut offset = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        }
    }

    pub fn add_assign(&mut self, other: &SiameseParams) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn norm(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn encode(&self, inputs: &[&[f64]]) -> Result<Vec<f64>> {
        let trace = self.lstm.forward(inputs);
        trace
            .final_hidden()
            .map(<[f64]>::to_vec)
            .ok_or(Error::EmptySequence)
    }

    /// Squared error `(distance(a, b) - target)^2` of one pair. When `grads`
    /// is given, `scale` times its gradient is added into it through the head
    /// and both branches.
    pub fn pair_loss(
        &self,
        a: &[&[f64]],
        b: &[&[f64]],
        target: f64,
        grads: Option<(&mut SiameseParams, f64)>,
    ) -> Result<f64> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::EmptySequence);
        }
        let trace_a = self.lstm.forward(a);
        let trace_b = self.lstm.forward(b);
        let ha = trace_a.final_hidden().unwrap();
        let hb = trace_b.final_hidden().unwrap();
        let z = self.head.pre_activation(ha, hb);
        let prediction = softplus(z);
        let error = prediction - target;
        if let Some((grads, scale)) = grads {
            let dz = scale * 2.0 * error * sigmoid(z);
            grads.head.bias += dz;
            let hidden = self.hidden_size();
            let mut dha = vec![0.0; hidden];
            let mut dhb = vec![0.0; hidden];
            for j in 0..hidden {
                let diff = ha[j] - hb[j];
                let v = self.head.weights[j];
                grads.head.weights[j] += dz * diff.abs() * sigmoid(v);
                let sign = if diff > 0.0 {
                    1.0
                } else if diff < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                dha[j] = dz * softplus(v) * sign;
                dhb[j] = -dha[j];
            }
            self.lstm.backward(a, &trace_a, &dha, &mut grads.lstm);
            self.lstm.backward(b, &trace_b, &dhb, &mut grads.lstm);
        }
        Ok(error * error)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub config_hash: String,
    pub embedding_hash: String,
    pub epochs: usize,
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
    pub truncated_sequences: usize,
}

/// A trained Siamese regressor bound to the embedding table it was trained
/// with. Immutable once built; share it freely across threads.
#[derive(Clone, Debug)]
pub struct SiameseModel {
    embeddings: Arc<EmbeddingTable>,
    params: SiameseParams,
    max_sequence_length: usize,
    metadata: TrainingMetadata,
}

impl SiameseModel {
    pub fn new(
        embeddings: Arc<EmbeddingTable>,
        params: SiameseParams,
        max_sequence_length: usize,
        metadata: TrainingMetadata,
    ) -> Result<SiameseModel> {
        if params.input_size() != embeddings.dim() {
            return Err(Error::Config(format!(
                "model input size {} does not match embedding dimension {}",
                params.input_size(),
                embeddings.dim()
            )));
        }
        if max_sequence_length == 0 {
            return Err(Error::Config("max_sequence_length must be positive".into()));
        }
        Ok(SiameseModel {
            embeddings,
            params,
            max_sequence_length,
            metadata,
        })
    }

    pub fn params(&self) -> &SiameseParams {
        &self.params
    }

    pub fn embeddings(&self) -> &Arc<EmbeddingTable> {
        &self.embeddings
    }

    pub fn metadata(&self) -> &TrainingMetadata {
        &self.metadata
    }

    pub fn max_sequence_length(&self) -> usize {
        self.max_sequence_length
    }

    pub fn hidden_size(&self) -> usize {
        self.params.hidden_size()
    }

    /// Embedded inputs for `tokens`, truncated to the sequence cap.
    pub fn embed<'a>(&'a self, tokens: &[String]) -> Vec<&'a [f64]> {
        tokens
            .iter()
            .take(self.max_sequence_length)
            .map(|t| self.embeddings.lookup(t))
            .collect()
    }

    /// Head applied to two precomputed encodings.
    pub fn distance_between(&self, a: &[f64], b: &[f64]) -> f64 {
        self.params.head.distance(a, b)
    }
}

/// Final LSTM hidden state after reading `tokens` left to right.
pub fn encode_question(tokens: &[String], model: &SiameseModel) -> Result<Vec<f64>> {
    model.params.encode(&model.embed(tokens))
}

/// Predicted SQL structure distance between two token sequences.
pub fn predict_distance(a: &[String], b: &[String], model: &SiameseModel) -> Result<f64> {
    let ha = encode_question(a, model)?;
    let hb = encode_question(b, model)?;
    Ok(model.distance_between(&ha, &hb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn tiny_model(seed: u64) -> SiameseModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let words = ["how", "many", "who", "was", "the"];
        let table = EmbeddingTable::from_entries(
            4,
            words.iter().map(|w| (*w, (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())),
        )
        .unwrap();
        let params = SiameseParams::random(4, 8, &mut rng);
        SiameseModel::new(Arc::new(table), params, 60, TrainingMetadata::default()).unwrap()
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
    }

    #[test]
    fn identical_inputs_give_bias_only() {
        let m = tiny_model(3);
        let d = predict_distance(&toks("how many"), &toks("how many"), &m).unwrap();
        assert_eq!(d, softplus(m.params().head.bias));
    }

    #[test]
    fn symmetric_and_non_negative() {
        let m = tiny_model(5);
        let a = toks("who was the zebra");
        let b = toks("how many the");
        let ab = predict_distance(&a, &b, &m).unwrap();
        let ba = predict_distance(&b, &a, &m).unwrap();
        assert_eq!(ab, ba);
        assert!(ab >= 0.0);
    }

    #[test]
    fn empty_sequence_rejected() {
        let m = tiny_model(1);
        assert!(matches!(encode_question(&[], &m), Err(Error::EmptySequence)));
    }

    #[test]
    fn sequence_cap_truncates() {
        let m = tiny_model(2);
        let capped = SiameseModel::new(m.embeddings().clone(), m.params().clone(), 2, Default::default()).unwrap();
        let long = toks("who was the how many");
        assert_eq!(
            encode_question(&long, &capped).unwrap(),
            encode_question(&toks("who was"), &m).unwrap()
        );
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = SiameseParams::random(3, 2, &mut rng);
        let mut q = p.zeros_like();
        q.set_flat(&p.to_flat());
        assert_eq!(p, q);
        assert_eq!(p.to_flat().len(), p.parameter_count());
    }
}
