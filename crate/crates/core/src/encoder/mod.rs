//! The Siamese LSTM regressor: frozen word embeddings feed one LSTM that both
//! branches share, and a softplus head maps `|h_a - h_b|` to a predicted SQL
//! structure distance.

pub mod checkpoint;
pub mod embeddings;
pub mod lstm;
pub mod model;
pub mod pairs;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use embeddings::{load_embeddings, EmbeddingTable, OovPolicy};
pub use lstm::LstmParams;
pub use model::{encode_question, predict_distance, RegressionHead, SiameseModel, SiameseParams, TrainingMetadata};
pub use pairs::{make_pairs, PairExample, PairSample};
pub use train::{batch_loss_and_gradient, train, train_from, TrainConfig, TrainingLog};
