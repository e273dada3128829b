//! Semantic pattern similarity for natural-language questions over SQL
//! tables.
//!
//! Two questions are similar when their SQL queries share a *template*: the
//! select-column type, the aggregator and the number of `=`, `>` and `<`
//! conditions. A Siamese LSTM learns to predict the number of mismatching
//! template constituents between two questions. At query time an unseen
//! question is routed to its nearest lexical k-means cluster, compared with
//! every member, and either matched to the closest one or rejected when no
//! member is predicted closer than a threshold `beta`.
//!
//! Module map:
//!
//! * [`corpus`]: WikiSQL-layout loading, column-type repair, cleaning, tokenizing
//! * [`sql_template`]: query dialect, templates and the structure distance [`sqlsd`](sql_template::sqlsd)
//! * [`lexical`]: vocabulary, one-hot vectors, k-means
//! * [`encoder`]: embeddings, LSTM, training, checkpoints
//! * [`matcher`]: cluster-restricted nearest-template search with rejection
//! * [`eval`]: threshold sweeps, baselines, hidden-state export
//! * [`pipeline`]: the file-based commands behind the `sqlpattern` binary
//! * [`synth`]: a synthetic WikiSQL-style corpus generator

pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod lexical;
pub mod matcher;
pub mod pipeline;
pub mod sql_template;
pub mod synth;
pub mod util;

pub use error::{Error, Result};
