//! Adaptive streaming hashtag recommendation.
//!
//! The crate tracks the top-n trending hashtags of a timestamped post
//! stream, measures day-over-day trend movement with a ranked Jaccard
//! distance, and realigns an embedding-translation recommender whenever
//! the distance crosses a threshold. The moving parts:
//!
//! - [`stream`]: post parsing, hashtag extraction, calendar-day windows.
//! - [`topology`]: the staged spout/reader/combiner/detector dataflow
//!   that counts hashtags per tumbling window.
//! - [`trend`]: trending sets, the ranked Jaccard distance, shift tests.
//! - [`embedding`]: a CBOW word2vec hashtag space with cosine k-NN.
//! - [`semantic`]: the encoder + MLP mapper stack that translates post
//!   text into the hashtag space, with transfer-learning and fine-tuning
//!   phases.
//! - [`adapt`]: bootstrap, the daily detection loop, strategy-selectable
//!   adaptation, and the hot-swappable model registry.
//! - [`eval`]: recall@k evaluation, daily/weekly aggregation, and a
//!   synthetic drift-corpus generator.

pub mod adapt;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod semantic;
pub mod stream;
pub mod text;
pub mod topology;
pub mod trend;

pub use error::CoreError;
