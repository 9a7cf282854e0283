//! English/Hindi multilingual machine comprehension.
//!
//! The crate covers the whole extractive-QA pipeline used to study
//! cross-lingual transfer between English and Hindi:
//!
//! - [`data`]: SQuAD v1.1/v2.0 datasets with per-question language tags.
//! - [`preprocess`]: repair of machine-translated SQuAD tuples and MMQA conversion.
//! - [`variants`]: the four question/passage language settings.
//! - [`engine`]: tokenizer, a small trainable transformer encoder, the start/end span head,
//!   training and prediction.
//! - [`metrics`]: SQuAD-style exact match and F1 for Latin and Devanagari text.
//! - [`harness`]: the fine-tune cascade and the checkpoint × dataset × setting evaluation grid.
//!
//! Numeric code in [`engine`] is generic over [`Scalar`]; the aliases below pin it to `f64`,
//! which is what training, checkpoints and the CLI use.

pub mod data;
pub mod engine;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod preprocess;
mod scalar;
pub mod synth;
pub mod variants;

pub use data::{Answer, Article, Dataset, LanguageTag, Paragraph, QuestionAnswer};
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use variants::MultilingualSetting;

/// Encoder in double precision.
pub type Encoder = engine::Encoder<f64>;
/// Encoder in single precision.
pub type Encoder32 = engine::Encoder<f32>;
/// Span head in double precision.
pub type SpanHead = engine::SpanHead<f64>;
/// Span scores in double precision.
pub type SpanScores = engine::SpanScores<f64>;
/// Checkpoint in double precision.
pub type Checkpoint = engine::Checkpoint<f64>;
