//! Extractive span-prediction engine.

mod checkpoint;
mod encoder;
mod head;
mod matrix;
mod predict;
mod tokenize;
mod train;
mod vocab;

pub use checkpoint::{Checkpoint, Provenance, FORMAT_VERSION, MAGIC};
pub use encoder::{Encoder, EncoderConfig, ForwardCache, LayerLayout, ParamLayout};
pub use head::{
    candidate_positions, decode_span, head_backward, score_spans, softmax_over, span_loss, PredictedSpan, SpanHead,
    SpanLoss, SpanScores,
};
pub use matrix::Matrix;
pub use predict::{predict, predict_one, Predictions};
pub use tokenize::{char_to_token_span, tokenize_pair, tokenize_text, TokenizedInput};
pub use train::{
    build_examples, example_gradient, fine_tune, FeatureStats, Hyperparams, Optimizer, TrainExample, TrainReport,
};
pub use vocab::{build_vocab, split_words, Vocabulary, CLS, MAX_PIECE_CHARS, PAD, SEP, UNK};
