use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, Provenance};
use super::encoder::Encoder;
use super::head::{head_backward, score_spans, span_loss, SpanHead};
use super::tokenize::{char_to_token_span, tokenize_pair, TokenizedInput};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-6,
        }
    }
}

/// Fine-tuning and prediction settings. Defaults are the BERT SQuAD recipe: sequence/query/
/// answer limits 384/64/30, batches 12/8, learning rate 5e-5 with 10% warmup, 3 epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub max_seq_len: usize,
    pub max_query_len: usize,
    pub max_answer_tokens: usize,
    pub train_batch: usize,
    pub predict_batch: usize,
    pub learning_rate: f64,
    pub warmup_proportion: f64,
    pub epochs: f64,
    /// Overrides the epoch budget when set.
    pub max_steps: Option<usize>,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Train on and predict the null answer for unanswerable questions.
    pub with_negative: bool,
    pub null_score_threshold: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            max_seq_len: 384,
            max_query_len: 64,
            max_answer_tokens: 30,
            train_batch: 12,
            predict_batch: 8,
            learning_rate: 5e-5,
            warmup_proportion: 0.1,
            epochs: 3.0,
            max_steps: None,
            seed: 0,
            optimizer: Optimizer::Sgd,
            with_negative: false,
            null_score_threshold: 0.0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("max_seq_len", self.max_seq_len),
            ("max_query_len", self.max_query_len),
            ("max_answer_tokens", self.max_answer_tokens),
            ("train_batch", self.train_batch),
            ("predict_batch", self.predict_batch),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.max_seq_len <= self.max_query_len + 3 {
            return Err(Error::Config("max_seq_len leaves no room for the passage".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.epochs > 0.0) {
            return Err(Error::Config("learning_rate and epochs must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.warmup_proportion) {
            return Err(Error::Config("warmup_proportion must lie in [0, 1]".into()));
        }
        if self.max_steps == Some(0) {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        Ok(())
    }

    pub fn total_steps(&self, instances: usize) -> usize {
        self.max_steps
            .unwrap_or_else(|| ((self.epochs * instances as f64) / self.train_batch as f64).ceil() as usize)
            .max(1)
    }

    /// Linear warmup from 0 over the first `warmup_proportion` of steps, then linear decay
    /// to 0 at `total`.
    pub fn learning_rate_at(&self, step: usize, total: usize) -> f64 {
        let warmup = self.warmup_proportion * total as f64;
        let s = step as f64;
        if s < warmup {
            self.learning_rate * s / warmup
        } else if total as f64 > warmup {
            self.learning_rate * ((total as f64 - s) / (total as f64 - warmup)).max(0.0)
        } else {
            self.learning_rate
        }
    }
}

/// A training instance: packed input and gold token span.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub id: String,
    pub input: TokenizedInput,
    pub gold: (usize, usize),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FeatureStats {
    pub used: usize,
    pub impossible_skipped: usize,
    pub missing_offset: usize,
    pub truncated: usize,
    pub unmapped: usize,
}

/// Turns answerable QAs (and unanswerable ones, with `with_negative`) into training examples.
/// The first gold answer is the target.
pub fn build_examples(ds: &Dataset, vocab: &super::Vocabulary, hp: &Hyperparams) -> (Vec<TrainExample>, FeatureStats) {
    let mut stats = FeatureStats::default();
    let mut out = Vec::new();
    for r in ds.qas() {
        let input = tokenize_pair(&r.qa.question, r.context, vocab, hp);
        if r.qa.is_impossible || r.qa.answers.is_empty() {
            if hp.with_negative {
                out.push(TrainExample {
                    id: r.qa.id.clone(),
                    input,
                    gold: (0, 0),
                });
                stats.used += 1;
            } else {
                stats.impossible_skipped += 1;
            }
            continue;
        }
        let answer = &r.qa.answers[0];
        let Some(start) = answer.answer_start else {
            stats.missing_offset += 1;
            continue;
        };
        match char_to_token_span(&input, start, &answer.text) {
            Ok(gold) => {
                out.push(TrainExample {
                    id: r.qa.id.clone(),
                    input,
                    gold,
                });
                stats.used += 1;
            }
            Err(Error::AnswerTruncated { .. }) => stats.truncated += 1,
            Err(_) => stats.unmapped += 1,
        }
    }
    (out, stats)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub steps: usize,
    /// Mean batch loss per step.
    pub losses: Vec<f64>,
    pub features: FeatureStats,
}

/// Loss and gradients of one example, accumulated into `g_enc` and `g_head`.
pub fn example_gradient<F: Scalar>(
    encoder: &Encoder<F>,
    head: &SpanHead<F>,
    ex: &TrainExample,
    with_null: bool,
    g_enc: &mut [F],
    g_head: &mut SpanHead<F>,
) -> Result<F> {
    let (emb, cache) = encoder.forward(&ex.input)?;
    let scores = score_spans(&emb, head)?;
    let loss = span_loss(&scores, &ex.input, ex.gold.0, ex.gold.1, with_null)?;
    let d_emb = head_backward(&emb, head, &loss, g_head);
    encoder.backward(&cache, &d_emb, g_enc);
    Ok(loss.loss)
}

struct AdamState<F> {
    m: Vec<F>,
    v: Vec<F>,
}

impl<F: Scalar> AdamState<F> {
    fn new(n: usize) -> Self {
        AdamState {
            m: vec![F::zero(); n],
            v: vec![F::zero(); n],
        }
    }
}

fn apply_update<F: Scalar>(
    opt: Optimizer,
    params: &mut [F],
    grads: &[F],
    state: &mut Option<AdamState<F>>,
    lr: f64,
    t: usize,
) {
    match opt {
        Optimizer::Sgd => {
            let lr: F = c(lr);
            for (p, &g) in params.iter_mut().zip(grads) {
                *p -= lr * g;
            }
        }
        Optimizer::Adam { beta1, beta2, epsilon } => {
            let st = state.get_or_insert_with(|| AdamState::new(params.len()));
            let (b1, b2): (F, F) = (c(beta1), c(beta2));
            let bc1: F = c(1.0 - beta1.powi(t as i32));
            let bc2: F = c(1.0 - beta2.powi(t as i32));
            let (lr, eps): (F, F) = (c(lr), c(epsilon));
            for i in 0..params.len() {
                let g = grads[i];
                st.m[i] = b1 * st.m[i] + (F::one() - b1) * g;
                st.v[i] = b2 * st.v[i] + (F::one() - b2) * g * g;
                let mhat = st.m[i] / bc1;
                let vhat = st.v[i] / bc2;
                params[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

/// Continues training `start` on `ds`.
///
/// Mini-batches of `train_batch` are drawn from a per-epoch shuffle seeded by `hp.seed`;
/// each step applies the warmup/decay learning rate to the mean batch gradient. The result
/// is bitwise reproducible for a fixed seed.
pub fn fine_tune<F: Scalar>(start: &Checkpoint<F>, ds: &Dataset, hp: &Hyperparams) -> Result<(Checkpoint<F>, TrainReport)> {
    hp.validate()?;
    let (examples, features) = build_examples(ds, &start.vocab, hp);
    if examples.is_empty() {
        return Err(Error::Config(format!("no trainable instances in dataset ({features:?})")));
    }
    log::info!(
        "fine-tuning on {} instance(s); skipped: {} impossible, {} without offset, {} truncated, {} unmapped",
        features.used,
        features.impossible_skipped,
        features.missing_offset,
        features.truncated,
        features.unmapped
    );

    let mut encoder = start.encoder.clone();
    let mut head = start.head.clone();
    let total = hp.total_steps(examples.len());
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;

    let mut enc_state = None;
    let mut head_state = None;
    let mut losses = Vec::with_capacity(total);
    let hidden = head.hidden_size();

    for step in 0..total {
        let mut g_enc = vec![F::zero(); encoder.params().len()];
        let mut g_head = SpanHead::zeros(hidden);
        let mut batch_loss = F::zero();
        for _ in 0..hp.train_batch.min(examples.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let ex = &examples[order[cursor]];
            cursor += 1;
            batch_loss += example_gradient(&encoder, &head, ex, hp.with_negative, &mut g_enc, &mut g_head)?;
        }
        let n: F = c(hp.train_batch.min(examples.len()) as f64);
        for g in g_enc.iter_mut().chain(g_head.start.iter_mut()).chain(g_head.end.iter_mut()) {
            *g /= n;
        }
        let lr = hp.learning_rate_at(step, total);
        apply_update(hp.optimizer, encoder.params_mut(), &g_enc, &mut enc_state, lr, step + 1);
        let mut head_params: Vec<F> = head.start.iter().chain(&head.end).copied().collect();
        let head_grads: Vec<F> = g_head.start.iter().chain(&g_head.end).copied().collect();
        apply_update(hp.optimizer, &mut head_params, &head_grads, &mut head_state, lr, step + 1);
        head.start.copy_from_slice(&head_params[..hidden]);
        head.end.copy_from_slice(&head_params[hidden..]);
        let mean = (batch_loss / n).to_f64_lossy();
        if !mean.is_finite() {
            return Err(Error::Contract(format!("training loss diverged at step {step}")));
        }
        losses.push(mean);
        if step % 50 == 0 || step + 1 == total {
            log::debug!("step {step}/{total} lr {lr:.3e} loss {mean:.4}");
        }
    }

    let ckpt = Checkpoint {
        encoder,
        head,
        vocab: start.vocab.clone(),
        hp: *hp,
        provenance: Provenance {
            seed: Some(hp.seed),
            steps: start.provenance.steps + total,
            ..start.provenance.clone()
        },
    };
    Ok((
        ckpt,
        TrainReport {
            steps: total,
            losses,
            features,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_bert_squad_recipe() {
        let hp = Hyperparams::default();
        assert_eq!((hp.max_seq_len, hp.max_query_len, hp.max_answer_tokens), (384, 64, 30));
        assert_eq!((hp.train_batch, hp.predict_batch), (12, 8));
        assert_eq!((hp.learning_rate, hp.warmup_proportion, hp.epochs), (5e-5, 0.1, 3.0));
        hp.validate().unwrap();
    }

    #[test]
    fn warmup_then_linear_decay() {
        let hp = Hyperparams::default();
        let total = 1000;
        assert_eq!(hp.learning_rate_at(0, total), 0.0);
        assert!((hp.learning_rate_at(100, total) - 5e-5).abs() < 1e-18);
        assert!((hp.learning_rate_at(50, total) - 2.5e-5).abs() < 1e-18);
        assert!((hp.learning_rate_at(550, total) - 2.5e-5).abs() < 1e-18);
        assert!(hp.learning_rate_at(999, total) < 1e-7);
        assert!(hp.learning_rate_at(999, total) > 0.0);
    }

    #[test]
    fn step_budget() {
        let hp = Hyperparams::default();
        assert_eq!(hp.total_steps(150_000), 37_500);
        let hp = Hyperparams {
            max_steps: Some(30_000),
            ..hp
        };
        assert_eq!(hp.total_steps(150_000), 30_000);
    }

    #[test]
    fn rejects_bad_settings() {
        let bad = Hyperparams {
            warmup_proportion: 1.5,
            ..Hyperparams::default()
        };
        assert!(bad.validate().is_err());
        let bad = Hyperparams {
            train_batch: 0,
            ..Hyperparams::default()
        };
        assert!(bad.validate().is_err());
    }
}
