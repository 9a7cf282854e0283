//! Start/end span head: per-token logits `S·T_i` and `E·T_i`, the passage-restricted softmax,
//! span decoding and the log-likelihood training loss.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::matrix::{dot, Matrix};
use super::tokenize::TokenizedInput;
use super::train::Hyperparams;
use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct SpanHead<F> {
    /// Start vector `S`.
    pub start: Vec<F>,
    /// End vector `E`.
    pub end: Vec<F>,
}

impl<F: Scalar> SpanHead<F> {
    pub fn zeros(hidden: usize) -> Self {
        SpanHead {
            start: vec![F::zero(); hidden],
            end: vec![F::zero(); hidden],
        }
    }

    pub fn init<R: Rng + ?Sized>(hidden: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, 0.02).expect("valid normal");
        let mut draw = || (0..hidden).map(|_| c::<F>(normal.sample(&mut *rng))).collect::<Vec<F>>();
        let start = draw();
        let end = draw();
        SpanHead { start, end }
    }

    pub fn hidden_size(&self) -> usize {
        self.start.len()
    }

    pub fn is_finite(&self) -> bool {
        self.start.iter().chain(&self.end).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanScores<F> {
    pub start_logits: Vec<F>,
    pub end_logits: Vec<F>,
}

pub fn score_spans<F: Scalar>(emb: &Matrix<F>, head: &SpanHead<F>) -> Result<SpanScores<F>> {
    if head.start.len() != emb.cols || head.end.len() != emb.cols {
        return Err(Error::Contract(format!(
            "span head of size {} against embeddings of width {}",
            head.start.len(),
            emb.cols
        )));
    }
    let (start_logits, end_logits) = (0..emb.rows)
        .map(|i| (dot(&head.start, emb.row(i)), dot(&head.end, emb.row(i))))
        .unzip();
    Ok(SpanScores {
        start_logits,
        end_logits,
    })
}

/// Token positions the softmax ranges over: the passage tokens, preceded by `[CLS]` when
/// null answers are enabled.
pub fn candidate_positions(input: &TokenizedInput, with_null: bool) -> Vec<usize> {
    let mut out = Vec::with_capacity(input.len());
    if with_null {
        out.push(0);
    }
    out.extend(input.passage_positions());
    out
}

/// Softmax of `logits` restricted to `positions`, in the order of `positions`.
pub fn softmax_over<F: Scalar>(logits: &[F], positions: &[usize]) -> Vec<F> {
    let max = positions.iter().map(|&i| logits[i]).fold(F::neg_infinity(), F::max);
    let exps: Vec<F> = positions.iter().map(|&i| (logits[i] - max).exp()).collect();
    let sum: F = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl<F: Scalar> SpanScores<F> {
    pub fn len(&self) -> usize {
        self.start_logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.start_logits.is_empty()
    }

    /// Start probabilities over the passage tokens of `input`.
    pub fn start_probs(&self, input: &TokenizedInput) -> Vec<F> {
        softmax_over(&self.start_logits, &candidate_positions(input, false))
    }

    pub fn end_probs(&self, input: &TokenizedInput) -> Vec<F> {
        softmax_over(&self.end_logits, &candidate_positions(input, false))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedSpan<F> {
    pub start_tok: usize,
    pub end_tok: usize,
    pub score: F,
    pub text: String,
    /// True when the null answer (`[CLS]`, `[CLS]`) won; `text` is then empty.
    pub is_null: bool,
}

/// Best admissible span `i ≤ j`, both in the passage, at most `max_answer_tokens` long,
/// maximizing `start_logits[i] + end_logits[j]`. Ties go to the smallest `i`, then `j`.
///
/// With `hp.with_negative`, the null span wins when the best span's score minus the null
/// score falls below `hp.null_score_threshold`.
pub fn decode_span<F: Scalar>(scores: &SpanScores<F>, input: &TokenizedInput, hp: &Hyperparams) -> Result<PredictedSpan<F>> {
    if scores.len() != input.len() || scores.end_logits.len() != input.len() {
        return Err(Error::Contract(format!(
            "{} scores for an input of {} tokens",
            scores.len(),
            input.len()
        )));
    }
    let (first, last) = input.passage_range.ok_or(Error::EmptyPassage)?;
    let max_len = hp.max_answer_tokens.max(1);
    let mut best: Option<(usize, usize, F)> = None;
    for i in first..=last {
        let si = scores.start_logits[i];
        for j in i..=last.min(i + max_len - 1) {
            let s = si + scores.end_logits[j];
            match best {
                Some((_, _, b)) if !(s > b) => {}
                _ => best = Some((i, j, s)),
            }
        }
    }
    let (i, j, score) = best.expect("passage range is non-empty");
    if hp.with_negative {
        let null = scores.start_logits[0] + scores.end_logits[0];
        if (score - null).to_f64_lossy() < hp.null_score_threshold {
            return Ok(PredictedSpan {
                start_tok: 0,
                end_tok: 0,
                score: null,
                text: String::new(),
                is_null: true,
            });
        }
    }
    Ok(PredictedSpan {
        start_tok: i,
        end_tok: j,
        score,
        text: input.span_text(i, j),
        is_null: false,
    })
}

/// Loss value and its gradient with respect to the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanLoss<F> {
    pub loss: F,
    pub d_start: Vec<F>,
    pub d_end: Vec<F>,
}

/// `-log p_start(gold_start) - log p_end(gold_end)`, softmax over the candidate positions.
pub fn span_loss<F: Scalar>(
    scores: &SpanScores<F>,
    input: &TokenizedInput,
    gold_start: usize,
    gold_end: usize,
    with_null: bool,
) -> Result<SpanLoss<F>> {
    let positions = candidate_positions(input, with_null);
    let find = |g: usize| {
        positions.iter().position(|&p| p == g).ok_or_else(|| {
            Error::Contract(format!("gold position {g} is outside the passage tokens {:?}", input.passage_range))
        })
    };
    let (gs, ge) = (find(gold_start)?, find(gold_end)?);
    let mut d_start = vec![F::zero(); scores.len()];
    let mut d_end = vec![F::zero(); scores.len()];
    let mut loss = F::zero();
    for (logits, gold, grad) in [(&scores.start_logits, gs, &mut d_start), (&scores.end_logits, ge, &mut d_end)] {
        let max = positions.iter().map(|&i| logits[i]).fold(F::neg_infinity(), F::max);
        let lse = max + positions.iter().map(|&i| (logits[i] - max).exp()).sum::<F>().ln();
        loss += lse - logits[positions[gold]];
        for &i in &positions {
            grad[i] = (logits[i] - lse).exp();
        }
        grad[positions[gold]] -= F::one();
    }
    Ok(SpanLoss { loss, d_start, d_end })
}

/// Back-propagates logit gradients through the head: accumulates into `d_head` and returns
/// d(loss)/d(embeddings).
pub fn head_backward<F: Scalar>(
    emb: &Matrix<F>,
    head: &SpanHead<F>,
    loss: &SpanLoss<F>,
    d_head: &mut SpanHead<F>,
) -> Matrix<F> {
    let mut d_emb = Matrix::zeros(emb.rows, emb.cols);
    for i in 0..emb.rows {
        let (gs, ge) = (loss.d_start[i], loss.d_end[i]);
        if gs == F::zero() && ge == F::zero() {
            continue;
        }
        let row = emb.row(i);
        for k in 0..emb.cols {
            d_head.start[k] += gs * row[k];
            d_head.end[k] += ge * row[k];
        }
        for (d, (&s, &e)) in d_emb.row_mut(i).iter_mut().zip(head.start.iter().zip(&head.end)) {
            *d = gs * s + ge * e;
        }
    }
    d_emb
}
