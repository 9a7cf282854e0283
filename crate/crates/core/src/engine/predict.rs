use std::collections::BTreeMap;

use rayon::prelude::*;

use super::checkpoint::Checkpoint;
use super::head::{decode_span, score_spans};
use super::tokenize::tokenize_pair;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Predictions {
    /// QA id to predicted answer text.
    pub answers: BTreeMap<String, String>,
    /// Instances whose passage tokenized to nothing; their prediction is "".
    pub empty_passages: usize,
}

/// Answers one question against one passage.
pub fn predict_one<F: Scalar>(ckpt: &Checkpoint<F>, question: &str, context: &str) -> Result<String> {
    let input = tokenize_pair(question, context, &ckpt.vocab, &ckpt.hp);
    let emb = ckpt.encoder.encode(&input)?;
    let scores = score_spans(&emb, &ckpt.head)?;
    Ok(decode_span(&scores, &input, &ckpt.hp)?.text)
}

/// Predicts every QA of `ds`. Batches of `predict_batch` instances are processed in parallel.
pub fn predict<F: Scalar>(ckpt: &Checkpoint<F>, ds: &Dataset) -> Result<Predictions> {
    let items: Vec<(&str, &str, &str)> = ds
        .qas()
        .map(|r| (r.qa.id.as_str(), r.qa.question.as_str(), r.context))
        .collect();
    let batch = ckpt.hp.predict_batch.max(1);
    let results: Vec<Vec<(String, Option<String>)>> = items
        .par_chunks(batch)
        .map(|chunk| {
            chunk
                .iter()
                .map(|&(id, q, p)| match predict_one(ckpt, q, p) {
                    Ok(text) => Ok((id.to_string(), Some(text))),
                    Err(Error::EmptyPassage) => Ok((id.to_string(), None)),
                    Err(e) => Err(e),
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut out = Predictions::default();
    for (id, text) in results.into_iter().flatten() {
        if text.is_none() {
            out.empty_passages += 1;
            log::warn!("empty passage for {id}; predicting the empty string");
        }
        out.answers.insert(id, text.unwrap_or_default());
    }
    Ok(out)
}
