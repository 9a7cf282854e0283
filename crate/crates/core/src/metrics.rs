//! SQuAD-style exact match and token F1, extended for Devanagari text.
//!
//! Normalization follows the stock SQuAD evaluation script (lowercase, strip ASCII
//! punctuation, drop the English articles, squeeze whitespace) with two additions that can be
//! switched off through [`NormalizeOptions`]: NFC composition and removal of the danda marks
//! `।` and `॥`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::data::Dataset;

static ARTICLES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(a|an|the)\b").expect("valid regex"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizeOptions {
    pub nfc: bool,
    pub strip_danda: bool,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        NormalizeOptions {
            nfc: true,
            strip_danda: true,
        }
    }
}

impl NormalizeOptions {
    /// Exactly the stock SQuAD script behavior.
    pub fn stock() -> Self {
        NormalizeOptions {
            nfc: false,
            strip_danda: false,
        }
    }
}

fn is_removed_punct(c: char, opts: NormalizeOptions) -> bool {
    c.is_ascii_punctuation() || (opts.strip_danda && matches!(c, '।' | '॥'))
}

pub fn normalize_answer(text: &str) -> String {
    normalize_answer_with(text, NormalizeOptions::default())
}

pub fn normalize_answer_with(text: &str, opts: NormalizeOptions) -> String {
    let composed: String = if opts.nfc { text.nfc().collect() } else { text.to_string() };
    let lowered = composed.to_lowercase();
    let no_punct: String = lowered.chars().filter(|&c| !is_removed_punct(c, opts)).collect();
    let no_articles = ARTICLES.replace_all(&no_punct, " ");
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// The gold list used for scoring: golds that normalize to nothing are ignored, and a
/// question without usable golds is scored against the empty answer.
fn effective_golds<'a>(golds: &'a [&'a str], opts: NormalizeOptions) -> Vec<String> {
    let mut out: Vec<String> = golds
        .iter()
        .map(|g| normalize_answer_with(g, opts))
        .filter(|g| !g.is_empty())
        .collect();
    if out.is_empty() {
        out.push(String::new());
    }
    out
}

/// 1 if `pred` equals some gold after normalization; an empty gold list means the question
/// is unanswerable and only an empty prediction matches.
pub fn exact_match(pred: &str, golds: &[&str]) -> u8 {
    exact_match_with(pred, golds, NormalizeOptions::default())
}

pub fn exact_match_with(pred: &str, golds: &[&str], opts: NormalizeOptions) -> u8 {
    let pred = normalize_answer_with(pred, opts);
    effective_golds(golds, opts).contains(&pred) as u8
}

fn token_f1(pred: &str, gold: &str) -> f64 {
    let pred_toks: Vec<&str> = pred.split_whitespace().collect();
    let gold_toks: Vec<&str> = gold.split_whitespace().collect();
    if pred_toks.is_empty() || gold_toks.is_empty() {
        return (pred_toks == gold_toks) as u8 as f64;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold_toks {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pred_toks {
        if let Some(n) = counts.get_mut(t) {
            if *n > 0 {
                *n -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred_toks.len() as f64;
    let recall = common as f64 / gold_toks.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Bag-of-tokens F1 in `[0, 1]`, maximized over golds.
pub fn f1(pred: &str, golds: &[&str]) -> f64 {
    f1_with(pred, golds, NormalizeOptions::default())
}

pub fn f1_with(pred: &str, golds: &[&str], opts: NormalizeOptions) -> f64 {
    let pred = normalize_answer_with(pred, opts);
    effective_golds(golds, opts)
        .iter()
        .map(|g| token_f1(&pred, g))
        .fold(0.0, f64::max)
}

/// Aggregate scores as percentages. Both are `None` for an empty dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorePair {
    pub exact_match: Option<f64>,
    pub f1: Option<f64>,
    pub count: usize,
    /// QAs without a prediction; they score zero.
    #[serde(skip)]
    pub missing: usize,
}

pub fn evaluate(preds: &BTreeMap<String, String>, ds: &Dataset) -> ScorePair {
    evaluate_with(preds, ds, NormalizeOptions::default())
}

pub fn evaluate_with(preds: &BTreeMap<String, String>, ds: &Dataset, opts: NormalizeOptions) -> ScorePair {
    let mut em_sum = 0.0;
    let mut f1_sum = 0.0;
    let mut count = 0usize;
    let mut missing = 0usize;
    for r in ds.qas() {
        count += 1;
        let Some(pred) = preds.get(&r.qa.id) else {
            missing += 1;
            continue;
        };
        let golds: Vec<&str> = r.qa.answers.iter().map(|a| a.text.as_str()).collect();
        em_sum += exact_match_with(pred, &golds, opts) as f64;
        f1_sum += f1_with(pred, &golds, opts);
    }
    if missing > 0 {
        log::warn!("{missing} of {count} question(s) have no prediction and score zero");
    }
    if count == 0 {
        return ScorePair {
            exact_match: None,
            f1: None,
            count,
            missing,
        };
    }
    ScorePair {
        exact_match: Some(100.0 * em_sum / count as f64),
        f1: Some(100.0 * f1_sum / count as f64),
        count,
        missing,
    }
}

/// Ids in `preds` that do not belong to `ds`.
pub fn unexpected_ids<'a>(preds: &'a BTreeMap<String, String>, ds: &Dataset) -> Vec<&'a str> {
    let ids: HashSet<&str> = ds.qas().map(|r| r.qa.id.as_str()).collect();
    let mut extra: Vec<&str> = preds.keys().map(String::as_str).filter(|k| !ids.contains(k)).collect();
    extra.sort_unstable();
    extra
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Answer, Article, Paragraph, QuestionAnswer};

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_answer("The  Answer."), "answer");
        assert_eq!(normalize_answer("उत्तर।"), "उत्तर");
        assert_eq!(normalize_answer(""), "");
        assert_eq!(normalize_answer_with("उत्तर।", NormalizeOptions::stock()), "उत्तर।");
        assert_eq!(normalize_answer("an apple, a day"), "apple day");
        assert_eq!(normalize_answer("theatre"), "theatre");
    }

    #[test]
    fn exact_match_examples() {
        assert_eq!(exact_match("The cat", &["cat"]), 1);
        assert_eq!(exact_match("dog", &["cat"]), 0);
        assert_eq!(exact_match("नई दिल्ली", &["x", "नई दिल्ली"]), 1);
        assert_eq!(exact_match("", &[]), 1);
        assert_eq!(exact_match("something", &[]), 0);
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1("x y", &["y z"]), 0.5);
        // "a" is an article and is dropped before tokenizing: p = 1, r = 1/2.
        assert!((f1("a b", &["b c"]) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(f1("cat", &["cat"]), 1.0);
        assert_eq!(f1("dog", &["cat"]), 0.0);
        assert_eq!(f1("", &[]), 1.0);
        assert_eq!(f1("cat cat", &["cat"]), 2.0 * 0.5 * 1.0 / 1.5);
    }

    #[test]
    fn evaluate_averages_over_questions() {
        let qa = |id: &str, a: &str| QuestionAnswer::new(id, "q", vec![Answer::new(a, None)]);
        let ds = Dataset::new(
            "1.1",
            vec![Article::new("t", vec![Paragraph::new("c", vec![qa("1", "red apple"), qa("2", "blue sky")])])],
        );
        let preds: BTreeMap<String, String> =
            [("1".to_string(), "red apple".to_string()), ("2".to_string(), "green".to_string())].into();
        let s = evaluate(&preds, &ds);
        assert_eq!((s.exact_match, s.f1, s.count), (Some(50.0), Some(50.0), 2));

        let s = evaluate(&BTreeMap::new(), &ds);
        assert_eq!((s.exact_match, s.missing), (Some(0.0), 2));

        let s = evaluate(&BTreeMap::new(), &Dataset::default());
        assert_eq!((s.exact_match, s.f1, s.count), (None, None, 0));
        assert_eq!(serde_json::to_string(&s).unwrap(), r#"{"exact_match":null,"f1":null,"count":0}"#);
    }
}
