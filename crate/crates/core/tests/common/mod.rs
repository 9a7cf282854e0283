//! Independent reference implementations and generators shared by the integration tests.
#![allow(dead_code)]

use mmc::engine::{
    build_vocab, tokenize_pair, Encoder, EncoderConfig, Hyperparams, SpanHead, SpanScores, TokenizedInput, Vocabulary,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use unicode_normalization::UnicodeNormalization;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- metrics oracle

const PUNCT: &str = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~।॥";

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || (('\u{0900}'..='\u{097F}').contains(&c) && !matches!(c, '।' | '॥' | '॰'))
}

/// Character-scan normalization: NFC, lowercase, drop punctuation, blank out whole-word
/// articles, squeeze whitespace.
pub fn oracle_normalize(text: &str) -> String {
    let lowered: String = text.nfc().collect::<String>().to_lowercase();
    let kept: Vec<char> = lowered.chars().filter(|c| !PUNCT.contains(*c)).collect();
    let mut out = String::new();
    let mut i = 0;
    while i < kept.len() {
        if is_word_char(kept[i]) {
            let mut j = i;
            while j < kept.len() && is_word_char(kept[j]) {
                j += 1;
            }
            let word: String = kept[i..j].iter().collect();
            if matches!(word.as_str(), "a" | "an" | "the") {
                out.push(' ');
            } else {
                out.push_str(&word);
            }
            i = j;
        } else {
            out.push(kept[i]);
            i += 1;
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn oracle_golds(golds: &[&str]) -> Vec<String> {
    let g: Vec<String> = golds.iter().map(|g| oracle_normalize(g)).filter(|g| !g.is_empty()).collect();
    if g.is_empty() {
        vec![String::new()]
    } else {
        g
    }
}

pub fn oracle_em(pred: &str, golds: &[&str]) -> f64 {
    let p = oracle_normalize(pred);
    if oracle_golds(golds).contains(&p) {
        1.0
    } else {
        0.0
    }
}

fn pair_f1(pred: &str, gold: &str) -> f64 {
    let p: Vec<&str> = pred.split(' ').filter(|t| !t.is_empty()).collect();
    let g: Vec<&str> = gold.split(' ').filter(|t| !t.is_empty()).collect();
    if p.is_empty() || g.is_empty() {
        return if p.is_empty() && g.is_empty() { 1.0 } else { 0.0 };
    }
    let mut taken = vec![false; g.len()];
    let mut common = 0usize;
    for t in &p {
        if let Some(k) = (0..g.len()).find(|&k| !taken[k] && g[k] == *t) {
            taken[k] = true;
            common += 1;
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn oracle_f1(pred: &str, golds: &[&str]) -> f64 {
    let p = oracle_normalize(pred);
    oracle_golds(golds).iter().map(|g| pair_f1(&p, g)).fold(0.0, f64::max)
}

const LATIN: &[&str] = &[
    "The", "the", "a", "An", "cat", "Cat", "dog", "river", "Delhi", "1947", "e\u{301}te\u{301}", "été", "the,", "(a)",
    "an.", "THE", "x-ray", "co-op", "U.S.", "_the", "thee", "a's",
];
const DEVANAGARI: &[&str] = &[
    "उत्तर", "उत्तर।", "दिल्ली", "भारत", "गंगा", "नदी", "है", "।", "॥", "क़िला", "क\u{93c}िला", "राजधानी", "१९४७", "के", "का",
    "कthe", "क्the",
];
const GLUE: &[&str] = &[" ", "  ", "\t", ", ", ". ", "! ", " ? ", "\n", "-", "'"];

/// Random short text mixing Latin and Devanagari words, punctuation and odd spacing.
pub fn random_answer<R: Rng>(rng: &mut R) -> String {
    let n = rng.random_range(0..6);
    let mut s = String::new();
    for k in 0..n {
        if k > 0 || rng.random_bool(0.2) {
            s.push_str(GLUE[rng.random_range(0..GLUE.len())]);
        }
        let pool = if rng.random_bool(0.5) { LATIN } else { DEVANAGARI };
        s.push_str(pool[rng.random_range(0..pool.len())]);
    }
    s
}

/// Prediction/gold lists that overlap often enough to exercise partial matches.
pub fn random_case<R: Rng>(rng: &mut R) -> (String, Vec<String>) {
    let golds: Vec<String> = (0..rng.random_range(1..4)).map(|_| random_answer(rng)).collect();
    let pred = match rng.random_range(0..4) {
        0 => golds[0].clone(),
        1 => format!("{} {}", golds[rng.random_range(0..golds.len())], random_answer(rng)),
        _ => random_answer(rng),
    };
    (pred, golds)
}

// ---------------------------------------------------------------- decoding oracle

/// Exhaustive `(i, j)` scan in increasing `i`, then `j`; a later pair wins only when strictly
/// better, which realises the smallest-i-then-j tie-break.
pub fn exhaustive_decode(scores: &SpanScores<f64>, input: &TokenizedInput, max_answer: usize) -> Option<(usize, usize)> {
    let (first, last) = input.passage_range?;
    let mut best: Option<(f64, usize, usize)> = None;
    for i in first..=last {
        for j in i..=last {
            if j - i + 1 > max_answer {
                continue;
            }
            let s = scores.start_logits[i] + scores.end_logits[j];
            if best.is_none_or(|(b, _, _)| s > b) {
                best = Some((s, i, j));
            }
        }
    }
    best.map(|(_, i, j)| (i, j))
}

// ---------------------------------------------------------------- small models

pub const WORDS: &[&str] = &[
    "the", "river", "flows", "past", "old", "city", "गंगा", "नदी", "शहर", "पुराना", "है", "में", "what", "where", "क्या",
    "कहाँ", ",", ".", "।",
];

pub fn random_sentence<R: Rng>(rng: &mut R, words: usize) -> String {
    (0..words)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn small_vocab() -> Vocabulary {
    build_vocab(WORDS, 200)
}

/// A random packed input of at most `max_len` tokens.
pub fn random_input<R: Rng>(rng: &mut R, vocab: &Vocabulary, max_len: usize) -> TokenizedInput {
    let hp = Hyperparams {
        max_seq_len: max_len,
        max_query_len: (max_len / 4).max(1),
        ..Hyperparams::default()
    };
    let (nq, np) = (rng.random_range(1..6), rng.random_range(1..max_len));
    let q = random_sentence(rng, nq);
    let p = random_sentence(rng, np);
    tokenize_pair(&q, &p, vocab, &hp)
}

pub fn tiny_encoder_config(vocab_size: usize) -> EncoderConfig {
    EncoderConfig {
        vocab_size,
        hidden: 8,
        layers: 2,
        heads: 2,
        ffn: 16,
        max_positions: 16,
    }
}

/// Encoder and head with O(1)-scale random parameters, so every nonlinearity is exercised.
pub fn random_model<R: Rng>(rng: &mut R, cfg: EncoderConfig) -> (Encoder<f64>, SpanHead<f64>) {
    let mut enc = Encoder::<f64>::zeros(cfg).unwrap();
    let layout = enc.layout().clone();
    for (name, _, range) in &layout.tensors {
        for p in &mut enc.params_mut()[range.clone()] {
            let noise: f64 = rng.random_range(-0.5..0.5);
            *p = if name.ends_with(".gamma") { 1.0 + noise } else { noise };
        }
    }
    let h = cfg.hidden;
    let head = SpanHead {
        start: (0..h).map(|_| rng.random_range(-1.0..1.0)).collect(),
        end: (0..h).map(|_| rng.random_range(-1.0..1.0)).collect(),
    };
    (enc, head)
}
