//! Seeded generator of small parallel English/Hindi QA datasets.
//!
//! Every passage lists a handful of key/value facts ("the color is red ." and
//! "रंग लाल है ।"); the question asks for one key and the gold answer is its value. The two
//! languages share QA ids, so the output feeds the cross-variant builders directly. Used by
//! tests, examples and the CLI smoke paths where real corpora are not available.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Answer, Article, Dataset, LanguageTag, Paragraph, QuestionAnswer};

const KEYS: &[(&str, &str)] = &[
    ("color", "रंग"),
    ("city", "शहर"),
    ("river", "नदी"),
    ("animal", "जानवर"),
    ("fruit", "फल"),
    ("flower", "फूल"),
    ("metal", "धातु"),
    ("game", "खेल"),
    ("bird", "पक्षी"),
    ("tree", "वृक्ष"),
    ("drink", "पेय"),
    ("day", "दिन"),
];

const VALUES: &[(&str, &str)] = &[
    ("red", "लाल"),
    ("blue", "नीला"),
    ("green", "हरा"),
    ("black", "काला"),
    ("gold", "सोना"),
    ("silver", "चाँदी"),
    ("iron", "लोहा"),
    ("lion", "शेर"),
    ("tiger", "बाघ"),
    ("cow", "गाय"),
    ("mango", "आम"),
    ("apple", "सेब"),
    ("banana", "केला"),
    ("rose", "गुलाब"),
    ("lotus", "कमल"),
    ("delhi", "दिल्ली"),
    ("mumbai", "मुंबई"),
    ("ganga", "गंगा"),
    ("yamuna", "यमुना"),
    ("chess", "शतरंज"),
    ("cricket", "क्रिकेट"),
    ("peacock", "मोर"),
    ("parrot", "तोता"),
    ("neem", "नीम"),
    ("tea", "चाय"),
    ("milk", "दूध"),
    ("monday", "सोमवार"),
    ("june", "जून"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub facts_per_passage: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { facts_per_passage: 4 }
    }
}

struct Fact {
    key: usize,
    value: usize,
}

fn render(facts: &[Fact], asked: usize, lang: LanguageTag) -> (String, String, String, usize) {
    let mut context = String::new();
    let mut start = 0;
    for (k, f) in facts.iter().enumerate() {
        if k > 0 {
            context.push(' ');
        }
        let (key, value) = match lang {
            LanguageTag::En => (KEYS[f.key].0, VALUES[f.value].0),
            LanguageTag::Hi => (KEYS[f.key].1, VALUES[f.value].1),
        };
        let prefix = match lang {
            LanguageTag::En => format!("the {key} is "),
            LanguageTag::Hi => format!("{key} "),
        };
        context.push_str(&prefix);
        if k == asked {
            start = context.chars().count();
        }
        context.push_str(value);
        context.push_str(match lang {
            LanguageTag::En => " .",
            LanguageTag::Hi => " है ।",
        });
    }
    let f = &facts[asked];
    let (question, answer) = match lang {
        LanguageTag::En => (format!("what is the {} ?", KEYS[f.key].0), VALUES[f.value].0),
        LanguageTag::Hi => (format!("{} क्या है ?", KEYS[f.key].1), VALUES[f.value].1),
    };
    (context, question, answer.to_string(), start)
}

/// Generates `n` parallel instances. Returns the English and Hindi datasets, with ids
/// `<prefix>-<i>` shared between them.
pub fn parallel_pair(n: usize, seed: u64, prefix: &str, cfg: SynthConfig) -> (Dataset, Dataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let facts_n = cfg.facts_per_passage.clamp(1, KEYS.len());
    let mut en = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    let key_ids: Vec<usize> = (0..KEYS.len()).collect();
    for i in 0..n {
        let mut keys = key_ids.clone();
        keys.shuffle(&mut rng);
        let facts: Vec<Fact> = keys[..facts_n]
            .iter()
            .map(|&key| Fact {
                key,
                value: *(0..VALUES.len()).collect::<Vec<_>>().choose(&mut rng).expect("non-empty"),
            })
            .collect();
        let asked = (0..facts_n).collect::<Vec<_>>().choose(&mut rng).copied().unwrap_or(0);
        let id = format!("{prefix}-{i}");
        for (lang, out) in [(LanguageTag::En, &mut en), (LanguageTag::Hi, &mut hi)] {
            let (context, question, answer, start) = render(&facts, asked, lang);
            let qa = QuestionAnswer::new(id.clone(), question, vec![Answer::new(answer, Some(start))])
                .with_langs(lang, lang);
            out.push(Paragraph::new(context, vec![qa]));
        }
    }
    let wrap = |paragraphs: Vec<Paragraph>| {
        let articles = if paragraphs.is_empty() {
            Vec::new()
        } else {
            vec![Article::new("synthetic", paragraphs)]
        };
        Dataset::new("synthetic", articles)
    };
    (wrap(en), wrap(hi))
}

/// `n` instances alternating between English and Hindi, drawn independently (not parallel).
/// Ids are `<prefix>-en-<i>` and `<prefix>-hi-<i>`.
pub fn mixed(n: usize, seed: u64, prefix: &str, cfg: SynthConfig) -> Dataset {
    let n_hi = n / 2;
    let (en, _) = parallel_pair(n - n_hi, seed, &format!("{prefix}-en"), cfg);
    let (_, hi) = parallel_pair(n_hi, seed ^ 0x9e37_79b9_7f4a_7c15, &format!("{prefix}-hi"), cfg);
    let mut out = en;
    match (out.articles.first_mut(), hi.articles.into_iter().next()) {
        (Some(a), Some(h)) => a.paragraphs.extend(h.paragraphs),
        (None, Some(h)) => out.articles.push(h),
        _ => {}
    }
    out
}

/// Every word the generator can emit, in both scripts; a vocabulary corpus that covers
/// any generated dataset.
pub fn lexicon() -> Vec<String> {
    let mut words: Vec<String> = KEYS
        .iter()
        .chain(VALUES)
        .flat_map(|(e, h)| [e.to_string(), h.to_string()])
        .collect();
    words.extend(["the is what ? .", "क्या है ? ।"].map(String::from));
    words
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::validate;

    #[test]
    fn parallel_and_valid() {
        let (en, hi) = parallel_pair(20, 3, "t", SynthConfig::default());
        assert_eq!(en.qa_count(), 20);
        assert_eq!(en.ids(), hi.ids());
        assert!(validate(&en).is_empty());
        assert!(validate(&hi).is_empty());
        for r in hi.qas() {
            assert_eq!(r.qa.question_lang, LanguageTag::Hi);
            assert!(r.qa.question.ends_with("क्या है ?"));
        }
    }

    #[test]
    fn mixed_is_half_hindi() {
        let ds = mixed(9, 1, "m", SynthConfig::default());
        assert_eq!(ds.qa_count(), 9);
        let hi = ds.qas().filter(|r| r.qa.passage_lang == LanguageTag::Hi).count();
        assert_eq!(hi, 4);
        assert!(validate(&ds).is_empty());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = parallel_pair(5, 9, "x", SynthConfig::default());
        let b = parallel_pair(5, 9, "x", SynthConfig::default());
        let c = parallel_pair(5, 10, "x", SynthConfig::default());
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn english_layout() {
        let facts = [Fact { key: 0, value: 0 }, Fact { key: 1, value: 15 }];
        let (ctx, q, a, start) = render(&facts, 1, LanguageTag::En);
        assert_eq!(ctx, "the color is red . the city is delhi .");
        assert_eq!(q, "what is the city ?");
        assert_eq!((a.as_str(), start), ("delhi", 31));
    }
}
