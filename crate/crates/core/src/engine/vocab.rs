use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

/// Longest piece the builder will emit, in characters.
pub const MAX_PIECE_CHARS: usize = 24;

/// Dense token table shared by both scripts. Ids 0..=3 are `[PAD]`, `[UNK]`, `[CLS]`, `[SEP]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub const PAD_ID: u32 = 0;
    pub const UNK_ID: u32 = 1;
    pub const CLS_ID: u32 = 2;
    pub const SEP_ID: u32 = 3;

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 4 || tokens[..4] != [PAD, UNK, CLS, SEP] {
            return Err(Error::Config(format!("vocabulary must start with {PAD} {UNK} {CLS} {SEP}")));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.index.get(piece).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// One token per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Greedy longest-match pieces of one word, as `(id, char_start, char_end)` relative to
    /// the word. Candidate pieces are NFC-normalized before lookup so offsets stay in the raw
    /// text.
    pub fn word_pieces(&self, word: &str) -> Vec<(u32, usize, usize)> {
        let chars: Vec<char> = word.chars().collect();
        let mut out = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let longest = (chars.len() - start).min(MAX_PIECE_CHARS);
            let found = (1..=longest).rev().find_map(|n| {
                let raw: String = chars[start..start + n].iter().collect();
                let piece: String = raw.nfc().collect();
                self.id(&piece).map(|id| (id, n))
            });
            let (id, n) = found.unwrap_or((Self::UNK_ID, 1));
            out.push((id, start, start + n));
            start += n;
        }
        out
    }
}

pub(crate) fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c, '।' | '॥' | '«' | '»' | '¿' | '¡' | '·')
        || (('\u{2010}'..='\u{2027}').contains(&c))
        || (('\u{2030}'..='\u{205E}').contains(&c))
        || (('\u{3000}'..='\u{303F}').contains(&c) && c != '\u{3000}')
}

/// Splits text into words: maximal runs of non-space, non-punctuation characters, with each
/// punctuation character standing alone. Returns char offsets `[start, end)`.
pub fn split_words(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut run: Option<usize> = None;
    let mut n = 0;
    for (i, c) in text.chars().enumerate() {
        n = i + 1;
        if c.is_whitespace() || is_punctuation(c) {
            if let Some(s) = run.take() {
                out.push((s, i));
            }
            if !c.is_whitespace() {
                out.push((i, i + 1));
            }
        } else if run.is_none() {
            run = Some(i);
        }
    }
    if let Some(s) = run {
        out.push((s, n));
    }
    out
}

/// Builds a frequency-ranked vocabulary of at most `size` entries.
///
/// After the four specials come all characters of the NFC-normalized corpus (most frequent
/// first), so any text in the corpus scripts encodes without `[UNK]` as long as `size` leaves
/// room for them. Remaining slots go to multi-character pieces (whole words and word
/// prefixes) ranked by occurrence count, longer first on ties, then lexicographically.
pub fn build_vocab<S: AsRef<str>>(corpus: &[S], size: usize) -> Vocabulary {
    let size = size.max(4);
    let mut char_counts: BTreeMap<char, usize> = BTreeMap::new();
    let mut piece_counts: BTreeMap<String, usize> = BTreeMap::new();
    for text in corpus {
        let norm: String = text.as_ref().nfc().collect();
        let chars: Vec<char> = norm.chars().collect();
        for (s, e) in split_words(&norm) {
            let word = &chars[s..e];
            for &c in word {
                *char_counts.entry(c).or_default() += 1;
            }
            for n in 2..=word.len().min(MAX_PIECE_CHARS) {
                *piece_counts.entry(word[..n].iter().collect()).or_default() += 1;
            }
        }
    }
    let mut chars: Vec<(char, usize)> = char_counts.into_iter().collect();
    chars.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut pieces: Vec<(String, usize)> = piece_counts.into_iter().collect();
    pieces.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then(b.0.chars().count().cmp(&a.0.chars().count()))
            .then(a.0.cmp(&b.0))
    });

    let mut tokens: Vec<String> = [PAD, UNK, CLS, SEP].iter().map(|s| s.to_string()).collect();
    let candidates = chars
        .into_iter()
        .map(|(c, _)| c.to_string())
        .chain(pieces.into_iter().map(|(p, _)| p))
        .filter(|t| ![PAD, UNK, CLS, SEP].contains(&t.as_str()));
    tokens.extend(candidates.take(size - 4));
    Vocabulary::from_tokens(tokens).expect("builder emits unique tokens")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_word_corpus() {
        let v = build_vocab(&["banana"], 10);
        assert_eq!(&v.tokens()[..4], &[PAD, UNK, CLS, SEP]);
        assert!(v.len() <= 10);
        for c in ["a", "n", "b"] {
            assert!(v.id(c).is_some(), "{c}");
        }
        assert!(v.id("banana").is_some());
    }

    #[test]
    fn deterministic() {
        let corpus = ["the cat sat", "बिल्ली बैठी", "the cat ran"];
        assert_eq!(build_vocab(&corpus, 50), build_vocab(&corpus, 50));
    }

    #[test]
    fn bilingual_corpus_has_no_unknown_characters() {
        let corpus = ["Delhi is the capital of India.", "भारत की राजधानी नई दिल्ली है।", "क़िला (fort) ॥"];
        let v = build_vocab(&corpus, 60);
        for text in corpus {
            let norm: String = text.nfc().collect();
            let chars: Vec<char> = norm.chars().collect();
            for (s, e) in split_words(&norm) {
                let word: String = chars[s..e].iter().collect();
                assert!(v.word_pieces(&word).iter().all(|p| p.0 != Vocabulary::UNK_ID), "{word}");
            }
        }
    }

    #[test]
    fn pieces_cover_the_word() {
        let v = build_vocab(&["cat cat cat dog"], 40);
        let pieces = v.word_pieces("cats");
        assert_eq!(pieces[0], (v.id("cat").unwrap(), 0, 3));
        assert_eq!(pieces[1].1..pieces[1].2, 3..4);
        let unk = v.word_pieces("z");
        assert_eq!(unk, vec![(Vocabulary::UNK_ID, 0, 1)]);
    }

    #[test]
    fn splits_words_and_punctuation() {
        assert_eq!(split_words("a, bc।"), vec![(0, 1), (1, 2), (3, 5), (5, 6)]);
        assert_eq!(split_words("  "), vec![]);
    }

    #[test]
    fn text_round_trip() {
        let v = build_vocab(&["hello world"], 30);
        assert_eq!(Vocabulary::parse(&v.to_text()).unwrap(), v);
        assert!(Vocabulary::parse("a\nb\n").is_err());
    }
}
