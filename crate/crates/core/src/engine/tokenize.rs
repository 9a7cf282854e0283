use super::train::Hyperparams;
use super::vocab::{split_words, Vocabulary};
use crate::error::{Error, Result};

/// `[CLS] question [SEP] passage [SEP]`, with offsets back into the passage.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedInput {
    pub token_ids: Vec<u32>,
    /// 0 for `[CLS]`, question tokens and the first `[SEP]`; 1 for passage tokens and the
    /// final `[SEP]`.
    pub segment_ids: Vec<u8>,
    pub position_ids: Vec<u32>,
    /// `[start, end)` character offsets into `passage` for passage tokens, `None` otherwise.
    pub char_spans: Vec<Option<(usize, usize)>>,
    /// First and last passage token, inclusive; `None` when no passage token survived.
    pub passage_range: Option<(usize, usize)>,
    pub question_truncated: bool,
    pub passage_truncated: bool,
    pub passage: String,
}

impl TokenizedInput {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn passage_positions(&self) -> std::ops::RangeInclusive<usize> {
        match self.passage_range {
            Some((a, b)) => a..=b,
            #[allow(clippy::reversed_empty_ranges)]
            None => 1..=0,
        }
    }

    /// Passage text covered by tokens `start..=end`.
    pub fn span_text(&self, start: usize, end: usize) -> String {
        match (self.char_spans.get(start).copied().flatten(), self.char_spans.get(end).copied().flatten()) {
            (Some((a, _)), Some((_, b))) if a <= b => self.passage.chars().skip(a).take(b - a).collect(),
            _ => String::new(),
        }
    }
}

/// Word-split then greedy subword pieces, as `(id, char_start, char_end)` in `text`.
pub fn tokenize_text(text: &str, vocab: &Vocabulary) -> Vec<(u32, usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    for (s, e) in split_words(text) {
        let word: String = chars[s..e].iter().collect();
        out.extend(vocab.word_pieces(&word).into_iter().map(|(id, a, b)| (id, s + a, s + b)));
    }
    out
}

pub fn tokenize_pair(question: &str, passage: &str, vocab: &Vocabulary, hp: &Hyperparams) -> TokenizedInput {
    let mut q = tokenize_text(question, vocab);
    let q_cap = hp.max_query_len.min(hp.max_seq_len.saturating_sub(3));
    let question_truncated = q.len() > q_cap;
    q.truncate(q_cap);
    let mut p = tokenize_text(passage, vocab);
    let budget = hp.max_seq_len.saturating_sub(q.len() + 3);
    let passage_truncated = p.len() > budget;
    p.truncate(budget);

    let len = q.len() + p.len() + 3;
    let mut token_ids = Vec::with_capacity(len);
    let mut segment_ids = Vec::with_capacity(len);
    let mut char_spans = Vec::with_capacity(len);
    token_ids.push(Vocabulary::CLS_ID);
    segment_ids.push(0);
    char_spans.push(None);
    for (id, _, _) in &q {
        token_ids.push(*id);
        segment_ids.push(0);
        char_spans.push(None);
    }
    token_ids.push(Vocabulary::SEP_ID);
    segment_ids.push(0);
    char_spans.push(None);
    let first = token_ids.len();
    for (id, a, b) in &p {
        token_ids.push(*id);
        segment_ids.push(1);
        char_spans.push(Some((*a, *b)));
    }
    let passage_range = (!p.is_empty()).then(|| (first, first + p.len() - 1));
    token_ids.push(Vocabulary::SEP_ID);
    segment_ids.push(1);
    char_spans.push(None);

    TokenizedInput {
        position_ids: (0..token_ids.len() as u32).collect(),
        token_ids,
        segment_ids,
        char_spans,
        passage_range,
        question_truncated,
        passage_truncated,
        passage: passage.to_string(),
    }
}

/// Smallest token span covering the answer's characters.
pub fn char_to_token_span(input: &TokenizedInput, answer_start: usize, answer_text: &str) -> Result<(usize, usize)> {
    let answer_len = answer_text.chars().count();
    if answer_len == 0 {
        return Err(Error::Contract("empty answer text".into()));
    }
    let answer_end = answer_start + answer_len;
    let Some((first, last)) = input.passage_range else {
        return Err(Error::AnswerTruncated {
            answer_end,
            kept_until: 0,
        });
    };
    let kept_until = input.char_spans[last].map(|s| s.1).unwrap_or(0);
    if input.passage_truncated && answer_end > kept_until {
        return Err(Error::AnswerTruncated { answer_end, kept_until });
    }
    let overlapping = (first..=last).filter(|&i| {
        let (a, b) = input.char_spans[i].expect("passage tokens have spans");
        a < answer_end && b > answer_start
    });
    let (mut lo, mut hi) = (None, None);
    for i in overlapping {
        lo.get_or_insert(i);
        hi = Some(i);
    }
    match (lo, hi) {
        (Some(s), Some(e)) => Ok((s, e)),
        _ => Err(Error::Contract(format!(
            "no passage token overlaps characters {answer_start}..{answer_end}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::vocab::build_vocab;

    fn hp() -> Hyperparams {
        Hyperparams::default()
    }

    #[test]
    fn packs_cls_question_sep_passage_sep() {
        let v = build_vocab(&["who ran", "dogs ran fast"], 100);
        let t = tokenize_pair("who ran", "dogs ran", &v, &hp());
        assert_eq!(t.len(), 7);
        assert_eq!(t.segment_ids, vec![0, 0, 0, 0, 1, 1, 1]);
        assert_eq!(t.token_ids[0], Vocabulary::CLS_ID);
        assert_eq!(t.token_ids[3], Vocabulary::SEP_ID);
        assert_eq!(t.token_ids[6], Vocabulary::SEP_ID);
        assert_eq!(t.passage_range, Some((4, 5)));
        assert_eq!(t.position_ids, (0..7).collect::<Vec<_>>());

        let t = tokenize_pair("who ran", "dogs ran fast", &v, &hp());
        assert_eq!(t.segment_ids, vec![0, 0, 0, 0, 1, 1, 1, 1]);
        assert_eq!(t.passage_range, Some((4, 6)));
    }

    #[test]
    fn long_question_is_capped() {
        let q = (0..100).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let v = build_vocab(&[q.as_str(), "p"], 1000);
        let t = tokenize_pair(&q, "p", &v, &hp());
        assert_eq!(t.segment_ids.iter().filter(|&&s| s == 0).count(), 64 + 2);
        assert!(t.question_truncated);
    }

    #[test]
    fn passage_is_truncated_to_max_seq_len() {
        let p = vec!["x"; 500].join(" ");
        let v = build_vocab(&["q", p.as_str()], 50);
        let t = tokenize_pair("q", &p, &v, &hp());
        assert_eq!(t.len(), 384);
        assert!(t.passage_truncated);
        assert!(matches!(
            char_to_token_span(&t, 2 * 450, "x"),
            Err(Error::AnswerTruncated { .. })
        ));
    }

    #[test]
    fn devanagari_spans_rebuild_passage() {
        let p = "भारत की राजधानी, नई दिल्ली।";
        let v = build_vocab(&["भारत की", "दिल्ली"], 40);
        let t = tokenize_pair("क्या?", p, &v, &hp());
        let (a, b) = t.passage_range.unwrap();
        let chars: Vec<char> = p.chars().collect();
        let rebuilt: String = (a..=b)
            .map(|i| {
                let (s, e) = t.char_spans[i].unwrap();
                chars[s..e].iter().collect::<String>()
            })
            .collect();
        let expected: String = p.chars().filter(|c| !c.is_whitespace()).collect();
        assert_eq!(rebuilt, expected);
        let mut prev = 0;
        for i in a..=b {
            let (s, e) = t.char_spans[i].unwrap();
            assert!(s >= prev && e > s && e <= chars.len());
            prev = e;
        }
    }

    #[test]
    fn answer_to_token_span() {
        let v = build_vocab(&["alpha beta gamma"], 100);
        let t = tokenize_pair("q", "alpha beta gamma", &v, &hp());
        let (a, _) = t.passage_range.unwrap();
        assert_eq!(char_to_token_span(&t, 6, "beta").unwrap(), (a + 1, a + 1));
        assert_eq!(char_to_token_span(&t, 8, "ta gam").unwrap(), (a + 1, a + 2));
        assert_eq!(t.span_text(a + 1, a + 2), "beta gamma");
    }
}
