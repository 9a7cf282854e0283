use std::collections::{HashMap, HashSet};
use std::fmt;

use sha2::{Digest, Sha256};

use super::sanitize::{relocate_answer, sanitize_text, RuleSet};
use crate::data::{Answer, Article, Dataset, LanguageTag, Paragraph, QuestionAnswer};
use crate::error::{Error, Result};

/// One machine-translated instance: `(question, passage, answer, start token, end token)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTuple {
    pub question: String,
    pub passage: String,
    pub answer: String,
    pub start_tok: usize,
    pub end_tok: usize,
    pub lang: LanguageTag,
}

/// Reads tab-separated tuples, one per line:
/// `question, passage, answer, start_tok, end_tok, lang`.
pub fn parse_tuples(text: &str) -> Result<Vec<RawTuple>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let path = format!("line {}", i + 1);
        let fields: Vec<&str> = line.split('\t').collect();
        let [question, passage, answer, start, end, lang] = fields.as_slice() else {
            return Err(Error::Schema {
                path,
                message: format!("expected 6 tab-separated fields, found {}", fields.len()),
            });
        };
        let num = |s: &str, what: &str| {
            s.trim().parse::<usize>().map_err(|_| Error::Schema {
                path: format!("{path}.{what}"),
                message: format!("not a token index: {s:?}"),
            })
        };
        let tuple = RawTuple {
            question: question.to_string(),
            passage: passage.to_string(),
            answer: answer.to_string(),
            start_tok: num(start, "start_tok")?,
            end_tok: num(end, "end_tok")?,
            lang: lang.trim().parse().map_err(|_| Error::Schema {
                path: format!("{path}.lang"),
                message: format!("unknown language {lang:?}"),
            })?,
        };
        if tuple.start_tok > tuple.end_tok {
            return Err(Error::Schema {
                path,
                message: format!("start_tok {} after end_tok {}", tuple.start_tok, tuple.end_tok),
            });
        }
        out.push(tuple);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegroupEvent {
    Dropped { index: usize, question: String, reason: String },
    SyntheticId { index: usize, id: String, question: String },
    SanitizedMatch { index: usize, id: String },
    TokenMismatch { index: usize, id: String, given: (usize, usize), found: (usize, usize) },
}

impl fmt::Display for RegroupEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegroupEvent::Dropped { index, question, reason } => write!(f, "DROPPED\t{index}\t{question}\t{reason}"),
            RegroupEvent::SyntheticId { index, id, question } => write!(f, "SYNTHETIC_ID\t{index}\t{id}\t{question}"),
            RegroupEvent::SanitizedMatch { index, id } => write!(f, "SANITIZED_MATCH\t{index}\t{id}"),
            RegroupEvent::TokenMismatch { index, id, given, found } => write!(
                f,
                "TOKEN_MISMATCH\t{index}\t{id}\t{}-{}\t{}-{}",
                given.0, given.1, found.0, found.1
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegroupReport {
    pub events: Vec<RegroupEvent>,
}

impl RegroupReport {
    pub fn dropped(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, RegroupEvent::Dropped { .. })).count()
    }

    pub fn synthetic(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, RegroupEvent::SyntheticId { .. })).count()
    }
}

impl fmt::Display for RegroupReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.events {
            writeln!(f, "{e}")?;
        }
        Ok(())
    }
}

struct ReferenceParagraph {
    title: String,
    questions: HashMap<String, String>,
}

fn index_reference(reference: &Dataset, rules: &RuleSet) -> HashMap<String, ReferenceParagraph> {
    let clean = |t: &str| sanitize_text(t, rules).unwrap_or_else(|_| t.to_string());
    let mut index: HashMap<String, ReferenceParagraph> = HashMap::new();
    for article in &reference.articles {
        for para in &article.paragraphs {
            let entry = index.entry(clean(&para.context)).or_insert_with(|| ReferenceParagraph {
                title: article.title.clone(),
                questions: HashMap::new(),
            });
            for qa in &para.qas {
                entry.questions.entry(clean(&qa.question)).or_insert_with(|| qa.id.clone());
            }
        }
    }
    index
}

fn synthetic_id(passage: &str, question: &str, used: &HashSet<String>) -> String {
    let digest = Sha256::digest(format!("{passage}\u{1f}{question}").as_bytes());
    let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    let base = format!("syn-{hex}");
    let mut id = base.clone();
    let mut n = 2;
    while used.contains(&id) {
        id = format!("{base}-{n}");
        n += 1;
    }
    id
}

/// Whitespace-token span of the `len`-character substring at `offset`.
fn whitespace_token_span(text: &str, offset: usize, len: usize) -> (usize, usize) {
    let prefix: String = text.chars().take(offset).collect();
    let answer: String = text.chars().skip(offset).take(len).collect();
    let start = if prefix.ends_with(char::is_whitespace) || prefix.is_empty() {
        prefix.split_whitespace().count()
    } else {
        prefix.split_whitespace().count().saturating_sub(1)
    };
    let n = answer.split_whitespace().count().max(1);
    (start, start + n - 1)
}

/// Rebuilds a SQuAD dataset from translated tuples.
///
/// Tuples whose sanitized passages are identical share one paragraph. Each question takes the
/// id of the reference QA with the same sanitized question text inside the same sanitized
/// passage; otherwise it gets a content-hash id. Answers are relocated in the sanitized
/// passage, and instances whose answer cannot be found are dropped and reported.
pub fn regroup_tuples(tuples: &[RawTuple], reference: &Dataset, rules: &RuleSet) -> (Dataset, RegroupReport) {
    let reference = index_reference(reference, rules);
    let mut report = RegroupReport::default();
    let mut used: HashSet<String> = HashSet::new();

    // paragraph order = first appearance; articles keyed by title in first-appearance order
    let mut paragraphs: Vec<(String, Paragraph)> = Vec::new();
    let mut by_passage: HashMap<String, usize> = HashMap::new();

    for (index, t) in tuples.iter().enumerate() {
        let drop = |report: &mut RegroupReport, reason: String| {
            report.events.push(RegroupEvent::Dropped {
                index,
                question: t.question.clone(),
                reason,
            })
        };
        let (passage, question) = match (sanitize_text(&t.passage, rules), sanitize_text(&t.question, rules)) {
            (Ok(p), Ok(q)) => (p, q),
            (Err(e), _) | (_, Err(e)) => {
                drop(&mut report, e.to_string());
                continue;
            }
        };
        if passage.is_empty() {
            drop(&mut report, "empty passage".into());
            continue;
        }
        let reloc = match relocate_answer(&passage, &t.answer, rules) {
            Ok(r) => r,
            Err(e) => {
                drop(&mut report, e.to_string());
                continue;
            }
        };

        let matched = reference
            .get(&passage)
            .and_then(|p| p.questions.get(&question).map(|id| (p.title.clone(), id.clone())))
            .filter(|(_, id)| !used.contains(id));
        let (title, id) = match matched {
            Some(found) => found,
            None => {
                let id = synthetic_id(&passage, &question, &used);
                report.events.push(RegroupEvent::SyntheticId {
                    index,
                    id: id.clone(),
                    question: question.clone(),
                });
                let title = reference.get(&passage).map(|p| p.title.clone()).unwrap_or_else(|| "regrouped".into());
                (title, id)
            }
        };
        used.insert(id.clone());
        if reloc.sanitized {
            report.events.push(RegroupEvent::SanitizedMatch { index, id: id.clone() });
        }
        let found = whitespace_token_span(&passage, reloc.offset, reloc.answer.chars().count());
        if found != (t.start_tok, t.end_tok) {
            report.events.push(RegroupEvent::TokenMismatch {
                index,
                id: id.clone(),
                given: (t.start_tok, t.end_tok),
                found,
            });
        }

        let qa = QuestionAnswer::new(id, question, vec![Answer::new(reloc.answer, Some(reloc.offset))])
            .with_langs(t.lang, t.lang);
        let slot = *by_passage.entry(passage.clone()).or_insert_with(|| {
            paragraphs.push((title, Paragraph::new(passage.clone(), Vec::new())));
            paragraphs.len() - 1
        });
        paragraphs[slot].1.qas.push(qa);
    }

    let mut articles: Vec<Article> = Vec::new();
    let mut by_title: HashMap<String, usize> = HashMap::new();
    for (title, para) in paragraphs {
        let slot = *by_title.entry(title.clone()).or_insert_with(|| {
            articles.push(Article::new(title, Vec::new()));
            articles.len() - 1
        });
        articles[slot].paragraphs.push(para);
    }
    (Dataset::new("v2.0", articles), report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::validate;

    fn tuple(q: &str, p: &str, a: &str) -> RawTuple {
        RawTuple {
            question: q.into(),
            passage: p.into(),
            answer: a.into(),
            start_tok: 0,
            end_tok: 0,
            lang: LanguageTag::En,
        }
    }

    fn reference() -> Dataset {
        Dataset::new(
            "v2.0",
            vec![Article::new(
                "Delhi",
                vec![Paragraph::new(
                    "Delhi is the capital , of India.",
                    vec![QuestionAnswer::new("orig-1", "What is Delhi?", vec![Answer::new("the capital", Some(9))])],
                )],
            )],
        )
    }

    #[test]
    fn identical_passages_share_a_paragraph() {
        let p = "Delhi is the capital of India.";
        let (ds, _) = regroup_tuples(
            &[tuple("Which city?", p, "Delhi"), tuple("Of what?", p, "India")],
            &Dataset::default(),
            &RuleSet::default(),
        );
        assert_eq!(ds.paragraph_count(), 1);
        assert_eq!(ds.qa_count(), 2);
        assert!(validate(&ds).is_empty());
    }

    #[test]
    fn reuses_reference_id_on_exact_question_match() {
        let (ds, report) = regroup_tuples(
            &[tuple("What is  Delhi ?", "Delhi is the capital, of India.", "the capital")],
            &reference(),
            &RuleSet::default(),
        );
        assert_eq!(ds.ids(), vec!["orig-1"]);
        assert_eq!(ds.articles[0].title, "Delhi");
        assert_eq!(report.synthetic(), 0);
    }

    #[test]
    fn unmatched_question_gets_stable_synthetic_id() {
        let t = [tuple("Who?", "Some passage here.", "passage")];
        let (a, ra) = regroup_tuples(&t, &reference(), &RuleSet::default());
        let (b, _) = regroup_tuples(&t, &reference(), &RuleSet::default());
        assert_eq!(a.ids(), b.ids());
        assert!(a.ids()[0].starts_with("syn-"));
        assert_eq!(ra.synthetic(), 1);
    }

    #[test]
    fn corrupted_answer_is_dropped_and_reported() {
        let (ds, report) = regroup_tuples(
            &[tuple("Q1?", "alpha beta gamma", "beta"), tuple("Q2?", "alpha beta gamma", "delta")],
            &Dataset::default(),
            &RuleSet::default(),
        );
        assert_eq!(ds.qa_count(), 1);
        assert_eq!(report.dropped(), 1);
        assert!(report.to_string().lines().any(|l| l.starts_with("DROPPED\t1\tQ2?")));
    }

    #[test]
    fn token_index_discrepancy_is_noted() {
        let mut t = tuple("Q?", "alpha beta gamma", "beta gamma");
        t.start_tok = 1;
        t.end_tok = 2;
        let (_, report) = regroup_tuples(&[t.clone()], &Dataset::default(), &RuleSet::default());
        assert!(!report.events.iter().any(|e| matches!(e, RegroupEvent::TokenMismatch { .. })));
        t.start_tok = 0;
        let (_, report) = regroup_tuples(&[t], &Dataset::default(), &RuleSet::default());
        assert!(report.events.iter().any(|e| matches!(e, RegroupEvent::TokenMismatch { found: (1, 2), .. })));
    }

    #[test]
    fn parses_tab_separated_tuples() {
        let text = "Q?\tP p.\tp\t1\t1\thi\n\nQ2?\tP2\tP2\t0\t0\ten\n";
        let t = parse_tuples(text).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].lang, LanguageTag::Hi);
        assert!(parse_tuples("a\tb\n").is_err());
        assert!(parse_tuples("q\tp\ta\t3\t1\ten\n").is_err());
    }
}
