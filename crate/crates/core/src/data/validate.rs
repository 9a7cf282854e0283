use std::collections::HashSet;
use std::fmt;

use super::{char_slice, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum ViolationKind {
    DuplicateId,
    OffsetMismatch,
    EmptyAnswers,
    AnswersOnImpossible,
    EmptyContext,
    EmptyArticle,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Violation {
    pub qa_id: String,
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{:?}\t{}", self.qa_id, self.kind, self.detail)
    }
}

/// Reports every broken invariant of `ds`. Never fails.
///
/// Article/paragraph-level problems carry an empty `qa_id`.
pub fn validate(ds: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (ai, article) in ds.articles.iter().enumerate() {
        if article.paragraphs.is_empty() {
            out.push(Violation {
                qa_id: String::new(),
                kind: ViolationKind::EmptyArticle,
                detail: format!("article {ai} ({:?}) has no paragraphs", article.title),
            });
        }
        for (pi, para) in article.paragraphs.iter().enumerate() {
            if para.context.trim().is_empty() {
                out.push(Violation {
                    qa_id: String::new(),
                    kind: ViolationKind::EmptyContext,
                    detail: format!("article {ai} paragraph {pi} has an empty context"),
                });
            }
            for qa in &para.qas {
                if !seen.insert(qa.id.as_str()) {
                    out.push(Violation {
                        qa_id: qa.id.clone(),
                        kind: ViolationKind::DuplicateId,
                        detail: "id already used by an earlier question".into(),
                    });
                }
                if qa.is_impossible && !qa.answers.is_empty() {
                    out.push(Violation {
                        qa_id: qa.id.clone(),
                        kind: ViolationKind::AnswersOnImpossible,
                        detail: format!("{} answer(s) on an impossible question", qa.answers.len()),
                    });
                }
                if !qa.is_impossible && qa.answers.is_empty() {
                    out.push(Violation {
                        qa_id: qa.id.clone(),
                        kind: ViolationKind::EmptyAnswers,
                        detail: "answerable question without answers".into(),
                    });
                }
                for answer in &qa.answers {
                    let Some(start) = answer.answer_start else { continue };
                    let found = char_slice(&para.context, start, answer.text.chars().count());
                    if found != Some(answer.text.as_str()) {
                        out.push(Violation {
                            qa_id: qa.id.clone(),
                            kind: ViolationKind::OffsetMismatch,
                            detail: format!("expected {:?} at {start}, found {:?}", answer.text, found.unwrap_or("<out of range>")),
                        });
                    }
                }
            }
        }
    }
    out
}
