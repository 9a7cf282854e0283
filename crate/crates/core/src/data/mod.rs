//! SQuAD-format datasets carrying a question and passage language per QA.
//!
//! Character offsets (`answer_start`) count Unicode scalar values from the start of the
//! context, never bytes, so Devanagari and Latin text are addressed the same way.

mod json;
mod validate;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub(crate) use json::byte_offset;
pub use json::{parse_squad, serialize_squad};
pub use validate::{validate, Violation, ViolationKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LanguageTag {
    En,
    Hi,
}

impl LanguageTag {
    pub fn code(self) -> &'static str {
        match self {
            LanguageTag::En => "en",
            LanguageTag::Hi => "hi",
        }
    }

    /// Script-based guess: any Devanagari letter makes the text Hindi.
    pub fn detect(text: &str) -> LanguageTag {
        if text.chars().any(is_devanagari) {
            LanguageTag::Hi
        } else {
            LanguageTag::En
        }
    }
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for LanguageTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "en" => Ok(LanguageTag::En),
            "hi" => Ok(LanguageTag::Hi),
            other => Err(Error::Config(format!("unknown language tag {other:?}, expected en or hi"))),
        }
    }
}

pub fn is_devanagari(c: char) -> bool {
    ('\u{0900}'..='\u{097F}').contains(&c) || ('\u{A8E0}'..='\u{A8FF}').contains(&c)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub version: String,
    pub articles: Vec<Article>,
    /// Unrecognized top-level fields, kept for round-tripping.
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Article {
    pub title: String,
    pub paragraphs: Vec<Paragraph>,
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Paragraph {
    pub context: String,
    pub qas: Vec<QuestionAnswer>,
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuestionAnswer {
    pub id: String,
    pub question: String,
    pub answers: Vec<Answer>,
    pub is_impossible: bool,
    pub question_lang: LanguageTag,
    pub passage_lang: LanguageTag,
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Answer {
    pub text: String,
    pub answer_start: Option<usize>,
    pub extra: Map<String, Value>,
}

impl Answer {
    pub fn new(text: impl Into<String>, answer_start: Option<usize>) -> Self {
        Answer {
            text: text.into(),
            answer_start,
            extra: Map::new(),
        }
    }
}

impl QuestionAnswer {
    /// An answerable English/English QA.
    pub fn new(id: impl Into<String>, question: impl Into<String>, answers: Vec<Answer>) -> Self {
        QuestionAnswer {
            id: id.into(),
            question: question.into(),
            is_impossible: answers.is_empty(),
            answers,
            question_lang: LanguageTag::En,
            passage_lang: LanguageTag::En,
            extra: Map::new(),
        }
    }

    pub fn with_langs(mut self, question_lang: LanguageTag, passage_lang: LanguageTag) -> Self {
        self.question_lang = question_lang;
        self.passage_lang = passage_lang;
        self
    }
}

impl Paragraph {
    pub fn new(context: impl Into<String>, qas: Vec<QuestionAnswer>) -> Self {
        Paragraph {
            context: context.into(),
            qas,
            extra: Map::new(),
        }
    }
}

impl Article {
    pub fn new(title: impl Into<String>, paragraphs: Vec<Paragraph>) -> Self {
        Article {
            title: title.into(),
            paragraphs,
            extra: Map::new(),
        }
    }
}

/// A QA together with the context it is asked against.
#[derive(Debug, Clone, Copy)]
pub struct QaRef<'a> {
    pub context: &'a str,
    pub qa: &'a QuestionAnswer,
}

impl Dataset {
    pub fn new(version: impl Into<String>, articles: Vec<Article>) -> Self {
        Dataset {
            version: version.into(),
            articles,
            extra: Map::new(),
        }
    }

    pub fn qas(&self) -> impl Iterator<Item = QaRef<'_>> {
        self.articles.iter().flat_map(|a| {
            a.paragraphs
                .iter()
                .flat_map(|p| p.qas.iter().map(move |qa| QaRef { context: &p.context, qa }))
        })
    }

    pub fn qas_mut(&mut self) -> impl Iterator<Item = &mut QuestionAnswer> {
        self.articles
            .iter_mut()
            .flat_map(|a| a.paragraphs.iter_mut().flat_map(|p| p.qas.iter_mut()))
    }

    pub fn qa_count(&self) -> usize {
        self.qas().count()
    }

    pub fn paragraph_count(&self) -> usize {
        self.articles.iter().map(|a| a.paragraphs.len()).sum()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.qas().map(|r| r.qa.id.as_str()).collect()
    }

    /// Sets the language tags of every QA.
    pub fn tag_all(&mut self, question_lang: LanguageTag, passage_lang: LanguageTag) {
        for qa in self.qas_mut() {
            qa.question_lang = question_lang;
            qa.passage_lang = passage_lang;
        }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        parse_squad(&bytes)
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, serialize_squad(self)).map_err(|e| Error::io(path, e))
    }
}

/// Substring of `s` by scalar-value offsets, or `None` when out of range.
pub fn char_slice(s: &str, start: usize, len: usize) -> Option<&str> {
    let mut indices = s.char_indices().map(|(b, _)| b).chain(std::iter::once(s.len()));
    let begin = indices.nth(start)?;
    if len == 0 {
        return Some(&s[begin..begin]);
    }
    let end = indices.nth(len - 1)?;
    Some(&s[begin..end])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_slice_counts_scalar_values() {
        let s = "नमस्ते world";
        let k = "नमस्ते".chars().count();
        assert_eq!(char_slice(s, k + 1, 5), Some("world"));
        assert_eq!(char_slice(s, 0, k), Some("नमस्ते"));
        assert_eq!(char_slice(s, s.chars().count(), 0), Some(""));
        assert_eq!(char_slice(s, s.chars().count(), 1), None);
        assert_eq!(char_slice(s, s.chars().count() + 1, 0), None);
    }

    #[test]
    fn detect_language_by_script() {
        assert_eq!(LanguageTag::detect("What is it?"), LanguageTag::En);
        assert_eq!(LanguageTag::detect("यह क्या है?"), LanguageTag::Hi);
        assert_eq!("HI".parse::<LanguageTag>().unwrap(), LanguageTag::Hi);
        assert!("fr".parse::<LanguageTag>().is_err());
    }
}
