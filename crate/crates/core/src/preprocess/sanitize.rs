use std::path::Path;

use regex::Regex;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Abbreviations that get a trailing dot when it is missing.
pub const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "Mr", "Mrs", "Ms", "Dr", "Prof", "Jr", "Sr", "St", "Mt", "vs", "etc", "Inc", "Ltd", "Co", "Corp", "Gen", "Col",
    "Lt", "Sgt", "Capt",
];

#[derive(Debug, Clone)]
pub enum SanitizationRule {
    /// Unicode canonical composition.
    Nfc,
    Replace {
        name: String,
        pattern: Regex,
        replacement: String,
    },
}

impl SanitizationRule {
    pub fn replace(name: &str, pattern: &str, replacement: &str) -> Result<Self> {
        let pattern = Regex::new(pattern).map_err(|source| Error::Rule {
            name: name.to_string(),
            source,
        })?;
        Ok(SanitizationRule::Replace {
            name: name.to_string(),
            pattern,
            replacement: replacement.to_string(),
        })
    }

    pub fn name(&self) -> &str {
        match self {
            SanitizationRule::Nfc => "nfc",
            SanitizationRule::Replace { name, .. } => name,
        }
    }

    /// Rule that appends the missing dot to any of `abbreviations`.
    pub fn abbreviations<S: AsRef<str>>(abbreviations: &[S]) -> Result<Self> {
        let alternatives: Vec<String> = abbreviations.iter().map(|a| regex::escape(a.as_ref())).collect();
        let pattern = format!(r"\b({})\b\.?", alternatives.join("|"));
        Self::replace("abbreviation_dots", &pattern, "$1.")
    }

    pub fn apply(&self, text: &str) -> String {
        match self {
            SanitizationRule::Nfc => text.nfc().collect(),
            SanitizationRule::Replace {
                pattern, replacement, ..
            } => pattern.replace_all(text, replacement.as_str()).into_owned(),
        }
    }
}

/// Ordered list of rules applied by [`sanitize_text`].
#[derive(Debug, Clone)]
pub struct RuleSet {
    pub rules: Vec<SanitizationRule>,
}

impl Default for RuleSet {
    fn default() -> Self {
        Self::with_abbreviations(DEFAULT_ABBREVIATIONS).expect("default rules compile")
    }
}

impl RuleSet {
    pub fn empty() -> Self {
        RuleSet { rules: Vec::new() }
    }

    /// The default rules with a custom abbreviation list.
    pub fn with_abbreviations<S: AsRef<str>>(abbreviations: &[S]) -> Result<Self> {
        let mut rules = vec![
            SanitizationRule::Nfc,
            SanitizationRule::replace("collapse_whitespace", r"\s+", " ")?,
            SanitizationRule::replace("trim", r"^ | $", "")?,
            SanitizationRule::replace("space_before_punctuation", r" +([,.)?!])", "$1")?,
        ];
        if !abbreviations.is_empty() {
            rules.push(SanitizationRule::abbreviations(abbreviations)?);
        }
        Ok(RuleSet { rules })
    }

    /// Parses one rule per line: `name<TAB>pattern<TAB>replacement`.
    ///
    /// Blank lines and lines starting with `#` are skipped. The pattern `<NFC>` selects
    /// Unicode normalization and `<ABBREV>` takes a comma-separated abbreviation list as
    /// its replacement column.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [name, pattern, rest @ ..] = fields.as_slice() else {
                return Err(Error::Config(format!("rule line {}: expected name<TAB>pattern<TAB>replacement", lineno + 1)));
            };
            let replacement = rest.first().copied().unwrap_or("");
            let rule = match *pattern {
                "<NFC>" => SanitizationRule::Nfc,
                "<ABBREV>" => {
                    let list: Vec<&str> = replacement.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
                    SanitizationRule::abbreviations(&list)?
                }
                _ => SanitizationRule::replace(name, pattern, replacement)?,
            };
            rules.push(rule);
        }
        Ok(RuleSet { rules })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn apply_once(&self, text: &str) -> String {
        self.rules.iter().fold(text.to_string(), |t, rule| rule.apply(&t))
    }
}

/// Applies `rules` in order, then checks that a second pass is a no-op.
pub fn sanitize_text(text: &str, rules: &RuleSet) -> Result<String> {
    let once = rules.apply_once(text);
    let twice = rules.apply_once(&once);
    if twice != once {
        return Err(Error::NonConvergent { text: text.to_string() });
    }
    Ok(once)
}

/// Where an answer was found by [`relocate_answer`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relocation {
    /// Scalar-value offset into `context` (raw or sanitized, see `sanitized`).
    pub offset: usize,
    /// True when the match needed sanitized forms of both strings.
    pub sanitized: bool,
    pub context: String,
    pub answer: String,
}

/// Finds the first occurrence of `answer` in `context`, falling back to sanitized forms.
pub fn relocate_answer(context: &str, answer: &str, rules: &RuleSet) -> Result<Relocation> {
    if !answer.is_empty() {
        if let Some(offset) = find_chars(context, answer) {
            return Ok(Relocation {
                offset,
                sanitized: false,
                context: context.to_string(),
                answer: answer.to_string(),
            });
        }
    }
    let ctx = sanitize_text(context, rules)?;
    let ans = sanitize_text(answer, rules)?;
    if !ans.is_empty() {
        if let Some(offset) = find_chars(&ctx, &ans) {
            return Ok(Relocation {
                offset,
                sanitized: true,
                context: ctx,
                answer: ans,
            });
        }
    }
    Err(Error::AnswerNotFound {
        answer: answer.to_string(),
    })
}

fn find_chars(haystack: &str, needle: &str) -> Option<usize> {
    haystack.find(needle).map(|b| haystack[..b].chars().count())
}
