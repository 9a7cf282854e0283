//! The four question/passage language settings and the datasets built for them.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LanguageTag};
use crate::error::{Error, Result};

/// A (question language, passage language) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MultilingualSetting {
    pub question_lang: LanguageTag,
    pub passage_lang: LanguageTag,
}

impl MultilingualSetting {
    pub const EN_EN: Self = Self::new(LanguageTag::En, LanguageTag::En);
    pub const EN_HI: Self = Self::new(LanguageTag::En, LanguageTag::Hi);
    pub const HI_EN: Self = Self::new(LanguageTag::Hi, LanguageTag::En);
    pub const HI_HI: Self = Self::new(LanguageTag::Hi, LanguageTag::Hi);

    /// Report column order.
    pub const ALL: [Self; 4] = [Self::EN_EN, Self::EN_HI, Self::HI_EN, Self::HI_HI];

    pub const fn new(question_lang: LanguageTag, passage_lang: LanguageTag) -> Self {
        MultilingualSetting {
            question_lang,
            passage_lang,
        }
    }

    pub fn is_cross_lingual(self) -> bool {
        self.question_lang != self.passage_lang
    }

    /// Table header form, e.g. `Q_E-P_H`.
    pub fn label(self) -> String {
        let letter = |l: LanguageTag| match l {
            LanguageTag::En => 'E',
            LanguageTag::Hi => 'H',
        };
        format!("Q_{}-P_{}", letter(self.question_lang), letter(self.passage_lang))
    }
}

impl fmt::Display for MultilingualSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.question_lang, self.passage_lang)
    }
}

impl FromStr for MultilingualSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (q, p) = s
            .split_once('-')
            .ok_or_else(|| Error::Config(format!("setting {s:?} must look like en-hi")))?;
        Ok(Self::new(q.parse()?, p.parse()?))
    }
}

impl TryFrom<String> for MultilingualSetting {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MultilingualSetting> for String {
    fn from(s: MultilingualSetting) -> String {
        s.to_string()
    }
}

fn id_set(ds: &Dataset) -> BTreeSet<&str> {
    ds.qas().map(|r| r.qa.id.as_str()).collect()
}

/// Builds the dataset for `setting` from id-aligned English and Hindi monolingual datasets.
///
/// For a cross-lingual setting, each QA takes its question from the question-language input
/// and its context and gold answers from the passage-language input. Monolingual settings
/// return the matching input with its tags set to the setting.
pub fn build_cross_variant(mono_en: &Dataset, mono_hi: &Dataset, setting: MultilingualSetting) -> Result<Dataset> {
    let (question_src, passage_src) = match (setting.question_lang, setting.passage_lang) {
        (LanguageTag::En, LanguageTag::En) => return Ok(tagged(mono_en, setting)),
        (LanguageTag::Hi, LanguageTag::Hi) => return Ok(tagged(mono_hi, setting)),
        (LanguageTag::En, LanguageTag::Hi) => (mono_en, mono_hi),
        (LanguageTag::Hi, LanguageTag::En) => (mono_hi, mono_en),
    };
    let en_ids = id_set(mono_en);
    let hi_ids = id_set(mono_hi);
    if en_ids != hi_ids {
        return Err(Error::Alignment {
            only_en: en_ids.difference(&hi_ids).map(|s| s.to_string()).collect(),
            only_hi: hi_ids.difference(&en_ids).map(|s| s.to_string()).collect(),
        });
    }
    let questions: HashMap<&str, &str> = question_src.qas().map(|r| (r.qa.id.as_str(), r.qa.question.as_str())).collect();
    let mut out = passage_src.clone();
    for qa in out.qas_mut() {
        qa.question = questions[qa.id.as_str()].to_string();
        qa.question_lang = setting.question_lang;
        qa.passage_lang = setting.passage_lang;
    }
    Ok(out)
}

fn tagged(ds: &Dataset, setting: MultilingualSetting) -> Dataset {
    let mut out = ds.clone();
    out.tag_all(setting.question_lang, setting.passage_lang);
    out
}

/// Restricts both datasets to the ids they share, returning the dropped ids.
///
/// Used before [`build_cross_variant`] when preprocessing dropped different instances in the
/// two languages.
pub fn intersect_parallel(mono_en: &Dataset, mono_hi: &Dataset) -> (Dataset, Dataset, Vec<String>) {
    let en_ids = id_set(mono_en);
    let hi_ids = id_set(mono_hi);
    let keep: BTreeSet<String> = en_ids.intersection(&hi_ids).map(|s| s.to_string()).collect();
    let dropped: Vec<String> = en_ids.symmetric_difference(&hi_ids).map(|s| s.to_string()).collect();
    let filter = |ds: &Dataset| {
        let mut out = ds.clone();
        for article in &mut out.articles {
            for para in &mut article.paragraphs {
                para.qas.retain(|qa| keep.contains(&qa.id));
            }
            article.paragraphs.retain(|p| !p.qas.is_empty());
        }
        out.articles.retain(|a| !a.paragraphs.is_empty());
        out
    };
    if !dropped.is_empty() {
        log::info!("intersection rule dropped {} id(s) present in only one language", dropped.len());
    }
    (filter(mono_en), filter(mono_hi), dropped)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitReport {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    /// Ids found in more than one split, with the split names.
    pub leaks: Vec<(String, Vec<&'static str>)>,
}

impl SplitReport {
    pub fn is_clean(&self) -> bool {
        self.leaks.is_empty()
    }
}

/// Reports split sizes and any QA id shared between splits.
pub fn split_check(train: &Dataset, dev: &Dataset, test: &Dataset) -> SplitReport {
    let mut seen: HashMap<&str, Vec<&'static str>> = HashMap::new();
    for (name, ds) in [("train", train), ("dev", dev), ("test", test)] {
        for id in id_set(ds) {
            seen.entry(id).or_default().push(name);
        }
    }
    let mut leaks: Vec<(String, Vec<&'static str>)> = seen
        .into_iter()
        .filter(|(_, splits)| splits.len() > 1)
        .map(|(id, splits)| (id.to_string(), splits))
        .collect();
    leaks.sort();
    SplitReport {
        train: train.qa_count(),
        dev: dev.qa_count(),
        test: test.qa_count(),
        leaks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Answer, Article, Paragraph, QuestionAnswer};

    fn ds(prefix: &str, n: usize, hindi: bool) -> Dataset {
        let ctx = if hindi { "राम घर गया।" } else { "Ram went home." };
        let ans = if hindi { ("राम", 0) } else { ("Ram", 0) };
        let qas = (0..n)
            .map(|i| {
                let q = if hindi { format!("कौन {i}?") } else { format!("Who {i}?") };
                QuestionAnswer::new(format!("{prefix}{i}"), q, vec![Answer::new(ans.0, Some(ans.1))])
            })
            .collect();
        Dataset::new("1.1", vec![Article::new("a", vec![Paragraph::new(ctx, qas)])])
    }

    #[test]
    fn settings_parse_and_print() {
        for s in MultilingualSetting::ALL {
            assert_eq!(s.to_string().parse::<MultilingualSetting>().unwrap(), s);
        }
        assert_eq!(MultilingualSetting::EN_HI.label(), "Q_E-P_H");
        assert!("en_hi".parse::<MultilingualSetting>().is_err());
        assert_eq!(serde_json::to_string(&MultilingualSetting::HI_EN).unwrap(), "\"hi-en\"");
    }

    #[test]
    fn en_en_is_identity() {
        let en = ds("q", 3, false);
        assert_eq!(build_cross_variant(&en, &ds("q", 3, true), MultilingualSetting::EN_EN).unwrap(), en);
    }

    #[test]
    fn cross_variant_takes_question_and_passage_from_the_right_side() {
        let en = ds("q", 3, false);
        let hi = ds("q", 3, true);
        let v = build_cross_variant(&en, &hi, MultilingualSetting::EN_HI).unwrap();
        for (r, e) in v.qas().zip(en.qas()) {
            assert_eq!(r.qa.question, e.qa.question);
            assert_eq!(r.context, "राम घर गया।");
            assert_eq!(r.qa.answers[0].text, "राम");
            assert_eq!((r.qa.question_lang, r.qa.passage_lang), (LanguageTag::En, LanguageTag::Hi));
        }
        let again = build_cross_variant(&en, &v, MultilingualSetting::EN_HI).unwrap();
        assert_eq!(again, v);
    }

    #[test]
    fn missing_id_is_an_alignment_error() {
        let en = ds("q", 3, false);
        let mut hi = ds("q", 3, true);
        hi.articles[0].paragraphs[0].qas.remove(1);
        match build_cross_variant(&en, &hi, MultilingualSetting::HI_EN) {
            Err(Error::Alignment { only_en, only_hi }) => {
                assert_eq!(only_en, vec!["q1".to_string()]);
                assert!(only_hi.is_empty());
            }
            other => panic!("expected alignment error, got {other:?}"),
        }
        let (e, h, dropped) = intersect_parallel(&en, &hi);
        assert_eq!(dropped, vec!["q1".to_string()]);
        assert!(build_cross_variant(&e, &h, MultilingualSetting::HI_EN).is_ok());
    }

    #[test]
    fn split_sizes_and_leaks() {
        let r = split_check(&ds("tr", 10454, false), &ds("dv", 2000, false), &ds("te", 6000, false));
        assert_eq!((r.train, r.dev, r.test), (10454, 2000, 6000));
        assert!(r.is_clean());

        let mut test = ds("te", 3, false);
        test.articles[0].paragraphs[0].qas[0].id = "tr1".into();
        let r = split_check(&ds("tr", 3, false), &Dataset::default(), &test);
        assert_eq!(r.dev, 0);
        assert_eq!(r.leaks, vec![("tr1".to_string(), vec!["train", "test"])]);
    }
}
