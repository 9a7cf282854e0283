use std::collections::BTreeMap;

use serde::Deserialize;

use crate::data::{Answer, Article, Dataset, LanguageTag, Paragraph, QuestionAnswer};
use crate::error::{Error, Result};
use crate::variants::MultilingualSetting;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum MmqaLang {
    #[serde(alias = "english", alias = "en", alias = "EN")]
    EnglishOnly,
    #[serde(alias = "hindi", alias = "hi", alias = "HI")]
    HindiOnly,
    #[serde(alias = "both", alias = "BOTH")]
    Both,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct MmqaInstance {
    pub question: String,
    pub snippet: String,
    pub answer: String,
    #[serde(alias = "lang")]
    pub lang_field: MmqaLang,
}

/// Reads a JSON array of `{question, snippet, answer, lang}` objects.
pub fn parse_mmqa(bytes: &[u8]) -> Result<Vec<MmqaInstance>> {
    let instances: Vec<MmqaInstance> = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        offset: crate::data::byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })?;
    if let Some(i) = instances.iter().position(|x| x.snippet.trim().is_empty()) {
        return Err(Error::Schema {
            path: format!("$[{i}].snippet"),
            message: "empty snippet".into(),
        });
    }
    Ok(instances)
}

/// The evaluation setting an instance belongs to.
///
/// Single-language instances map to the monolingual settings. A `Both` occurrence is placed by
/// the script of its question and of its snippet, so the English-question and Hindi-question
/// occurrences of one source instance land in the two cross-lingual settings.
pub fn setting_of(x: &MmqaInstance) -> MultilingualSetting {
    match x.lang_field {
        MmqaLang::EnglishOnly => MultilingualSetting::EN_EN,
        MmqaLang::HindiOnly => MultilingualSetting::HI_HI,
        MmqaLang::Both => MultilingualSetting::new(LanguageTag::detect(&x.question), LanguageTag::detect(&x.snippet)),
    }
}

/// Partitions instances over the four settings; all four keys are always present.
pub fn mmqa_bucket(instances: &[MmqaInstance]) -> BTreeMap<MultilingualSetting, Vec<MmqaInstance>> {
    let mut buckets: BTreeMap<_, Vec<_>> = MultilingualSetting::ALL.iter().map(|s| (*s, Vec::new())).collect();
    for x in instances {
        buckets.get_mut(&setting_of(x)).expect("all settings present").push(x.clone());
    }
    buckets
}

/// One paragraph per instance, with the answer text only: MMQA answers are not guaranteed
/// to be quotations of the snippet, so no start offset is recorded.
pub fn mmqa_to_squad(instances: &[MmqaInstance]) -> Dataset {
    let paragraphs = instances
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let s = setting_of(x);
            let qa = QuestionAnswer::new(format!("mmqa-{i}"), x.question.clone(), vec![Answer::new(x.answer.clone(), None)])
                .with_langs(s.question_lang, s.passage_lang);
            Paragraph::new(x.snippet.clone(), vec![qa])
        })
        .collect::<Vec<_>>();
    let articles = if paragraphs.is_empty() {
        Vec::new()
    } else {
        vec![Article::new("mmqa", paragraphs)]
    };
    Dataset::new("v2.0", articles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::validate;

    fn inst(q: &str, s: &str, a: &str, l: MmqaLang) -> MmqaInstance {
        MmqaInstance {
            question: q.into(),
            snippet: s.into(),
            answer: a.into(),
            lang_field: l,
        }
    }

    #[test]
    fn english_only_goes_to_en_en() {
        let b = mmqa_bucket(&[inst("Who?", "Ram went.", "Ram", MmqaLang::EnglishOnly)]);
        assert_eq!(b[&MultilingualSetting::EN_EN].len(), 1);
        assert_eq!(b.values().map(Vec::len).sum::<usize>(), 1);
    }

    #[test]
    fn empty_input_gives_four_empty_buckets() {
        let b = mmqa_bucket(&[]);
        assert_eq!(b.len(), 4);
        assert!(b.values().all(Vec::is_empty));
    }

    #[test]
    fn both_instances_split_by_script() {
        let list = vec![
            inst("Who went?", "राम गया।", "राम", MmqaLang::Both),
            inst("कौन गया?", "Ram went.", "Ram", MmqaLang::Both),
            inst("कौन?", "राम गया।", "राम", MmqaLang::HindiOnly),
            inst("Who?", "Ram went.", "Ram", MmqaLang::EnglishOnly),
            inst("Who?", "Ram went.", "Ram", MmqaLang::EnglishOnly),
        ];
        let b = mmqa_bucket(&list);
        let expected = [
            (MultilingualSetting::EN_EN, 2),
            (MultilingualSetting::EN_HI, 1),
            (MultilingualSetting::HI_EN, 1),
            (MultilingualSetting::HI_HI, 1),
        ];
        for (s, n) in expected {
            assert_eq!(b[&s].len(), n, "{s}");
        }
    }

    #[test]
    fn converts_hindi_instance_without_offset() {
        let ds = mmqa_to_squad(&[inst("कौन?", "राम गया।", "राम", MmqaLang::HindiOnly)]);
        let qa = ds.qas().next().unwrap().qa;
        assert_eq!((qa.question_lang, qa.passage_lang), (LanguageTag::Hi, LanguageTag::Hi));
        assert_eq!(qa.answers[0].answer_start, None);
        assert!(validate(&ds).is_empty());
    }

    #[test]
    fn abstractive_answers_are_kept() {
        let ds = mmqa_to_squad(&[inst("Who?", "Ram went home.", "the king", MmqaLang::EnglishOnly)]);
        assert_eq!(ds.qas().next().unwrap().qa.answers[0].text, "the king");
        assert!(mmqa_to_squad(&[]).articles.is_empty());
    }

    #[test]
    fn parses_lang_field_spellings() {
        let text = r#"[{"question": "q", "snippet": "s", "answer": "a", "lang": "both"},
                       {"question": "q", "snippet": "s", "answer": "a", "lang_field": "HindiOnly"}]"#;
        let v = parse_mmqa(text.as_bytes()).unwrap();
        assert_eq!(v[0].lang_field, MmqaLang::Both);
        assert_eq!(v[1].lang_field, MmqaLang::HindiOnly);
        assert!(parse_mmqa(br#"[{"question": "q", "snippet": " ", "answer": "a", "lang": "en"}]"#).is_err());
    }
}
