use serde_json::{Map, Value};

use super::{Answer, Article, Dataset, LanguageTag, Paragraph, QuestionAnswer};
use crate::error::{Error, Result};

/// Parses SQuAD v1.1 or v2.0 JSON.
///
/// Absent `is_impossible` reads as `false` and an absent `xlang` extension as English/English.
/// Fields this crate does not model are kept in the `extra` maps.
pub fn parse_squad(bytes: &[u8]) -> Result<Dataset> {
    let root: Value = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })?;
    dataset_from_value(root)
}

/// Emits SQuAD v2.0-layout JSON, with language tags in the `xlang` field of each QA.
pub fn serialize_squad(ds: &Dataset) -> Vec<u8> {
    let value = dataset_to_value(ds);
    serde_json::to_vec_pretty(&value).expect("serializing a JSON value cannot fail")
}

pub(crate) fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = bytes
        .split(|&b| b == b'\n')
        .take(line - 1)
        .map(|l| l.len() + 1)
        .sum();
    (line_start + column.saturating_sub(1)).min(bytes.len())
}

fn schema(path: &str, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_string(),
        message: message.into(),
    }
}

fn into_object(value: Value, path: &str) -> Result<Map<String, Value>> {
    match value {
        Value::Object(map) => Ok(map),
        other => Err(schema(path, format!("expected object, found {}", type_name(&other)))),
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn take(map: &mut Map<String, Value>, key: &str, path: &str) -> Result<Value> {
    map.shift_remove(key)
        .ok_or_else(|| schema(&format!("{path}.{key}"), "missing mandatory field"))
}

fn take_string(map: &mut Map<String, Value>, key: &str, path: &str) -> Result<String> {
    match take(map, key, path)? {
        Value::String(s) => Ok(s),
        other => Err(schema(&format!("{path}.{key}"), format!("expected string, found {}", type_name(&other)))),
    }
}

fn take_array(map: &mut Map<String, Value>, key: &str, path: &str) -> Result<Vec<Value>> {
    match take(map, key, path)? {
        Value::Array(items) => Ok(items),
        other => Err(schema(&format!("{path}.{key}"), format!("expected array, found {}", type_name(&other)))),
    }
}

fn dataset_from_value(root: Value) -> Result<Dataset> {
    let path = "$";
    let mut map = into_object(root, path)?;
    let version = match map.shift_remove("version") {
        None => String::new(),
        Some(Value::String(s)) => s,
        Some(other) => return Err(schema("$.version", format!("expected string, found {}", type_name(&other)))),
    };
    let articles = take_array(&mut map, "data", path)?
        .into_iter()
        .enumerate()
        .map(|(i, v)| article_from_value(v, &format!("$.data[{i}]")))
        .collect::<Result<_>>()?;
    Ok(Dataset {
        version,
        articles,
        extra: map,
    })
}

fn article_from_value(value: Value, path: &str) -> Result<Article> {
    let mut map = into_object(value, path)?;
    let title = match map.shift_remove("title") {
        None => String::new(),
        Some(Value::String(s)) => s,
        Some(other) => return Err(schema(&format!("{path}.title"), format!("expected string, found {}", type_name(&other)))),
    };
    let paragraphs = take_array(&mut map, "paragraphs", path)?
        .into_iter()
        .enumerate()
        .map(|(i, v)| paragraph_from_value(v, &format!("{path}.paragraphs[{i}]")))
        .collect::<Result<_>>()?;
    Ok(Article {
        title,
        paragraphs,
        extra: map,
    })
}

fn paragraph_from_value(value: Value, path: &str) -> Result<Paragraph> {
    let mut map = into_object(value, path)?;
    let context = take_string(&mut map, "context", path)?;
    let qas = take_array(&mut map, "qas", path)?
        .into_iter()
        .enumerate()
        .map(|(i, v)| qa_from_value(v, &format!("{path}.qas[{i}]")))
        .collect::<Result<_>>()?;
    Ok(Paragraph {
        context,
        qas,
        extra: map,
    })
}

fn qa_from_value(value: Value, path: &str) -> Result<QuestionAnswer> {
    let mut map = into_object(value, path)?;
    let id = match take(&mut map, "id", path)? {
        Value::String(s) => s,
        // Some SQuAD derivatives use numeric ids.
        Value::Number(n) => n.to_string(),
        other => return Err(schema(&format!("{path}.id"), format!("expected string, found {}", type_name(&other)))),
    };
    let question = take_string(&mut map, "question", path)?;
    let answers = take_array(&mut map, "answers", path)?
        .into_iter()
        .enumerate()
        .map(|(i, v)| answer_from_value(v, &format!("{path}.answers[{i}]")))
        .collect::<Result<_>>()?;
    let is_impossible = match map.shift_remove("is_impossible") {
        None | Some(Value::Null) => false,
        Some(Value::Bool(b)) => b,
        Some(other) => {
            return Err(schema(&format!("{path}.is_impossible"), format!("expected boolean, found {}", type_name(&other))))
        }
    };
    let (question_lang, passage_lang) = match map.shift_remove("xlang") {
        None => (LanguageTag::En, LanguageTag::En),
        Some(v) => {
            let xpath = format!("{path}.xlang");
            let mut x = into_object(v, &xpath)?;
            let q = take_string(&mut x, "q", &xpath)?;
            let p = take_string(&mut x, "p", &xpath)?;
            let q = q.parse().map_err(|_| schema(&format!("{xpath}.q"), format!("unknown language {q:?}")))?;
            let p = p.parse().map_err(|_| schema(&format!("{xpath}.p"), format!("unknown language {p:?}")))?;
            (q, p)
        }
    };
    Ok(QuestionAnswer {
        id,
        question,
        answers,
        is_impossible,
        question_lang,
        passage_lang,
        extra: map,
    })
}

fn answer_from_value(value: Value, path: &str) -> Result<Answer> {
    let mut map = into_object(value, path)?;
    let text = take_string(&mut map, "text", path)?;
    let answer_start = match map.shift_remove("answer_start") {
        None | Some(Value::Null) => None,
        Some(Value::Number(n)) => Some(
            n.as_u64()
                .ok_or_else(|| schema(&format!("{path}.answer_start"), "expected non-negative integer"))?
                as usize,
        ),
        Some(other) => {
            return Err(schema(&format!("{path}.answer_start"), format!("expected integer, found {}", type_name(&other))))
        }
    };
    Ok(Answer {
        text,
        answer_start,
        extra: map,
    })
}

fn with_extra(mut map: Map<String, Value>, extra: &Map<String, Value>) -> Value {
    for (k, v) in extra {
        map.entry(k.clone()).or_insert_with(|| v.clone());
    }
    Value::Object(map)
}

fn dataset_to_value(ds: &Dataset) -> Value {
    let mut map = Map::new();
    if !ds.version.is_empty() {
        map.insert("version".into(), Value::String(ds.version.clone()));
    }
    map.insert("data".into(), Value::Array(ds.articles.iter().map(article_to_value).collect()));
    with_extra(map, &ds.extra)
}

fn article_to_value(a: &Article) -> Value {
    let mut map = Map::new();
    map.insert("title".into(), Value::String(a.title.clone()));
    map.insert("paragraphs".into(), Value::Array(a.paragraphs.iter().map(paragraph_to_value).collect()));
    with_extra(map, &a.extra)
}

fn paragraph_to_value(p: &Paragraph) -> Value {
    let mut map = Map::new();
    map.insert("context".into(), Value::String(p.context.clone()));
    map.insert("qas".into(), Value::Array(p.qas.iter().map(qa_to_value).collect()));
    with_extra(map, &p.extra)
}

fn qa_to_value(qa: &QuestionAnswer) -> Value {
    let mut map = Map::new();
    map.insert("id".into(), Value::String(qa.id.clone()));
    map.insert("question".into(), Value::String(qa.question.clone()));
    map.insert("answers".into(), Value::Array(qa.answers.iter().map(answer_to_value).collect()));
    map.insert("is_impossible".into(), Value::Bool(qa.is_impossible));
    let mut xlang = Map::new();
    xlang.insert("q".into(), Value::String(qa.question_lang.code().into()));
    xlang.insert("p".into(), Value::String(qa.passage_lang.code().into()));
    map.insert("xlang".into(), Value::Object(xlang));
    with_extra(map, &qa.extra)
}

fn answer_to_value(a: &Answer) -> Value {
    let mut map = Map::new();
    map.insert("text".into(), Value::String(a.text.clone()));
    if let Some(start) = a.answer_start {
        map.insert("answer_start".into(), Value::from(start));
    }
    with_extra(map, &a.extra)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"version": "1.1", "data": [{"title": "T", "paragraphs": [
        {"context": "abc def", "qas": [{"id": "q1", "question": "what?", "answers": [{"text": "def", "answer_start": 4}]}]}]}]}"#;

    #[test]
    fn parses_minimal_document() {
        let ds = parse_squad(MINIMAL.as_bytes()).unwrap();
        assert_eq!(ds.articles.len(), 1);
        assert_eq!(ds.paragraph_count(), 1);
        assert_eq!(ds.qa_count(), 1);
        let qa = &ds.articles[0].paragraphs[0].qas[0];
        assert!(!qa.is_impossible);
        assert_eq!((qa.question_lang, qa.passage_lang), (LanguageTag::En, LanguageTag::En));
        assert_eq!(qa.answers[0].answer_start, Some(4));
    }

    #[test]
    fn malformed_json_reports_byte_position() {
        let text = "{\"data\": [\n  {\"title\": }\n]}";
        match parse_squad(text.as_bytes()) {
            Err(Error::Parse { offset, .. }) => {
                assert_eq!(&text[offset..offset + 1], "}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_field_names_its_path() {
        let text = r#"{"data": [{"title": "T", "paragraphs": [{"context": "c", "qas": [{"id": "x", "answers": []}]}]}]}"#;
        match parse_squad(text.as_bytes()) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "$.data[0].paragraphs[0].qas[0].question"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn empty_dataset_serializes_empty_data_array() {
        let bytes = serialize_squad(&Dataset::default());
        let v: Value = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(v["data"], Value::Array(vec![]));
    }

    #[test]
    fn unknown_fields_survive_round_trip() {
        let text = r#"{"version": "v2.0", "source": "x", "data": [{"title": "T", "paragraphs": [{"context": "c d",
            "qas": [{"id": "x", "question": "q", "answers": [], "is_impossible": true,
                     "plausible_answers": [{"text": "d", "answer_start": 2}]}]}]}]}"#;
        let ds = parse_squad(text.as_bytes()).unwrap();
        assert_eq!(ds.extra["source"], "x");
        let back = parse_squad(&serialize_squad(&ds)).unwrap();
        assert_eq!(back, ds);
        assert!(back.articles[0].paragraphs[0].qas[0].extra.contains_key("plausible_answers"));
    }

    #[test]
    fn devanagari_round_trip_preserves_code_points() {
        let ctx = "भारत की राजधानी नई दिल्ली है।";
        let mut ds = Dataset::new(
            "1.1",
            vec![Article::new(
                "भारत",
                vec![Paragraph::new(
                    ctx,
                    vec![QuestionAnswer::new("h1", "राजधानी क्या है?", vec![Answer::new("नई दिल्ली", Some(16))])],
                )],
            )],
        );
        ds.tag_all(LanguageTag::Hi, LanguageTag::Hi);
        let back = parse_squad(&serialize_squad(&ds)).unwrap();
        assert_eq!(back, ds);
        let before: Vec<char> = ctx.chars().collect();
        let after: Vec<char> = back.articles[0].paragraphs[0].context.chars().collect();
        assert_eq!(before, after);
        assert_eq!(back.articles[0].paragraphs[0].qas[0].passage_lang, LanguageTag::Hi);
    }

    #[test]
    fn bad_language_tag_is_schema_error() {
        let text = r#"{"data": [{"title": "T", "paragraphs": [{"context": "c", "qas": [{"id": "x", "question": "q",
            "answers": [], "xlang": {"q": "fr", "p": "en"}}]}]}]}"#;
        assert!(matches!(parse_squad(text.as_bytes()), Err(Error::Schema { .. })));
    }
}
