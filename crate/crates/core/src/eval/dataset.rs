//! VQA-style dataset files. Field names are documented in `docs/datasets.md`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::accuracy::ANNOTATORS;
use crate::types::ImageRef;

/// One evaluation question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SampleRepr")]
pub struct VqaSample {
    pub question_id: u64,
    pub image: ImageRef,
    pub question: String,
    /// Exactly ten answers when present.
    pub human_answers: Option<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleRepr {
    question_id: u64,
    image: ImageRef,
    question: String,
    #[serde(default)]
    human_answers: Option<Vec<String>>,
}

impl TryFrom<SampleRepr> for VqaSample {
    type Error = String;

    fn try_from(r: SampleRepr) -> Result<Self, Self::Error> {
        VqaSample::new(r.question_id, r.image, r.question, r.human_answers)
    }
}

impl VqaSample {
    pub fn new(
        question_id: u64,
        image: ImageRef,
        question: impl Into<String>,
        human_answers: Option<Vec<String>>,
    ) -> Result<Self, String> {
        let question = question.into();
        if question.trim().is_empty() {
            return Err("question must not be empty".into());
        }
        if let Some(h) = &human_answers {
            if h.len() != ANNOTATORS {
                return Err(format!("expected {ANNOTATORS} human answers, got {}", h.len()));
            }
        }
        Ok(Self { question_id, image, question, human_answers })
    }

    pub fn sample_id(&self) -> String {
        self.question_id.to_string()
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{file} record {index}: {message}")]
    Parse { file: String, index: usize, message: String },
    #[error("annotation for question_id {question_id} has no matching question")]
    Join { question_id: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    /// VQAv2 / OK-VQA question and annotation files.
    #[default]
    Vqa,
    /// A single A-OKVQA split file.
    Aokvqa,
}

/// Expands `{image_id}` or a zero-padded `{image_id:0N}` in `template`.
pub fn image_uri(template: &str, image_id: &str) -> String {
    let Some(start) = template.find("{image_id") else { return template.to_owned() };
    let rest = &template[start + "{image_id".len()..];
    let Some(end) = rest.find('}') else { return template.to_owned() };
    let fmt = &rest[..end];
    let value = match fmt.strip_prefix(":0").and_then(|w| w.parse::<usize>().ok()) {
        Some(width) => format!("{image_id:0>width$}"),
        None if fmt.is_empty() => image_id.to_owned(),
        None => return template.to_owned(),
    };
    format!("{}{}{}", &template[..start], value, &rest[end + 1..])
}

fn read_json(path: &Path) -> Result<Value, DatasetError> {
    let name = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io { path: name.clone(), source })?;
    serde_json::from_str(&text).map_err(|e| DatasetError::Parse { file: name, index: 0, message: e.to_string() })
}

fn records<'a>(doc: &'a Value, key: &str, file: &str) -> Result<&'a Vec<Value>, DatasetError> {
    let list = match doc {
        Value::Array(items) => Some(items),
        Value::Object(map) => map.get(key).and_then(Value::as_array),
        _ => None,
    };
    list.ok_or_else(|| DatasetError::Parse { file: file.into(), index: 0, message: format!("missing \"{key}\" array") })
}

fn id_string(v: &Value) -> Option<String> {
    match v {
        Value::Number(n) => n.as_u64().map(|n| n.to_string()),
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        _ => None,
    }
}

#[derive(Deserialize)]
struct QuestionRecord {
    question_id: u64,
    image_id: Value,
    question: String,
}

#[derive(Deserialize)]
struct AnswerRecord {
    answer: String,
}

#[derive(Deserialize)]
struct AnnotationRecord {
    question_id: u64,
    answers: Vec<AnswerRecord>,
}

#[derive(Deserialize)]
struct AokvqaRecord {
    image_id: Value,
    question: String,
    #[serde(default)]
    direct_answers: Option<Vec<String>>,
}

/// Loads VQAv2 / OK-VQA style files. Samples keep the question file's
/// order; questions without an annotation are left unscored.
pub fn load_vqa(
    questions_path: &Path,
    annotations_path: Option<&Path>,
    uri_template: &str,
) -> Result<Vec<VqaSample>, DatasetError> {
    let qfile = questions_path.display().to_string();
    let doc = read_json(questions_path)?;
    let mut samples = Vec::new();
    let mut by_id = HashMap::new();
    for (index, raw) in records(&doc, "questions", &qfile)?.iter().enumerate() {
        let parse = |message: String| DatasetError::Parse { file: qfile.clone(), index, message };
        let r: QuestionRecord = serde_json::from_value(raw.clone()).map_err(|e| parse(e.to_string()))?;
        let image_id = id_string(&r.image_id).ok_or_else(|| parse("image_id must be a number or string".into()))?;
        let image = ImageRef::new(image_id.clone(), image_uri(uri_template, &image_id)).map_err(|e| parse(e.to_string()))?;
        let sample = VqaSample::new(r.question_id, image, r.question, None).map_err(parse)?;
        if by_id.insert(r.question_id, samples.len()).is_some() {
            return Err(parse(format!("duplicate question_id {}", r.question_id)));
        }
        samples.push(sample);
    }

    if let Some(apath) = annotations_path {
        let afile = apath.display().to_string();
        let doc = read_json(apath)?;
        for (index, raw) in records(&doc, "annotations", &afile)?.iter().enumerate() {
            let parse = |message: String| DatasetError::Parse { file: afile.clone(), index, message };
            let r: AnnotationRecord = serde_json::from_value(raw.clone()).map_err(|e| parse(e.to_string()))?;
            if r.answers.len() != ANNOTATORS {
                return Err(parse(format!("expected {ANNOTATORS} answers, got {}", r.answers.len())));
            }
            let pos = *by_id.get(&r.question_id).ok_or(DatasetError::Join { question_id: r.question_id })?;
            samples[pos].human_answers = Some(r.answers.into_iter().map(|a| a.answer).collect());
        }
    }
    Ok(samples)
}

/// Loads an A-OKVQA split. Its string question ids are replaced by the
/// record position.
pub fn load_aokvqa(path: &Path, uri_template: &str) -> Result<Vec<VqaSample>, DatasetError> {
    let file = path.display().to_string();
    let doc = read_json(path)?;
    let mut samples = Vec::new();
    for (index, raw) in records(&doc, "questions", &file)?.iter().enumerate() {
        let parse = |message: String| DatasetError::Parse { file: file.clone(), index, message };
        let r: AokvqaRecord = serde_json::from_value(raw.clone()).map_err(|e| parse(e.to_string()))?;
        let image_id = id_string(&r.image_id).ok_or_else(|| parse("image_id must be a number or string".into()))?;
        let image = ImageRef::new(image_id.clone(), image_uri(uri_template, &image_id)).map_err(|e| parse(e.to_string()))?;
        samples.push(VqaSample::new(index as u64, image, r.question, r.direct_answers).map_err(parse)?);
    }
    Ok(samples)
}

pub fn load_dataset(
    format: DatasetFormat,
    questions_path: &Path,
    annotations_path: Option<&Path>,
    uri_template: &str,
) -> Result<Vec<VqaSample>, DatasetError> {
    match format {
        DatasetFormat::Vqa => load_vqa(questions_path, annotations_path, uri_template),
        DatasetFormat::Aokvqa => load_aokvqa(questions_path, uri_template),
    }
}

/// Writes samples in the VQAv2 question / annotation shape.
pub fn to_vqa_files(samples: &[VqaSample]) -> (Value, Value) {
    let questions: Vec<Value> = samples
        .iter()
        .map(|s| serde_json::json!({"image_id": s.image.id, "question": s.question, "question_id": s.question_id}))
        .collect();
    let annotations: Vec<Value> = samples
        .iter()
        .filter_map(|s| {
            let answers = s.human_answers.as_ref()?;
            let answers: Vec<Value> = answers
                .iter()
                .enumerate()
                .map(|(i, a)| serde_json::json!({"answer": a, "answer_id": i + 1}))
                .collect();
            Some(serde_json::json!({"question_id": s.question_id, "image_id": s.image.id, "answers": answers}))
        })
        .collect();
    let mut q = BTreeMap::new();
    q.insert("questions", questions);
    let mut a = BTreeMap::new();
    a.insert("annotations", annotations);
    (serde_json::json!(q), serde_json::json!(a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, v: &Value) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::File::create(&p).unwrap().write_all(v.to_string().as_bytes()).unwrap();
        p
    }

    fn ten(a: &str) -> Vec<Value> {
        (0..10).map(|i| serde_json::json!({"answer": a, "answer_id": i})).collect()
    }

    #[test]
    fn join_two_questions() {
        let d = tempfile::tempdir().unwrap();
        let q = write(&d, "q.json", &serde_json::json!({"questions": [
            {"image_id": 42, "question": "What is it?", "question_id": 420},
            {"image_id": 7, "question": "Why?", "question_id": 70},
        ]}));
        let a = write(&d, "a.json", &serde_json::json!({"annotations": [
            {"question_id": 70, "image_id": 7, "answers": ten("because")},
            {"question_id": 420, "image_id": 42, "answers": ten("dog")},
        ]}));
        let s = load_vqa(&q, Some(&a), "coco/COCO_val2014_{image_id:012}.jpg").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].question_id, 420);
        assert_eq!(s[0].image.uri, "coco/COCO_val2014_000000000042.jpg");
        assert_eq!(s[0].human_answers.as_ref().unwrap()[0], "dog");
        assert_eq!(s[1].human_answers.as_ref().unwrap().len(), 10);

        let only = load_vqa(&q, None, "{image_id}").unwrap();
        assert!(only.iter().all(|s| s.human_answers.is_none()));
        assert_eq!(only[1].image.uri, "7");
    }

    #[test]
    fn nine_answers_is_a_parse_error() {
        let d = tempfile::tempdir().unwrap();
        let q = write(&d, "q.json", &serde_json::json!({"questions": [{"image_id": 1, "question": "Q?", "question_id": 1}]}));
        let mut nine = ten("x");
        nine.pop();
        let a = write(&d, "a.json", &serde_json::json!({"annotations": [
            {"question_id": 1, "answers": ten("x")},
            {"question_id": 1, "answers": nine},
        ]}));
        match load_vqa(&q, Some(&a), "{image_id}") {
            Err(DatasetError::Parse { index: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_question_id_is_a_join_error() {
        let d = tempfile::tempdir().unwrap();
        let q = write(&d, "q.json", &serde_json::json!({"questions": [{"image_id": 1, "question": "Q?", "question_id": 1}]}));
        let a = write(&d, "a.json", &serde_json::json!({"annotations": [{"question_id": 2, "answers": ten("x")}]}));
        assert!(matches!(load_vqa(&q, Some(&a), "{image_id}"), Err(DatasetError::Join { question_id: 2 })));
    }

    #[test]
    fn bad_records_report_their_index() {
        let d = tempfile::tempdir().unwrap();
        let q = write(&d, "q.json", &serde_json::json!({"questions": [
            {"image_id": 1, "question": "Q?", "question_id": 1},
            {"image_id": 2, "question_id": 2},
        ]}));
        assert!(matches!(load_vqa(&q, None, "{image_id}"), Err(DatasetError::Parse { index: 1, .. })));
        assert!(matches!(load_vqa(&d.path().join("nope.json"), None, ""), Err(DatasetError::Io { .. })));
    }

    #[test]
    fn aokvqa_uses_positions() {
        let d = tempfile::tempdir().unwrap();
        let p = write(&d, "val.json", &serde_json::json!([
            {"question_id": "abc", "image_id": 299, "question": "What sport?", "direct_answers": vec!["tennis"; 10], "choices": ["a"]},
            {"question_id": "def", "image_id": 300, "question": "Where?"},
        ]));
        let s = load_aokvqa(&p, "{image_id}").unwrap();
        assert_eq!(s.iter().map(|s| s.question_id).collect::<Vec<_>>(), vec![0, 1]);
        assert!(s[1].human_answers.is_none());
    }

    #[test]
    fn vqa_files_round_trip() {
        let d = tempfile::tempdir().unwrap();
        let samples = vec![
            VqaSample::new(5, ImageRef::new("9", "9").unwrap(), "Q?", Some(vec!["a".into(); 10])).unwrap(),
            VqaSample::new(6, ImageRef::new("10", "10").unwrap(), "R?", None).unwrap(),
        ];
        let (q, a) = to_vqa_files(&samples);
        let back = load_vqa(&write(&d, "q.json", &q), Some(&write(&d, "a.json", &a)), "{image_id}").unwrap();
        assert_eq!(back, samples);
    }

    #[test]
    fn uri_templates() {
        assert_eq!(image_uri("img/{image_id}.jpg", "3"), "img/3.jpg");
        assert_eq!(image_uri("{image_id:05}", "42"), "00042");
        assert_eq!(image_uri("static", "42"), "static");
    }

    #[test]
    fn sample_json_rejects_nine_answers() {
        let bad = serde_json::json!({"question_id": 1, "image": {"id": "i", "uri": ""}, "question": "Q", "human_answers": vec!["a"; 9]});
        assert!(serde_json::from_value::<VqaSample>(bad).is_err());
    }
}
