//! Request and response bodies for every endpoint.
//!
//! Every response is wrapped in an [`Envelope`]:
//! `{"ok": true, "payload": {...}}` or `{"ok": false, "error": "..."}`.
//! Field names here are the wire contract; `docs/protocol.md` mirrors them.
//! Requests reject unknown fields so a server can prove, for example, that
//! nothing but a question reached the QA model.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct Envelope<T> {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<T>,
}

impl<T> Envelope<T> {
    pub fn success(payload: T) -> Self {
        Self { ok: true, error: None, payload: Some(payload) }
    }

    pub fn failure(message: impl Into<String>) -> Self {
        Self { ok: false, error: Some(message.into()), payload: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireImage {
    pub id: String,
    pub uri: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireRegion {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
}

/// Body of `/v1/caption/global` and `/v1/caption/regions`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRequest {
    pub image: WireImage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalCaptionResponse {
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionCaption {
    pub caption: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionsResponse {
    pub regions: Vec<RegionCaption>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractRequest {
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractResponse {
    pub answers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionRequest {
    pub instruction: String,
    pub answer: String,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionResponse {
    pub question: String,
}

/// The QA model sees the question and nothing else.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaRequest {
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerResponse {
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VqaRequest {
    pub image: WireImage,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VqaResponse {
    pub answer: String,
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedRequest {
    pub image: WireImage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<WireRegion>,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedResponse {
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    #[serde(default)]
    pub stop: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmResponse {
    pub text: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde::de::DeserializeOwned;

    fn round_trip<T: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug>(x: &T) -> Result<(), TestCaseError> {
        let bytes = serde_json::to_vec(&Envelope::success(x)).unwrap();
        let back: Envelope<T> = serde_json::from_slice(&bytes).unwrap();
        prop_assert_eq!(back.payload.as_ref(), Some(x));
        prop_assert_eq!(serde_json::to_vec(&Envelope::success(&back.payload.unwrap())).unwrap(), bytes);
        Ok(())
    }

    fn feature() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..12)
    }

    fn bbox() -> impl Strategy<Value = Option<[f64; 4]>> {
        proptest::option::of((0.0..1e4f64, 0.0..1e4f64, 1e-3..1e4f64, 1e-3..1e4f64).prop_map(|(x, y, w, h)| [x, y, w, h]))
    }

    fn image() -> impl Strategy<Value = WireImage> {
        ("\\PC{0,12}", "\\PC{0,20}").prop_map(|(id, uri)| WireImage { id, uri })
    }

    proptest! {
        #[test]
        fn payloads_round_trip(
            img in image(),
            text in "\\PC{0,30}",
            words in proptest::collection::vec("\\PC{0,10}", 0..5),
            f in feature(),
            b in bbox(),
            max_tokens in 1u32..512,
            temperature in 0.0f64..2.0,
        ) {
            round_trip(&ImageRequest { image: img.clone() })?;
            round_trip(&GlobalCaptionResponse { caption: text.clone() })?;
            round_trip(&RegionsResponse { regions: vec![RegionCaption { caption: text.clone(), label: text.clone(), bbox: b }] })?;
            round_trip(&ExtractRequest { caption: text.clone() })?;
            round_trip(&ExtractResponse { answers: words.clone() })?;
            round_trip(&QuestionRequest { instruction: text.clone(), answer: text.clone(), caption: text.clone() })?;
            round_trip(&QuestionResponse { question: text.clone() })?;
            round_trip(&QaRequest { question: text.clone() })?;
            round_trip(&AnswerResponse { answer: text.clone() })?;
            round_trip(&VqaRequest { image: img.clone(), question: text.clone() })?;
            round_trip(&VqaResponse { answer: text.clone(), feature: f.clone() })?;
            round_trip(&EmbedRequest { image: img, region: Some(WireRegion { label: text.clone(), bbox: b }), question: text.clone() })?;
            round_trip(&EmbedResponse { feature: f })?;
            round_trip(&LlmRequest { prompt: text.clone(), max_tokens, temperature, stop: words })?;
            round_trip(&LlmResponse { text })?;
        }
    }

    #[test]
    fn qa_request_schema_has_no_image() {
        let v = serde_json::to_value(QaRequest { question: "what?".into() }).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, vec!["question"]);
        let smuggled = r#"{"question":"what?","image":{"id":"i","uri":"u"}}"#;
        assert!(serde_json::from_str::<QaRequest>(smuggled).is_err());
    }

    #[test]
    fn envelope_shapes() {
        assert_eq!(
            serde_json::to_string(&Envelope::success(QaRequest { question: "q".into() })).unwrap(),
            r#"{"ok":true,"payload":{"question":"q"}}"#
        );
        assert_eq!(
            serde_json::to_string(&Envelope::<QaRequest>::failure("boom")).unwrap(),
            r#"{"ok":false,"error":"boom"}"#
        );
    }
}
