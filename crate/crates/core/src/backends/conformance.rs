//! Wire-protocol conformance checks any backend server can be pointed at.
//!
//! Each endpoint is probed with a valid request (schema of the payload), the
//! same request again (determinism), malformed JSON, an unknown field and a
//! blank required field (error envelopes). Feature vectors from the VQA role
//! must agree in dimension across both of its endpoints.

use std::fmt;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use super::client::{RawResponse, Transport};
use super::protocol::{
    AnswerResponse, EmbedResponse, Envelope, ExtractResponse, GlobalCaptionResponse, LlmResponse, QuestionResponse,
    RegionsResponse, VqaResponse,
};
use super::Endpoint;
use crate::types::{Caption, FeatureVector, RegionDescriptor};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConformanceCheck {
    pub endpoint: Endpoint,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ConformanceReport {
    pub checks: Vec<ConformanceCheck>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConformanceCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn record(&mut self, endpoint: Endpoint, name: &'static str, result: Result<(), String>) {
        let (passed, detail) = match result {
            Ok(()) => (true, String::new()),
            Err(e) => (false, e),
        };
        self.checks.push(ConformanceCheck { endpoint, name, passed, detail });
    }
}

impl fmt::Display for ConformanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            write!(f, "{verdict} {} {}", c.endpoint.path(), c.name)?;
            if !c.detail.is_empty() {
                write!(f, ": {}", c.detail)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

const IMAGE: &str = "conformance-001";
const CAPTION: &str = "a black cat sleeping on a red sofa";
const QUESTION: &str = "What color is the sofa?";

fn image() -> Value {
    json!({ "id": IMAGE, "uri": format!("file:///{IMAGE}.jpg") })
}

/// A valid request and the path of one required text field inside it.
fn probe(endpoint: Endpoint) -> (Value, &'static [&'static str]) {
    match endpoint {
        Endpoint::CaptionGlobal | Endpoint::CaptionRegions => (json!({ "image": image() }), &["image", "id"]),
        Endpoint::Extract => (json!({ "caption": CAPTION }), &["caption"]),
        Endpoint::GenerateQuestion => (
            json!({
                "instruction": format!("Write a question whose answer is \"sofa\" given: {CAPTION}"),
                "answer": "sofa",
                "caption": CAPTION,
            }),
            &["answer"],
        ),
        Endpoint::Qa => (json!({ "question": QUESTION }), &["question"]),
        Endpoint::Vqa => (json!({ "image": image(), "question": QUESTION }), &["question"]),
        Endpoint::Embed => (
            json!({
                "image": image(),
                "region": { "label": "sofa", "bbox": [10.0, 20.0, 200.0, 120.0] },
                "question": QUESTION,
            }),
            &["question"],
        ),
        Endpoint::Llm => (
            json!({
                "prompt": format!("Context: {CAPTION}\nQuestion: {QUESTION}\nAnswer:"),
                "max_tokens": 8,
                "temperature": 0.0,
                "stop": ["\n"],
            }),
            &["prompt"],
        ),
    }
}

fn payload<T: DeserializeOwned>(raw: &RawResponse) -> Result<T, String> {
    if raw.status != 200 {
        return Err(format!("status {}: {}", raw.status, raw.body));
    }
    let env: Envelope<Value> = serde_json::from_str(&raw.body).map_err(|e| format!("malformed envelope: {e}"))?;
    if !env.ok {
        return Err(format!("ok=false: {}", env.error.unwrap_or_default()));
    }
    let p = env.payload.ok_or("ok envelope without payload")?;
    serde_json::from_value(p).map_err(|e| format!("payload does not match schema: {e}"))
}

fn non_blank(s: &str, what: &str) -> Result<(), String> {
    if s.trim().is_empty() {
        Err(format!("{what} is blank"))
    } else {
        Ok(())
    }
}

fn feature(values: Vec<f64>) -> Result<usize, String> {
    FeatureVector::new(values).map(|f| f.dim()).map_err(|e| format!("feature: {e}"))
}

/// Validates the payload; returns the feature dimension for VQA-role
/// endpoints.
fn check_payload(endpoint: Endpoint, raw: &RawResponse) -> Result<Option<usize>, String> {
    match endpoint {
        Endpoint::CaptionGlobal => {
            let r: GlobalCaptionResponse = payload(raw)?;
            non_blank(&r.caption, "caption")?;
        }
        Endpoint::CaptionRegions => {
            let r: RegionsResponse = payload(raw)?;
            for (i, region) in r.regions.into_iter().enumerate() {
                RegionDescriptor::new(region.label, region.bbox)
                    .and_then(|d| Caption::object(region.caption, d))
                    .map_err(|e| format!("region {i}: {e}"))?;
            }
        }
        Endpoint::Extract => {
            let _: ExtractResponse = payload(raw)?;
        }
        Endpoint::GenerateQuestion => non_blank(&payload::<QuestionResponse>(raw)?.question, "question")?,
        Endpoint::Qa => {
            let _: AnswerResponse = payload(raw)?;
        }
        Endpoint::Vqa => return feature(payload::<VqaResponse>(raw)?.feature).map(Some),
        Endpoint::Embed => return feature(payload::<EmbedResponse>(raw)?.feature).map(Some),
        Endpoint::Llm => {
            let _: LlmResponse = payload(raw)?;
        }
    }
    Ok(None)
}

fn expect_rejection(raw: Result<RawResponse, String>) -> Result<(), String> {
    let raw = raw?;
    if !(400..500).contains(&raw.status) {
        return Err(format!("expected a 4xx status, got {}", raw.status));
    }
    let env: Envelope<Value> =
        serde_json::from_str(&raw.body).map_err(|e| format!("status {} without an error envelope: {e}", raw.status))?;
    match (env.ok, env.error) {
        (false, Some(e)) if !e.trim().is_empty() => Ok(()),
        _ => Err(format!("status {} envelope must be ok=false with an error message", raw.status)),
    }
}

/// Runs every check for `endpoints`. `expected_dim`, when set, is the
/// feature length the VQA role must produce.
pub fn run_conformance(
    transport: &dyn Transport,
    endpoints: &[Endpoint],
    expected_dim: Option<usize>,
) -> ConformanceReport {
    let mut report = ConformanceReport::default();
    let mut dims: Vec<(Endpoint, usize)> = Vec::new();
    for &endpoint in endpoints {
        let (request, blank_path) = probe(endpoint);
        let body = request.to_string();

        let first = transport.post(endpoint, body.clone());
        let schema = first.clone().and_then(|raw| check_payload(endpoint, &raw));
        if let Ok(Some(d)) = schema {
            dims.push((endpoint, d));
        }
        report.record(endpoint, "schema", schema.map(|_| ()));

        let deterministic = match (&first, transport.post(endpoint, body)) {
            (Ok(a), Ok(b)) if a.status == 200 => {
                let parse = |r: &RawResponse| serde_json::from_str::<Value>(&r.body).ok();
                if parse(a) == parse(&b) && b.status == 200 {
                    Ok(())
                } else {
                    Err("repeated request gave a different response".into())
                }
            }
            (Ok(a), _) => Err(format!("first request failed with status {}", a.status)),
            (Err(e), _) => Err(e.clone()),
        };
        report.record(endpoint, "determinism", deterministic);

        report.record(endpoint, "rejects malformed json", expect_rejection(transport.post(endpoint, "{\"".into())));

        let mut extra = request.clone();
        extra["unexpected_field"] = json!(1);
        report.record(endpoint, "rejects unknown fields", expect_rejection(transport.post(endpoint, extra.to_string())));

        let mut blank = request;
        let mut slot = &mut blank;
        for key in blank_path {
            slot = &mut slot[*key];
        }
        *slot = json!("   ");
        report.record(endpoint, "rejects blank fields", expect_rejection(transport.post(endpoint, blank.to_string())));
    }

    let mut seen = dims.iter().map(|(_, d)| *d).chain(expected_dim);
    if let Some(first) = seen.next() {
        let consistent = if seen.all(|d| d == first) {
            Ok(())
        } else {
            let got: Vec<String> = dims.iter().map(|(e, d)| format!("{e}={d}")).collect();
            Err(format!("feature lengths disagree: {} (expected {expected_dim:?})", got.join(", ")))
        };
        let endpoint = dims.first().map_or(Endpoint::Vqa, |(e, _)| *e);
        report.record(endpoint, "feature dimension", consistent);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{MockConfig, MockTransport, MockWorld};
    use std::sync::Arc;

    #[test]
    fn mock_conforms() {
        let t = MockTransport(Arc::new(MockWorld::new(MockConfig::new(3, 12))));
        let report = run_conformance(&t, &Endpoint::ALL, Some(12));
        assert!(report.passed(), "{report}");
        assert_eq!(report.checks.len(), 8 * 5 + 1);
    }

    #[test]
    fn wrong_dimension_and_failures_are_reported() {
        let t = MockTransport(Arc::new(MockWorld::new(MockConfig::new(3, 12))));
        let report = run_conformance(&t, &[Endpoint::Vqa, Endpoint::Embed], Some(8));
        assert_eq!(report.failures().map(|c| c.name).collect::<Vec<_>>(), ["feature dimension"]);

        let t = MockTransport(Arc::new(MockWorld::new(MockConfig::default().failing(Endpoint::Qa))));
        let report = run_conformance(&t, &[Endpoint::Qa], None);
        let failed: Vec<_> = report.failures().map(|c| c.name).collect();
        assert!(failed.contains(&"schema") && failed.contains(&"rejects blank fields"), "{report}");
    }

    struct Sloppy;

    impl Transport for Sloppy {
        // accepts anything
        fn post(&self, _: Endpoint, body: String) -> Result<RawResponse, String> {
            let answer = format!("{}", body.len());
            Ok(RawResponse { status: 200, body: json!({"ok": true, "payload": {"answer": answer}}).to_string() })
        }
    }

    #[test]
    fn lax_servers_fail_envelope_checks() {
        let report = run_conformance(&Sloppy, &[Endpoint::Qa], None);
        let failed: Vec<_> = report.failures().map(|c| c.name).collect();
        assert_eq!(failed, ["rejects malformed json", "rejects unknown fields", "rejects blank fields"]);
        assert!(!report.passed());
        assert!(report.to_string().starts_with("PASS /v1/qa schema\n"));
    }
}
