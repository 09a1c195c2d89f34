//! Protocol client shared by every transport.

use std::collections::HashMap;
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::extract::extract_candidates;
use super::protocol::{
    AnswerResponse, EmbedRequest, EmbedResponse, Envelope, ExtractRequest, ExtractResponse, GlobalCaptionResponse,
    ImageRequest, LlmRequest, LlmResponse, QaRequest, QuestionRequest, QuestionResponse, RegionsResponse, VqaRequest,
    VqaResponse, WireImage, WireRegion,
};
use super::{BackendConfig, BackendError, DimensionGuard, Endpoint, LlmParams, ModelBackends, Role, VqaPrediction};
use crate::types::{Caption, FeatureVector, ImageRef, RegionDescriptor};

/// Status code and body of one exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawResponse {
    pub status: u16,
    pub body: String,
}

/// Moves one request body to an endpoint and returns whatever came back.
///
/// An `Err` means nothing usable arrived (connection refused, timeout).
pub trait Transport: Send + Sync {
    fn post(&self, endpoint: Endpoint, body: String) -> Result<RawResponse, String>;
}

/// HTTP transport with one base URL and timeout per role.
pub struct HttpTransport {
    routes: HashMap<Role, (String, reqwest::blocking::Client)>,
    api_key: Option<String>,
}

impl HttpTransport {
    /// `api_key`, when set, is sent as a bearer token to the LLM role only.
    pub fn new(configs: &[BackendConfig], api_key: Option<String>) -> Result<Self, String> {
        let mut routes = HashMap::new();
        for cfg in configs {
            cfg.validate()?;
            let client = reqwest::blocking::Client::builder()
                .timeout(Duration::from_millis(cfg.timeout_ms))
                .build()
                .map_err(|e| format!("{}: cannot build http client: {e}", cfg.role))?;
            let base = cfg.base_url.trim_end_matches('/').to_owned();
            if routes.insert(cfg.role, (base, client)).is_some() {
                return Err(format!("duplicate backend config for role {}", cfg.role));
            }
        }
        Ok(Self { routes, api_key })
    }
}

impl Transport for HttpTransport {
    fn post(&self, endpoint: Endpoint, body: String) -> Result<RawResponse, String> {
        let (base, client) = self
            .routes
            .get(&endpoint.role())
            .ok_or_else(|| format!("no backend configured for role {}", endpoint.role()))?;
        let mut req = client
            .post(format!("{base}{}", endpoint.path()))
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body);
        if endpoint == Endpoint::Llm {
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| e.to_string())?;
        Ok(RawResponse { status, body })
    }
}

/// Retry settings for one role.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Extra attempts after the first.
    pub retries: u32,
}

/// [`ModelBackends`] over any [`Transport`].
pub struct BackendClient<T> {
    transport: T,
    retries: HashMap<Role, RetryPolicy>,
    initial_backoff: Duration,
    builtin_extractor: bool,
    dim: DimensionGuard,
}

impl<T: Transport> BackendClient<T> {
    /// Every role gets `retries` extra attempts until overridden.
    pub fn new(transport: T, retries: u32) -> Self {
        Self {
            transport,
            retries: Role::ALL.iter().map(|r| (*r, RetryPolicy { retries })).collect(),
            initial_backoff: Duration::from_millis(200),
            builtin_extractor: false,
            dim: DimensionGuard::new(),
        }
    }

    pub fn from_configs(transport: T, configs: &[BackendConfig]) -> Self {
        let mut client = Self::new(transport, 0);
        for cfg in configs {
            client.retries.insert(cfg.role, RetryPolicy { retries: cfg.retries });
        }
        client
    }

    pub fn with_retries(mut self, role: Role, retries: u32) -> Self {
        self.retries.insert(role, RetryPolicy { retries });
        self
    }

    /// Backoff before retry `i` is `initial * 2^i`.
    pub fn with_initial_backoff(mut self, backoff: Duration) -> Self {
        self.initial_backoff = backoff;
        self
    }

    /// Extract answers in-process instead of calling the extractor role.
    pub fn with_builtin_extractor(mut self, enabled: bool) -> Self {
        self.builtin_extractor = enabled;
        self
    }

    pub fn with_feature_dim(mut self, dim: usize) -> Self {
        self.dim = DimensionGuard::fixed(dim);
        self
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.dim.get()
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    fn call<Req: Serialize, Resp: DeserializeOwned>(&self, endpoint: Endpoint, req: &Req) -> Result<Resp, BackendError> {
        let body = serde_json::to_string(req).expect("request bodies always serialize");
        let policy = self.retries.get(&endpoint.role()).copied().unwrap_or(RetryPolicy { retries: 0 });
        let mut attempt = 0;
        loop {
            let result = self
                .transport
                .post(endpoint, body.clone())
                .map_err(|message| BackendError::Transport { endpoint, message })
                .and_then(|raw| decode(endpoint, raw));
            match result {
                Err(e) if e.is_retryable() && attempt < policy.retries => {
                    let backoff = self.initial_backoff * 2u32.saturating_pow(attempt);
                    log::debug!("{e}; retrying in {backoff:?}");
                    thread::sleep(backoff);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn checked_feature(&self, endpoint: Endpoint, values: Vec<f64>) -> Result<FeatureVector, BackendError> {
        let feature =
            FeatureVector::new(values).map_err(|e| BackendError::Protocol { endpoint, message: e.to_string() })?;
        self.dim.check(feature.dim())?;
        Ok(feature)
    }
}

fn decode<Resp: DeserializeOwned>(endpoint: Endpoint, raw: RawResponse) -> Result<Resp, BackendError> {
    let protocol = |message: String| BackendError::Protocol { endpoint, message };
    match raw.status {
        429 => return Err(BackendError::RateLimited { endpoint }),
        502..=504 => {
            return Err(BackendError::Transport { endpoint, message: format!("upstream status {}", raw.status) })
        }
        _ => {}
    }
    let envelope: Envelope<serde_json::Value> = serde_json::from_str(&raw.body)
        .map_err(|e| protocol(format!("status {}: malformed envelope: {e}", raw.status)))?;
    if raw.status >= 400 && raw.status < 500 {
        let why = envelope.error.unwrap_or_else(|| "request rejected".into());
        return Err(protocol(format!("status {}: {why}", raw.status)));
    }
    if !envelope.ok {
        let message = envelope.error.unwrap_or_else(|| "unspecified error".into());
        return Err(BackendError::Backend { endpoint, message });
    }
    if raw.status >= 300 {
        return Err(protocol(format!("status {} with ok envelope", raw.status)));
    }
    let payload = envelope.payload.ok_or_else(|| protocol("ok envelope without payload".into()))?;
    serde_json::from_value(payload).map_err(|e| protocol(format!("malformed payload: {e}")))
}

fn wire_image(image: &ImageRef) -> WireImage {
    WireImage { id: image.id.clone(), uri: image.uri.clone() }
}

fn require(value: &str, what: &str) -> Result<(), BackendError> {
    if value.trim().is_empty() {
        Err(BackendError::Precondition(format!("{what} must not be empty")))
    } else {
        Ok(())
    }
}

impl<T: Transport> ModelBackends for BackendClient<T> {
    fn caption_global(&self, image: &ImageRef) -> Result<Caption, BackendError> {
        let endpoint = Endpoint::CaptionGlobal;
        let resp: GlobalCaptionResponse = self.call(endpoint, &ImageRequest { image: wire_image(image) })?;
        Caption::global(resp.caption).map_err(|e| BackendError::Protocol { endpoint, message: e.to_string() })
    }

    fn caption_regions(&self, image: &ImageRef) -> Result<Vec<Caption>, BackendError> {
        let endpoint = Endpoint::CaptionRegions;
        let resp: RegionsResponse = self.call(endpoint, &ImageRequest { image: wire_image(image) })?;
        resp.regions
            .into_iter()
            .map(|r| {
                RegionDescriptor::new(r.label, r.bbox)
                    .and_then(|region| Caption::object(r.caption, region))
                    .map_err(|e| BackendError::Protocol { endpoint, message: e.to_string() })
            })
            .collect()
    }

    fn extract_answers(&self, caption: &Caption) -> Result<Vec<String>, BackendError> {
        let raw = if self.builtin_extractor {
            extract_candidates(caption.text())
        } else {
            let resp: ExtractResponse =
                self.call(Endpoint::Extract, &ExtractRequest { caption: caption.text().to_owned() })?;
            resp.answers
        };
        let mut out: Vec<String> = Vec::with_capacity(raw.len());
        for a in raw {
            let a = a.trim().to_owned();
            if !a.is_empty() && !out.contains(&a) {
                out.push(a);
            }
        }
        Ok(out)
    }

    fn generate_question(&self, instruction: &str, answer: &str, caption: &Caption) -> Result<String, BackendError> {
        require(answer, "answer")?;
        let endpoint = Endpoint::GenerateQuestion;
        let req = QuestionRequest {
            instruction: instruction.to_owned(),
            answer: answer.to_owned(),
            caption: caption.text().to_owned(),
        };
        let resp: QuestionResponse = self.call(endpoint, &req)?;
        let question = resp.question.trim();
        if question.is_empty() {
            return Err(BackendError::EmptyGeneration { endpoint });
        }
        Ok(question.to_owned())
    }

    fn qa_predict(&self, question: &str) -> Result<String, BackendError> {
        require(question, "question")?;
        let resp: AnswerResponse = self.call(Endpoint::Qa, &QaRequest { question: question.to_owned() })?;
        Ok(resp.answer)
    }

    fn vqa_predict(&self, image: &ImageRef, question: &str) -> Result<VqaPrediction, BackendError> {
        require(question, "question")?;
        let endpoint = Endpoint::Vqa;
        let resp: VqaResponse =
            self.call(endpoint, &VqaRequest { image: wire_image(image), question: question.to_owned() })?;
        let feature = self.checked_feature(endpoint, resp.feature)?;
        Ok(VqaPrediction { answer: resp.answer, feature })
    }

    fn embed_example(
        &self,
        image: &ImageRef,
        region: Option<&RegionDescriptor>,
        question: &str,
    ) -> Result<FeatureVector, BackendError> {
        require(question, "question")?;
        let endpoint = Endpoint::Embed;
        let req = EmbedRequest {
            image: wire_image(image),
            region: region.map(|r| WireRegion { label: r.label.clone(), bbox: r.bbox }),
            question: question.to_owned(),
        };
        let resp: EmbedResponse = self.call(endpoint, &req)?;
        self.checked_feature(endpoint, resp.feature)
    }

    fn llm_complete(&self, prompt: &str, params: &LlmParams) -> Result<String, BackendError> {
        require(prompt, "prompt")?;
        let req = LlmRequest {
            prompt: prompt.to_owned(),
            max_tokens: params.max_tokens,
            temperature: params.temperature,
            stop: params.stop_sequences.clone(),
        };
        let resp: LlmResponse = self.call(Endpoint::Llm, &req)?;
        Ok(resp.text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    /// Replays canned responses and counts calls.
    struct Scripted {
        replies: Mutex<Vec<Result<RawResponse, String>>>,
        calls: AtomicUsize,
    }

    impl Scripted {
        fn new(mut replies: Vec<Result<RawResponse, String>>) -> Self {
            replies.reverse();
            Self { replies: Mutex::new(replies), calls: AtomicUsize::new(0) }
        }
    }

    impl Transport for Scripted {
        fn post(&self, _: Endpoint, _: String) -> Result<RawResponse, String> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.replies.lock().unwrap().pop().expect("script exhausted")
        }
    }

    fn ok(status: u16, body: &str) -> Result<RawResponse, String> {
        Ok(RawResponse { status, body: body.to_owned() })
    }

    fn client(replies: Vec<Result<RawResponse, String>>, retries: u32) -> BackendClient<Scripted> {
        BackendClient::new(Scripted::new(replies), retries).with_initial_backoff(Duration::from_millis(1))
    }

    fn image() -> ImageRef {
        ImageRef::new("img", "x.jpg").unwrap()
    }

    #[test]
    fn transport_failures_retry_then_surface() {
        let c = client(vec![Err("refused".into()), Err("refused".into()), Err("refused".into())], 2);
        let err = c.caption_global(&image()).unwrap_err();
        assert!(matches!(err, BackendError::Transport { .. }));
        assert_eq!(c.transport().calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn rate_limit_is_retried_until_success() {
        let c = client(vec![ok(429, ""), ok(429, ""), ok(200, r#"{"ok":true,"payload":{"text":"horse"}}"#)], 2);
        assert_eq!(c.llm_complete("Question: x\nAnswer:", &LlmParams::default()).unwrap(), "horse");
        assert_eq!(c.transport().calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn rate_limit_exhausts_retries() {
        let c = client(vec![ok(429, ""), ok(429, "")], 1);
        assert_eq!(
            c.llm_complete("p", &LlmParams::default()),
            Err(BackendError::RateLimited { endpoint: Endpoint::Llm })
        );
    }

    #[test]
    fn backend_errors_are_not_retried() {
        let c = client(vec![ok(500, r#"{"ok":false,"error":"model crashed"}"#)], 3);
        assert_eq!(
            c.qa_predict("q?"),
            Err(BackendError::Backend { endpoint: Endpoint::Qa, message: "model crashed".into() })
        );
        assert_eq!(c.transport().calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn client_errors_are_protocol_errors() {
        let c = client(vec![ok(422, r#"{"ok":false,"error":"image uri must not be empty"}"#)], 0);
        assert!(matches!(c.caption_global(&image()), Err(BackendError::Protocol { .. })));
        let c = client(vec![ok(200, "not json")], 0);
        assert!(matches!(c.caption_global(&image()), Err(BackendError::Protocol { .. })));
        let c = client(vec![ok(200, r#"{"ok":true}"#)], 0);
        assert!(matches!(c.caption_global(&image()), Err(BackendError::Protocol { .. })));
    }

    #[test]
    fn malformed_region_and_feature_payloads() {
        let c = client(
            vec![ok(200, r#"{"ok":true,"payload":{"regions":[{"caption":"a dog","label":"dog","bbox":[0,0,0,4]}]}}"#)],
            0,
        );
        assert!(matches!(c.caption_regions(&image()), Err(BackendError::Protocol { .. })));

        let c = client(vec![ok(200, r#"{"ok":true,"payload":{"answer":"a","feature":[1.0, NaN]}}"#)], 0);
        assert!(matches!(c.vqa_predict(&image(), "q"), Err(BackendError::Protocol { .. })));
        let c = client(vec![ok(200, r#"{"ok":true,"payload":{"answer":"a","feature":[]}}"#)], 0);
        assert!(matches!(c.vqa_predict(&image(), "q"), Err(BackendError::Protocol { .. })));
    }

    #[test]
    fn feature_dimension_is_pinned() {
        let c = client(
            vec![
                ok(200, r#"{"ok":true,"payload":{"answer":"a","feature":[1.0,2.0]}}"#),
                ok(200, r#"{"ok":true,"payload":{"feature":[1.0,2.0,3.0]}}"#),
                ok(200, r#"{"ok":true,"payload":{"feature":[0.0,0.0]}}"#),
            ],
            0,
        );
        c.vqa_predict(&image(), "q").unwrap();
        assert_eq!(
            c.embed_example(&image(), None, "q"),
            Err(BackendError::DimensionMismatch { expected: 2, got: 3 })
        );
        // a zero vector is the retriever's problem, not the client's
        assert_eq!(c.embed_example(&image(), None, "q").unwrap().norm(), 0.0);
    }

    #[test]
    fn preconditions_are_checked_locally() {
        let c = client(vec![], 0);
        let cap = Caption::global("a dog").unwrap();
        assert!(matches!(c.generate_question("i", "", &cap), Err(BackendError::Precondition(_))));
        assert!(matches!(c.qa_predict(" "), Err(BackendError::Precondition(_))));
        assert!(matches!(c.llm_complete("", &LlmParams::default()), Err(BackendError::Precondition(_))));
        assert_eq!(c.transport().calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn blank_generation_is_an_error() {
        let c = client(vec![ok(200, r#"{"ok":true,"payload":{"question":"  "}}"#)], 0);
        let cap = Caption::global("a dog").unwrap();
        assert_eq!(
            c.generate_question("i", "dog", &cap),
            Err(BackendError::EmptyGeneration { endpoint: Endpoint::GenerateQuestion })
        );
    }

    #[test]
    fn builtin_extractor_skips_the_network() {
        let c = client(vec![], 0).with_builtin_extractor(true);
        let cap = Caption::global("two dogs on a red couch").unwrap();
        assert_eq!(c.extract_answers(&cap).unwrap(), vec!["two dogs", "red couch", "2"]);
    }

    #[test]
    fn extractor_output_is_deduplicated() {
        let c = client(vec![ok(200, r#"{"ok":true,"payload":{"answers":["dog"," dog","","cat","dog"]}}"#)], 0);
        let cap = Caption::global("x").unwrap();
        assert_eq!(c.extract_answers(&cap).unwrap(), vec!["dog", "cat"]);
    }
}
