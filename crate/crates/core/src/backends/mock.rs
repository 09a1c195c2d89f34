//! Deterministic mock for all model roles.
//!
//! Every response is a pure function of `(seed, feature_dim, scenario,
//! request body)`. The rules, also listed in `docs/protocol.md`:
//!
//! * scenes: an image id resolves to the scenario file, then the built-in
//!   table ([`builtin_scenes`]), then a scene synthesized from
//!   `sha256(seed, id)`;
//! * global / regional captions come straight from the scene;
//! * extraction uses [`extract_candidates`];
//! * question generation uses [`mock_question`];
//! * the QA model answers from [`qa_prior`], a fixed keyword table;
//! * the VQA model answers from the scene's answer table, falling back to
//!   the QA prior (so unknown questions look biased);
//! * features are sums of per-token pseudo-random vectors in `[-1, 1)^D`,
//!   each seeded with `sha256(seed, token)`;
//! * the LLM echoes the most frequent non-empty `Answer:` line of the
//!   prompt (ties go to the earliest), or [`DEFAULT_LLM_ANSWER`].

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::client::{RawResponse, Transport};
use super::extract::{as_number, extract_candidates, is_stop_word};
use super::protocol::{
    AnswerResponse, EmbedRequest, EmbedResponse, Envelope, ExtractRequest, ExtractResponse, GlobalCaptionResponse,
    ImageRequest, LlmRequest, LlmResponse, QaRequest, QuestionRequest, QuestionResponse, RegionCaption,
    RegionsResponse, VqaRequest, VqaResponse, WireImage,
};
use super::Endpoint;
use crate::eval::VqaSample;
use crate::text::{normalize_answer, word_tokens};
use crate::types::{Caption, Example, ExampleSource, ImageRef, QAPair, RegionDescriptor};

pub const DEFAULT_QA_ANSWER: &str = "unknown";
pub const DEFAULT_LLM_ANSWER: &str = "unknown";
pub const DEFAULT_FEATURE_DIM: usize = 32;

const OBJECTS: &[&str] = &[
    "dog", "cat", "horse", "car", "boat", "bird", "apple", "chair", "kite", "umbrella", "clock", "bike", "cup",
    "banana", "truck", "bear",
];
const COLORS: &[&str] = &["red", "blue", "green", "yellow", "white", "black", "brown", "orange"];
const SETTINGS: &[&str] = &[
    "on the street",
    "in a park",
    "on a table",
    "near the water",
    "in a kitchen",
    "on the grass",
    "in the snow",
    "under the sky",
];
const NUMBER_WORDS: &[&str] = &["zero", "one", "two", "three", "four"];

/// Colour priors of the question-only model.
const COLOR_PRIORS: &[(&str, &str)] = &[
    ("banana", "yellow"),
    ("sky", "blue"),
    ("grass", "green"),
    ("snow", "white"),
    ("apple", "red"),
    ("bear", "brown"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneRegion {
    pub label: String,
    pub caption: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub global_caption: String,
    #[serde(default)]
    pub regions: Vec<SceneRegion>,
    /// Ordinary answers keyed by question; keys are normalized on load.
    #[serde(default)]
    pub answers: BTreeMap<String, String>,
}

/// Scenes that override the built-in table, loadable from JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScenario {
    #[serde(default)]
    pub images: BTreeMap<String, Scene>,
}

fn region(label: &str, caption: &str, bbox: [f64; 4]) -> SceneRegion {
    SceneRegion { label: label.into(), caption: caption.into(), bbox: Some(bbox) }
}

fn scene(global: &str, regions: Vec<SceneRegion>, answers: &[(&str, &str)]) -> Scene {
    Scene {
        global_caption: global.into(),
        regions,
        answers: answers.iter().map(|(q, a)| (q.to_string(), a.to_string())).collect(),
    }
}

/// The published seed table.
pub fn builtin_scenes() -> BTreeMap<String, Scene> {
    let mut m = BTreeMap::new();
    m.insert(
        "img_001".into(),
        scene(
            "a man riding a horse",
            vec![
                region("man", "a man wearing a red hat", [40.0, 20.0, 120.0, 300.0]),
                region("horse", "a brown horse on the grass", [100.0, 120.0, 380.0, 260.0]),
                region("hat", "a red hat", [70.0, 20.0, 50.0, 40.0]),
            ],
            &[("What is the man riding?", "horse"), ("What color is the hat?", "red")],
        ),
    );
    m.insert(
        "img_002".into(),
        scene(
            "a cat sleeping next to a chair",
            vec![
                region("cat", "a black cat on the sofa", [10.0, 80.0, 200.0, 120.0]),
                region("chair", "a wooden chair by the window", [260.0, 40.0, 140.0, 220.0]),
            ],
            &[("What color is the cat?", "black")],
        ),
    );
    m.insert(
        "img_dogs".into(),
        scene(
            "two dogs on a red couch",
            vec![
                region("dogs", "two dogs on a red couch", [30.0, 60.0, 300.0, 180.0]),
                region("couch", "a red couch", [0.0, 100.0, 420.0, 200.0]),
            ],
            &[("How many dogs are there?", "2"), ("What are the dogs on?", "couch")],
        ),
    );
    m.insert(
        "img_banana".into(),
        scene(
            "a bunch of bananas on a table",
            vec![region("banana", "yellow bananas on a plate", [120.0, 90.0, 200.0, 110.0])],
            &[("What color are the bananas?", "yellow")],
        ),
    );
    m.insert(
        "img_green_banana".into(),
        scene(
            "unripe bananas hanging from a tree",
            vec![region("banana", "green bananas on a tree", [80.0, 40.0, 160.0, 220.0])],
            &[("What color are the bananas?", "green")],
        ),
    );
    m.insert("img_empty".into(), scene("an empty white wall", vec![], &[]));
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockConfig {
    pub seed: u64,
    pub feature_dim: usize,
    pub scenario: MockScenario,
    /// Endpoints that always answer `500 {"ok":false}`.
    pub fail_endpoints: BTreeSet<Endpoint>,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self { seed: 0, feature_dim: DEFAULT_FEATURE_DIM, scenario: MockScenario::default(), fail_endpoints: BTreeSet::new() }
    }
}

impl MockConfig {
    pub fn new(seed: u64, feature_dim: usize) -> Self {
        Self { seed, feature_dim, ..Self::default() }
    }

    pub fn with_scenario(mut self, scenario: MockScenario) -> Self {
        self.scenario = scenario;
        self
    }

    pub fn failing(mut self, endpoint: Endpoint) -> Self {
        self.fail_endpoints.insert(endpoint);
        self
    }
}

/// The mock model suite. Immutable apart from the call log.
pub struct MockWorld {
    seed: u64,
    feature_dim: usize,
    scenes: BTreeMap<String, Scene>,
    fail_endpoints: BTreeSet<Endpoint>,
    calls: Mutex<Vec<Endpoint>>,
}

impl MockWorld {
    pub fn new(config: MockConfig) -> Self {
        assert!(config.feature_dim > 0, "mock feature_dim must be positive");
        let mut scenes = builtin_scenes();
        scenes.extend(config.scenario.images);
        for scene in scenes.values_mut() {
            scene.answers = std::mem::take(&mut scene.answers)
                .into_iter()
                .map(|(q, a)| (normalize_answer(&q), a))
                .collect();
        }
        Self {
            seed: config.seed,
            feature_dim: config.feature_dim,
            scenes,
            fail_endpoints: config.fail_endpoints,
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Every endpoint hit so far, in arrival order.
    pub fn calls(&self) -> Vec<Endpoint> {
        self.calls.lock().unwrap().clone()
    }

    pub fn call_count(&self, endpoint: Endpoint) -> usize {
        self.calls.lock().unwrap().iter().filter(|e| **e == endpoint).count()
    }

    pub fn clear_calls(&self) {
        self.calls.lock().unwrap().clear();
    }

    fn rng_for(&self, domain: &str, key: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(domain.as_bytes());
        h.update([0u8]);
        h.update(key.as_bytes());
        let digest: [u8; 32] = h.finalize().into();
        ChaCha8Rng::from_seed(digest)
    }

    pub fn scene(&self, image_id: &str) -> Scene {
        match self.scenes.get(image_id) {
            Some(s) => s.clone(),
            None => self.synthesize(image_id),
        }
    }

    fn synthesize(&self, image_id: &str) -> Scene {
        let mut rng = self.rng_for("scene", image_id);
        let n_regions = match rng.random_range(0..10) {
            0 => 0,
            r => 1 + r % 3,
        };
        let setting = SETTINGS[rng.random_range(0..SETTINGS.len())];
        let mut labels: Vec<&str> = OBJECTS.to_vec();
        labels.shuffle(&mut rng);

        let mut regions = Vec::new();
        let mut answers = BTreeMap::new();
        let mut mentions = Vec::new();
        for label in labels.into_iter().take(n_regions) {
            let color = COLORS[rng.random_range(0..COLORS.len())];
            let count = rng.random_range(1..=3usize);
            let bbox = [
                rng.random_range(0..600) as f64,
                rng.random_range(0..400) as f64,
                rng.random_range(20..200) as f64,
                rng.random_range(20..200) as f64,
            ];
            let (caption, color_q, mention) = if count == 1 {
                (format!("a {color} {label} {setting}"), format!("what color is the {label}"), format!("a {label}"))
            } else {
                let word = NUMBER_WORDS[count];
                (
                    format!("{word} {color} {label}s {setting}"),
                    format!("what color are the {label}s"),
                    format!("{word} {label}s"),
                )
            };
            answers.insert(normalize_answer(&color_q), color.to_owned());
            answers.insert(normalize_answer(&format!("how many {label}s are there")), count.to_string());
            regions.push(SceneRegion { label: label.to_owned(), caption, bbox: Some(bbox) });
            mentions.push(mention);
        }
        let global_caption = if mentions.is_empty() {
            format!("a quiet scene {setting}")
        } else {
            format!("a photo of {} {setting}", mentions.join(" and "))
        };
        Scene { global_caption, regions, answers }
    }

    /// Sum of per-token vectors; no content tokens gives the zero vector.
    pub fn feature_for<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Vec<f64> {
        let mut acc = vec![0.0; self.feature_dim];
        for token in tokens {
            let mut rng = self.rng_for("token", token);
            for v in acc.iter_mut() {
                *v += rng.random_range(-1.0..1.0);
            }
        }
        acc
    }

    fn vqa_feature(&self, image_id: &str, question: &str) -> Vec<f64> {
        let scene = self.scene(image_id);
        let image_token = format!("img:{image_id}");
        let mut tokens = vec![image_token];
        tokens.extend(content_tokens(&scene.global_caption));
        tokens.extend(content_tokens(question));
        self.feature_for(tokens.iter().map(String::as_str))
    }

    fn embed_feature(&self, image_id: &str, region_label: Option<&str>, question: &str) -> Vec<f64> {
        let scene = self.scene(image_id);
        let mut tokens = vec![format!("img:{image_id}")];
        match region_label {
            Some(label) => match scene.regions.iter().find(|r| r.label == label) {
                Some(r) => tokens.extend(content_tokens(&r.caption)),
                None => tokens.extend(content_tokens(label)),
            },
            None => tokens.extend(content_tokens(&scene.global_caption)),
        }
        tokens.extend(content_tokens(question));
        self.feature_for(tokens.iter().map(String::as_str))
    }

    pub fn vqa_answer(&self, image_id: &str, question: &str) -> String {
        let key = normalize_answer(question);
        match self.scene(image_id).answers.get(&key) {
            Some(a) => a.clone(),
            None => qa_prior(question),
        }
    }

    /// Serves one request body. Shared by the HTTP server and the in-process
    /// transport.
    pub fn handle(&self, endpoint: Endpoint, body: &str) -> RawResponse {
        self.calls.lock().unwrap().push(endpoint);
        if self.fail_endpoints.contains(&endpoint) {
            return reply(500, Envelope::<()>::failure("injected failure"));
        }
        let result = match endpoint {
            Endpoint::CaptionGlobal => self.on_caption_global(body),
            Endpoint::CaptionRegions => self.on_caption_regions(body),
            Endpoint::Extract => self.on_extract(body),
            Endpoint::GenerateQuestion => self.on_generate_question(body),
            Endpoint::Qa => self.on_qa(body),
            Endpoint::Vqa => self.on_vqa(body),
            Endpoint::Embed => self.on_embed(body),
            Endpoint::Llm => self.on_llm(body),
        };
        match result {
            Ok(resp) | Err(resp) => resp,
        }
    }

    fn on_caption_global(&self, body: &str) -> Result<RawResponse, RawResponse> {
        let req: ImageRequest = parse(body)?;
        check_image(&req.image)?;
        let caption = self.scene(&req.image.id).global_caption;
        Ok(reply(200, Envelope::success(GlobalCaptionResponse { caption })))
    }

    fn on_caption_regions(&self, body: &str) -> Result<RawResponse, RawResponse> {
        let req: ImageRequest = parse(body)?;
        check_image(&req.image)?;
        let regions = self
            .scene(&req.image.id)
            .regions
            .into_iter()
            .map(|r| RegionCaption { caption: r.caption, label: r.label, bbox: r.bbox })
            .collect();
        Ok(reply(200, Envelope::success(RegionsResponse { regions })))
    }

    fn on_extract(&self, body: &str) -> Result<RawResponse, RawResponse> {
        let req: ExtractRequest = parse(body)?;
        check_text(&req.caption, "caption")?;
        Ok(reply(200, Envelope::success(ExtractResponse { answers: extract_candidates(&req.caption) })))
    }

    fn on_generate_question(&self, body: &str) -> Result<RawResponse, RawResponse> {
        let req: QuestionRequest = parse(body)?;
        check_text(&req.answer, "answer")?;
        check_text(&req.caption, "caption")?;
        let question = mock_question(&req.answer, &req.caption);
        Ok(reply(200, Envelope::success(QuestionResponse { question })))
    }

    fn on_qa(&self, body: &str) -> Result<RawResponse, RawResponse> {
        let req: QaRequest = parse(body)?;
        check_text(&req.question, "question")?;
        Ok(reply(200, Envelope::success(AnswerResponse { answer: qa_prior(&req.question) })))
    }

    fn on_vqa(&self, body: &str) -> Result<RawResponse, RawResponse> {
        let req: VqaRequest = parse(body)?;
        check_image(&req.image)?;
        check_text(&req.question, "question")?;
        let answer = self.vqa_answer(&req.image.id, &req.question);
        let feature = self.vqa_feature(&req.image.id, &req.question);
        Ok(reply(200, Envelope::success(VqaResponse { answer, feature })))
    }

    fn on_embed(&self, body: &str) -> Result<RawResponse, RawResponse> {
        let req: EmbedRequest = parse(body)?;
        check_image(&req.image)?;
        check_text(&req.question, "question")?;
        let label = req.region.as_ref().map(|r| r.label.as_str());
        let feature = self.embed_feature(&req.image.id, label, &req.question);
        Ok(reply(200, Envelope::success(EmbedResponse { feature })))
    }

    fn on_llm(&self, body: &str) -> Result<RawResponse, RawResponse> {
        let req: LlmRequest = parse(body)?;
        check_text(&req.prompt, "prompt")?;
        if req.max_tokens == 0 {
            return Err(reject("max_tokens must be positive"));
        }
        if !(req.temperature.is_finite() && req.temperature >= 0.0) {
            return Err(reject("temperature must be non-negative"));
        }
        Ok(reply(200, Envelope::success(LlmResponse { text: llm_answer(&req.prompt) })))
    }

    /// Deterministic evaluation samples over synthesized scenes
    /// `syn-000`, `syn-001`, ...
    pub fn synthetic_dataset(&self, n: usize) -> Vec<VqaSample> {
        (0..n)
            .map(|i| {
                let id = format!("syn-{i:03}");
                let scene = self.scene(&id);
                let mut rng = self.rng_for("sample", &id);
                let (question, truth, distractors): (String, String, &[&str]) = if scene.regions.is_empty() {
                    ("What is in the picture?".into(), "nothing".into(), OBJECTS)
                } else {
                    let r = &scene.regions[rng.random_range(0..scene.regions.len())];
                    let plural = !r.caption.starts_with("a ");
                    if rng.random_bool(0.5) {
                        let q = if plural {
                            format!("What color are the {}s?", r.label)
                        } else {
                            format!("What color is the {}?", r.label)
                        };
                        let truth = scene.answers[&normalize_answer(&q)].clone();
                        (q, truth, COLORS)
                    } else {
                        let q = format!("How many {}s are there?", r.label);
                        let truth = scene.answers[&normalize_answer(&q)].clone();
                        (q, truth, &["1", "2", "3", "4"])
                    }
                };
                let matching = rng.random_range(0..=10usize);
                let others: Vec<&str> = distractors.iter().copied().filter(|d| *d != truth).collect();
                let human_answers = (0..10)
                    .map(|k| {
                        if k < matching {
                            truth.clone()
                        } else {
                            others[rng.random_range(0..others.len())].to_owned()
                        }
                    })
                    .collect();
                VqaSample {
                    question_id: 1000 + i as u64,
                    image: ImageRef::new(id.clone(), format!("mock://{id}.jpg")).expect("non-empty id"),
                    question,
                    human_answers: Some(human_answers),
                }
            })
            .collect()
    }

    /// `n` distinct memory seeds drawn from synthesized scenes
    /// `seed-0000`, ... Features are left for the embedder.
    pub fn synthetic_seed_examples(&self, n: usize) -> Vec<Example> {
        let mut out = Vec::with_capacity(n);
        let mut seen = BTreeSet::new();
        let mut i = 0usize;
        while out.len() < n {
            let id = format!("seed-{i:04}");
            let scene = self.scene(&id);
            let image = ImageRef::new(id.clone(), format!("mock://{id}.jpg")).expect("non-empty id");
            let caption = match scene.regions.get(i % scene.regions.len().max(1)) {
                Some(r) => Caption::object(
                    r.caption.clone(),
                    RegionDescriptor::new(r.label.clone(), r.bbox).expect("synthesized boxes are positive"),
                )
                .expect("non-empty caption"),
                None => Caption::global(scene.global_caption.clone()).expect("non-empty caption"),
            };
            let candidates = extract_candidates(caption.text());
            i += 1;
            let Some(answer) = candidates.get(i % candidates.len().max(1)) else { continue };
            let question = mock_question(answer, caption.text());
            let qa = QAPair::new(question, answer.clone()).expect("non-empty question and answer");
            let ex = Example::new(caption, qa, ExampleSource::MemorySeed).with_origin(Some(id), Some(image));
            if seen.insert(ex.triple_key()) {
                out.push(ex);
            }
        }
        out
    }
}

fn content_tokens(text: &str) -> impl Iterator<Item = String> {
    word_tokens(text).into_iter().filter(|t| !is_stop_word(t))
}

fn reply<T: Serialize>(status: u16, envelope: Envelope<T>) -> RawResponse {
    RawResponse { status, body: serde_json::to_string(&envelope).expect("envelopes serialize") }
}

fn reject(message: impl Into<String>) -> RawResponse {
    reply(422, Envelope::<()>::failure(message))
}

fn parse<T: DeserializeOwned>(body: &str) -> Result<T, RawResponse> {
    serde_json::from_str(body).map_err(|e| {
        let status = if e.is_data() { 422 } else { 400 };
        reply(status, Envelope::<()>::failure(format!("invalid request: {e}")))
    })
}

fn check_image(image: &WireImage) -> Result<(), RawResponse> {
    check_text(&image.id, "image id")?;
    check_text(&image.uri, "image uri")
}

fn check_text(value: &str, what: &str) -> Result<(), RawResponse> {
    if value.trim().is_empty() {
        Err(reject(format!("{what} must not be empty")))
    } else {
        Ok(())
    }
}

/// Question-only answer: colour priors, then a few question-shape rules,
/// then [`DEFAULT_QA_ANSWER`].
pub fn qa_prior(question: &str) -> String {
    let tokens = word_tokens(question);
    let has = |w: &str| tokens.iter().any(|t| t == w);
    if has("color") || has("colour") {
        for (object, color) in COLOR_PRIORS {
            let plural = format!("{object}s");
            if tokens.iter().any(|t| t == object || *t == plural) {
                return (*color).to_owned();
            }
        }
        return "white".to_owned();
    }
    if tokens.len() >= 2 && tokens[0] == "how" && tokens[1] == "many" {
        return "2".to_owned();
    }
    const AUXILIARIES: &[&str] = &["is", "are", "does", "do", "can", "was", "were", "will", "has", "have"];
    if tokens.first().is_some_and(|t| AUXILIARIES.contains(&t.as_str())) {
        return "yes".to_owned();
    }
    DEFAULT_QA_ANSWER.to_owned()
}

/// Template question whose answer is `answer` given `caption`.
///
/// * numbers: "How many {next noun} are there?"
/// * yes / no: "Is this {caption}?"
/// * answer inside the caption after some words: "What is/are {prefix}?",
///   with a leading article or number word replaced by "the" and "are"
///   when that number is above one
/// * answer at the start: "What is {rest of caption}?"
/// * otherwise "What is in the picture?"
pub fn mock_question(answer: &str, caption: &str) -> String {
    let a = word_tokens(answer);
    let c = word_tokens(caption);
    if a.is_empty() {
        return "What is in the picture?".into();
    }
    if a.len() == 1 && (a[0] == "yes" || a[0] == "no") {
        return format!("Is this {}?", c.join(" "));
    }
    if a.len() == 1 {
        if let Some(numeral) = as_number(&a[0]) {
            // the head noun is the last word of the phrase after the number
            let noun = c
                .iter()
                .position(|t| as_number(t).as_deref() == Some(numeral.as_str()))
                .and_then(|p| c[p + 1..].iter().take_while(|t| !is_stop_word(t) && as_number(t).is_none()).last());
            return match noun {
                Some(n) => format!("How many {n} are there?"),
                None => "How many are there?".into(),
            };
        }
    }
    let Some(pos) = (0..c.len().saturating_sub(a.len() - 1)).find(|&p| c[p..p + a.len()] == a[..]) else {
        return "What is in the picture?".into();
    };
    let is_article = |t: &String| matches!(t.as_str(), "a" | "an" | "the");
    let plural = |t: &String| as_number(t).is_some_and(|n| n != "1" && n != "0");
    let mut prefix: Vec<String> = c[..pos].to_vec();
    while prefix.last().is_some_and(|t| is_article(t) || as_number(t).is_some()) {
        prefix.pop();
    }
    if prefix.is_empty() {
        // the answer is the subject
        let verb = if c[..pos].iter().any(plural) { "are" } else { "is" };
        let rest = &c[pos + a.len()..];
        return if rest.is_empty() { "What is this?".into() } else { format!("What {verb} {}?", rest.join(" ")) };
    }
    let mut verb = "is";
    if is_article(&prefix[0]) {
        prefix[0] = "the".into();
    } else if as_number(&prefix[0]).is_some() {
        if plural(&prefix[0]) {
            verb = "are";
        }
        prefix[0] = "the".into();
    }
    format!("What {verb} {}?", prefix.join(" "))
}

/// Most frequent non-empty `Answer:` line, ties to the earliest.
pub fn llm_answer(prompt: &str) -> String {
    let mut counts: Vec<(String, usize)> = Vec::new();
    for line in prompt.lines() {
        let Some(rest) = line.strip_prefix("Answer:") else { continue };
        let a = normalize_answer(rest);
        if a.is_empty() {
            continue;
        }
        match counts.iter_mut().find(|(k, _)| *k == a) {
            Some((_, n)) => *n += 1,
            None => counts.push((a, 1)),
        }
    }
    let mut best: Option<(String, usize)> = None;
    for (a, n) in counts {
        if best.as_ref().is_none_or(|(_, m)| n > *m) {
            best = Some((a, n));
        }
    }
    best.map(|(a, _)| a).unwrap_or_else(|| DEFAULT_LLM_ANSWER.to_owned())
}

/// In-process transport straight into a [`MockWorld`].
#[derive(Clone)]
pub struct MockTransport(pub Arc<MockWorld>);

impl Transport for MockTransport {
    fn post(&self, endpoint: Endpoint, body: String) -> Result<RawResponse, String> {
        Ok(self.0.handle(endpoint, &body))
    }
}
