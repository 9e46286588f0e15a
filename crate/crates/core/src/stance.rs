//! Stance of a comment toward its post title.
//!
//! Three families of predictors share one output type: chat-model prompting
//! (zero-shot, few-shot, chain of thought), a zero-shot NLI scorer whose
//! classes map onto stance labels, and NLI gated by embedding similarity.
//! NLI and embedding models are external services:
//!
//! * `POST {nli_endpoint}` `{"premise", "hypothesis"}` →
//!   `{"entailment", "neutral", "contradiction"}`
//! * `POST {embed_endpoint}` `{"texts": [...]}` → `{"vectors": [[...], ...]}`

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batch::{run_batch, BatchError, BatchOptions};
use crate::gateway::{build_stance_prompt, parse_stance_response, Gateway, GatewayError, PromptError, PromptSpec, Strategy, Task};
use crate::model::{map_nli_to_stance, NliScores, StanceLabel, StancePair};

pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericError {
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("empty vector")]
    Empty,
    #[error("zero-norm embedding{}", .text.as_ref().map(|t| format!(" for text {t:?}")).unwrap_or_default())]
    ZeroNorm { text: Option<String> },
}

#[derive(Debug, Error)]
pub enum EndpointError {
    #[error("{url}: failed after {attempts} attempt(s): {message}")]
    Transport { url: String, attempts: u32, message: String },
    #[error("{url}: HTTP {status}: {excerpt}")]
    Status { url: String, status: u16, excerpt: String },
    #[error("{url}: malformed response: {message}")]
    Malformed { url: String, message: String },
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

#[derive(Debug, Error)]
pub enum StanceError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Llm(Box<BatchError<GatewayError>>),
    #[error(transparent)]
    Scorer(Box<BatchError<EndpointError>>),
    #[error("similarity threshold {0} outside [0, 1]")]
    Threshold(f64),
}

impl From<BatchError<GatewayError>> for StanceError {
    fn from(e: BatchError<GatewayError>) -> Self {
        StanceError::Llm(Box::new(e))
    }
}

impl From<BatchError<EndpointError>> for StanceError {
    fn from(e: BatchError<EndpointError>) -> Self {
        StanceError::Scorer(Box::new(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StanceMethod {
    LlmZero,
    LlmFew,
    LlmCot,
    Nli,
    NliSts,
}

impl StanceMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            StanceMethod::LlmZero => "llm-zero",
            StanceMethod::LlmFew => "llm-few",
            StanceMethod::LlmCot => "llm-cot",
            StanceMethod::Nli => "nli",
            StanceMethod::NliSts => "nli-sts",
        }
    }

    pub fn strategy(self) -> Option<Strategy> {
        match self {
            StanceMethod::LlmZero => Some(Strategy::ZeroShot),
            StanceMethod::LlmFew => Some(Strategy::FewShot),
            StanceMethod::LlmCot => Some(Strategy::ChainOfThought),
            StanceMethod::Nli | StanceMethod::NliSts => None,
        }
    }

    pub fn for_strategy(strategy: Strategy) -> Self {
        match strategy {
            Strategy::ZeroShot => StanceMethod::LlmZero,
            Strategy::FewShot => StanceMethod::LlmFew,
            Strategy::ChainOfThought => StanceMethod::LlmCot,
        }
    }
}

impl std::str::FromStr for StanceMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [StanceMethod::LlmZero, StanceMethod::LlmFew, StanceMethod::LlmCot, StanceMethod::Nli, StanceMethod::NliSts]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown stance method {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawOutput {
    Scores {
        scores: NliScores,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        similarity: Option<f64>,
    },
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StancePrediction {
    pub pair_id: String,
    /// On a parse failure this holds the fallback (`None`).
    pub predicted: StanceLabel,
    pub method: StanceMethod,
    pub raw: RawOutput,
    pub parse_failed: bool,
}

/// Which side of the pair is the NLI premise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    #[default]
    TitlePremise,
    CommentPremise,
}

impl Orientation {
    pub fn premise_hypothesis(self, pair: &StancePair) -> (&str, &str) {
        match self {
            Orientation::TitlePremise => (&pair.title, &pair.comment),
            Orientation::CommentPremise => (&pair.comment, &pair.title),
        }
    }
}

fn default_threshold() -> f64 {
    DEFAULT_SIMILARITY_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StsConfig {
    #[serde(default = "default_threshold")]
    pub similarity_threshold: f64,
    pub embed_endpoint: String,
    pub nli_endpoint: String,
    #[serde(default)]
    pub orientation: Orientation,
}

impl StsConfig {
    pub fn new(embed_endpoint: impl Into<String>, nli_endpoint: impl Into<String>) -> Self {
        StsConfig {
            similarity_threshold: DEFAULT_SIMILARITY_THRESHOLD,
            embed_endpoint: embed_endpoint.into(),
            nli_endpoint: nli_endpoint.into(),
            orientation: Orientation::default(),
        }
    }

    pub fn validate(&self) -> Result<(), StanceError> {
        if (0.0..=1.0).contains(&self.similarity_threshold) {
            Ok(())
        } else {
            Err(StanceError::Threshold(self.similarity_threshold))
        }
    }
}

pub trait NliScorer: Send + Sync {
    fn score(&self, premise: &str, hypothesis: &str) -> Result<NliScores, EndpointError>;
}

pub trait Embedder: Send + Sync {
    /// One vector per input text, in order.
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EndpointError>;
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, NumericError> {
    if u.len() != v.len() {
        return Err(NumericError::DimensionMismatch(u.len(), v.len()));
    }
    if u.is_empty() {
        return Err(NumericError::Empty);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(NumericError::ZeroNorm { text: None });
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Below the threshold the pair is `None`; otherwise entailment versus
/// contradiction decides, ties going to `Favor`.
pub fn sts_decision(similarity: f64, scores: &NliScores, threshold: f64) -> StanceLabel {
    if similarity < threshold {
        StanceLabel::None
    } else if scores.entailment >= scores.contradiction {
        StanceLabel::Favor
    } else {
        StanceLabel::Against
    }
}

pub fn nli_stance(pair: &StancePair, scorer: &dyn NliScorer, orientation: Orientation) -> Result<StancePrediction, EndpointError> {
    let (premise, hypothesis) = orientation.premise_hypothesis(pair);
    let scores = scorer.score(premise, hypothesis)?;
    Ok(StancePrediction {
        pair_id: pair.pair_id.clone(),
        predicted: map_nli_to_stance(scores.argmax()),
        method: StanceMethod::Nli,
        raw: RawOutput::Scores { scores, similarity: None },
        parse_failed: false,
    })
}

pub fn sts_nli_stance(
    pair: &StancePair,
    embedder: &dyn Embedder,
    scorer: &dyn NliScorer,
    cfg: &StsConfig,
) -> Result<StancePrediction, EndpointError> {
    let texts = [pair.title.as_str(), pair.comment.as_str()];
    let vectors = embedder.embed(&texts)?;
    if vectors.len() != 2 {
        return Err(EndpointError::Malformed {
            url: cfg.embed_endpoint.clone(),
            message: format!("expected 2 vectors, got {}", vectors.len()),
        });
    }
    for (vector, text) in vectors.iter().zip(texts) {
        if vector.iter().all(|x| *x == 0.0) {
            return Err(NumericError::ZeroNorm { text: Some(text.to_string()) }.into());
        }
    }
    let similarity = cosine_similarity(&vectors[0], &vectors[1])?;
    let (premise, hypothesis) = cfg.orientation.premise_hypothesis(pair);
    let scores = scorer.score(premise, hypothesis)?;
    Ok(StancePrediction {
        pair_id: pair.pair_id.clone(),
        predicted: sts_decision(similarity, &scores, cfg.similarity_threshold),
        method: StanceMethod::NliSts,
        raw: RawOutput::Scores { scores, similarity: Some(similarity) },
        parse_failed: false,
    })
}

pub fn detect_stance_llm(
    pairs: &[StancePair],
    gateway: &Gateway,
    spec: &PromptSpec,
    options: &BatchOptions,
) -> Result<Vec<StancePrediction>, StanceError> {
    if spec.task() != Task::Stance {
        return Err(PromptError::WrongTask { expected: Task::Stance, actual: spec.task() }.into());
    }
    let prompts = pairs
        .iter()
        .map(|p| build_stance_prompt(spec, &p.title, &p.comment).map(|prompt| (p.pair_id.clone(), prompt)))
        .collect::<Result<Vec<_>, _>>()?;
    let strategy = spec.strategy();
    let method = StanceMethod::for_strategy(strategy);
    let preds = run_batch(&prompts, |(id, _)| id.clone(), options, |(pair_id, prompt)| {
        let raw = gateway.complete(prompt)?;
        let parsed = parse_stance_response(&raw, strategy);
        Ok::<_, GatewayError>(StancePrediction {
            pair_id: pair_id.clone(),
            predicted: parsed.clone().unwrap_or(StanceLabel::None),
            method,
            raw: RawOutput::Text(raw),
            parse_failed: parsed.is_err(),
        })
    })?;
    Ok(preds)
}

pub fn detect_stance_nli(
    pairs: &[StancePair],
    scorer: &dyn NliScorer,
    orientation: Orientation,
    options: &BatchOptions,
) -> Result<Vec<StancePrediction>, StanceError> {
    Ok(run_batch(pairs, |p| p.pair_id.clone(), options, |p| nli_stance(p, scorer, orientation))?)
}

pub fn detect_stance_sts(
    pairs: &[StancePair],
    embedder: &dyn Embedder,
    scorer: &dyn NliScorer,
    cfg: &StsConfig,
    options: &BatchOptions,
) -> Result<Vec<StancePrediction>, StanceError> {
    cfg.validate()?;
    Ok(run_batch(pairs, |p| p.pair_id.clone(), options, |p| sts_nli_stance(p, embedder, scorer, cfg))?)
}

/// JSON-over-HTTP client shared by the NLI and embedding services.
struct JsonEndpoint {
    url: String,
    agent: ureq::Agent,
    max_attempts: u32,
    backoff: Duration,
}

impl JsonEndpoint {
    fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        JsonEndpoint { url: url.into(), agent, max_attempts: 3, backoff: Duration::from_millis(200) }
    }

    fn post<Req: Serialize, Resp: serde::de::DeserializeOwned>(&self, body: &Req) -> Result<Resp, EndpointError> {
        let payload = serde_json::to_string(body).expect("request serializes");
        let mut last = String::new();
        for attempt in 1..=self.max_attempts {
            if attempt > 1 {
                std::thread::sleep(self.backoff);
            }
            let sent = self.agent.post(&self.url).header("content-type", "application/json").send(payload.as_bytes());
            match sent {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let text = resp.body_mut().read_to_string().unwrap_or_default();
                    if (200..300).contains(&status) {
                        return serde_json::from_str(&text)
                            .map_err(|e| EndpointError::Malformed { url: self.url.clone(), message: e.to_string() });
                    }
                    if status < 500 && status != 429 {
                        let excerpt: String = text.chars().take(200).collect();
                        return Err(EndpointError::Status { url: self.url.clone(), status, excerpt });
                    }
                    last = format!("HTTP {status}");
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(EndpointError::Transport { url: self.url.clone(), attempts: self.max_attempts, message: last })
    }
}

#[derive(Serialize)]
struct NliRequest<'a> {
    premise: &'a str,
    hypothesis: &'a str,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

pub struct HttpNliScorer(JsonEndpoint);

impl HttpNliScorer {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        HttpNliScorer(JsonEndpoint::new(url, timeout))
    }
}

impl NliScorer for HttpNliScorer {
    fn score(&self, premise: &str, hypothesis: &str) -> Result<NliScores, EndpointError> {
        self.0.post(&NliRequest { premise, hypothesis })
    }
}

pub struct HttpEmbedder(JsonEndpoint);

impl HttpEmbedder {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        HttpEmbedder(JsonEndpoint::new(url, timeout))
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EndpointError> {
        let resp: EmbedResponse = self.0.post(&EmbedRequest { texts })?;
        if resp.vectors.len() != texts.len() {
            return Err(EndpointError::Malformed {
                url: self.0.url.clone(),
                message: format!("{} texts but {} vectors", texts.len(), resp.vectors.len()),
            });
        }
        Ok(resp.vectors)
    }
}
