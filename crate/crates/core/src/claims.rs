//! Claim identification over post titles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batch::{run_batch, BatchError, BatchOptions};
use crate::gateway::{build_claim_prompt, parse_claim_response, ClaimExemplar, Gateway, GatewayError, PromptError, PromptSpec, Strategy, Task};
use crate::model::{ClaimLabel, PairClaimType, Post};
use crate::text::normalize_for_match;

#[derive(Debug, Error)]
pub enum ClaimError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Batch(Box<BatchError<GatewayError>>),
    #[error("claim text is empty after normalization")]
    EmptyClaimText,
}

impl From<BatchError<GatewayError>> for ClaimError {
    fn from(e: BatchError<GatewayError>) -> Self {
        ClaimError::Batch(Box::new(e))
    }
}

/// A title to classify. Accepts post records directly (`id` is read as
/// `post_id`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TitleRecord {
    #[serde(alias = "id")]
    pub post_id: String,
    pub title: String,
}

impl From<&Post> for TitleRecord {
    fn from(post: &Post) -> Self {
        TitleRecord { post_id: post.id.clone(), title: post.title.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimPrediction {
    pub post_id: String,
    /// On a parse failure this holds the fallback (`false`).
    pub predicted: bool,
    pub raw_response: String,
    pub strategy: Strategy,
    pub parse_failed: bool,
}

/// One prediction per title, in input order.
pub fn identify_claims(
    titles: &[TitleRecord],
    gateway: &Gateway,
    spec: &PromptSpec,
    options: &BatchOptions,
) -> Result<Vec<ClaimPrediction>, ClaimError> {
    if spec.task() != Task::ClaimId {
        return Err(PromptError::WrongTask { expected: Task::ClaimId, actual: spec.task() }.into());
    }
    let prompts = titles
        .iter()
        .map(|t| build_claim_prompt(spec, &t.title).map(|p| (t.post_id.clone(), p)))
        .collect::<Result<Vec<_>, _>>()?;
    let strategy = spec.strategy();
    let preds = run_batch(&prompts, |(id, _)| id.clone(), options, |(post_id, prompt)| {
        let raw = gateway.complete(prompt)?;
        let parsed = parse_claim_response(&raw);
        Ok(ClaimPrediction {
            post_id: post_id.clone(),
            predicted: parsed.clone().unwrap_or(false),
            raw_response: raw,
            strategy,
            parse_failed: parsed.is_err(),
        })
    })?;
    Ok(preds)
}

/// Splits off titles that served as prompt exemplars (compared after
/// normalization). Returns `(kept, excluded)`.
pub fn exclude_exemplar_titles(titles: Vec<TitleRecord>, exemplars: &[ClaimExemplar]) -> (Vec<TitleRecord>, Vec<TitleRecord>) {
    let used: std::collections::HashSet<String> = exemplars.iter().map(|e| normalize_for_match(&e.input)).collect();
    titles.into_iter().partition(|t| !used.contains(&normalize_for_match(&t.title)))
}

/// Output classes of a ClaimBuster-style three-way scorer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClaimBusterLabel {
    CheckWorthyFactual,
    UnimportantFactual,
    NoFactualClaim,
}

impl ClaimBusterLabel {
    pub const ALL: [ClaimBusterLabel; 3] =
        [ClaimBusterLabel::CheckWorthyFactual, ClaimBusterLabel::UnimportantFactual, ClaimBusterLabel::NoFactualClaim];
}

/// Both factual classes count as a claim.
pub fn map_claimbuster_to_binary(label: ClaimBusterLabel) -> bool {
    match label {
        ClaimBusterLabel::CheckWorthyFactual | ClaimBusterLabel::UnimportantFactual => true,
        ClaimBusterLabel::NoFactualClaim => false,
    }
}

/// Explicit iff the normalized claim text occurs contiguously in the
/// normalized title (see [`normalize_for_match`]).
pub fn tag_explicitness(title: &str, claim_text: &str) -> Result<PairClaimType, ClaimError> {
    let claim = normalize_for_match(claim_text);
    if claim.is_empty() {
        return Err(ClaimError::EmptyClaimText);
    }
    if normalize_for_match(title).contains(&claim) {
        Ok(PairClaimType::Explicit)
    } else {
        Ok(PairClaimType::Implicit)
    }
}

/// Human annotation of the claim a title carries. `has_claim: false` marks
/// a title the model wrongly flagged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimAnnotation {
    pub post_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub has_claim: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim_type: Option<PairClaimType>,
}

/// Claim labels for pairing. A positive prediction is dropped when the
/// annotation rejects it, otherwise takes its type from the annotation
/// (explicit tag first, else the substring rule on `claim_text`) and
/// defaults to `Implicit` when nothing is annotated.
pub fn claim_labels_from_predictions(
    titles: &[TitleRecord],
    predictions: &[ClaimPrediction],
    annotations: &[ClaimAnnotation],
) -> Result<BTreeMap<String, ClaimLabel>, ClaimError> {
    let titles: BTreeMap<&str, &str> = titles.iter().map(|t| (t.post_id.as_str(), t.title.as_str())).collect();
    let notes: BTreeMap<&str, &ClaimAnnotation> = annotations.iter().map(|a| (a.post_id.as_str(), a)).collect();
    let mut labels = BTreeMap::new();
    for pred in predictions {
        let note = notes.get(pred.post_id.as_str());
        let rejected = note.is_some_and(|a| a.has_claim == Some(false));
        let label = if pred.predicted && !rejected {
            let kind = match note {
                Some(ClaimAnnotation { claim_type: Some(kind), .. }) => *kind,
                Some(ClaimAnnotation { claim_text: Some(text), .. }) => {
                    tag_explicitness(titles.get(pred.post_id.as_str()).copied().unwrap_or_default(), text)?
                }
                _ => PairClaimType::Implicit,
            };
            ClaimLabel::claim(kind)
        } else {
            ClaimLabel::NO_CLAIM
        };
        labels.insert(pred.post_id.clone(), label);
    }
    Ok(labels)
}
