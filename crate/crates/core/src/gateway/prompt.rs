//! Prompt templates for claim identification and stance detection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::StanceLabel;

pub const TEMPLATE_VERSION: &str = "v1";

/// Number of labelled titles a few-shot claim prompt carries by default.
pub const DEFAULT_CLAIM_EXEMPLARS: usize = 9;

pub const CLAIM_INSTRUCTION: &str = "You are given text input. Identify if the input text makes any claim about medical symptoms/treatment or if it is any random question/information.\nIf a claim about medical symptoms/treatment is being made, return 'Yes' in response, or if it is any random question/information return 'No'.";

pub const CLAIM_FEW_SHOT_LEAD: &str = " Here are a few examples:";

pub const STANCE_INSTRUCTION: &str =
    "As it relates to the post title, is the comment in FAVOR, AGAINST or NONE? Just answer FAVOR, AGAINST, or NONE.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    ClaimId,
    Stance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    ZeroShot,
    FewShot,
    ChainOfThought,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::ZeroShot => "zero-shot",
            Strategy::FewShot => "few-shot",
            Strategy::ChainOfThought => "chain-of-thought",
        }
    }
}

/// A labelled title for few-shot claim prompts. `claim` is `"Yes"` or `"No"`
/// on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimExemplar {
    pub input: String,
    #[serde(with = "yes_no")]
    pub claim: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StanceExemplar {
    pub title: String,
    pub comment: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub stance: StanceLabel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Exemplars {
    Claim(Vec<ClaimExemplar>),
    Stance(Vec<StanceExemplar>),
}

impl Exemplars {
    pub fn len(&self) -> usize {
        match self {
            Exemplars::Claim(v) => v.len(),
            Exemplars::Stance(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("zero-shot prompts take no exemplars, got {0}")]
    ZeroShotWithExemplars(usize),
    #[error("few-shot prompts need at least one exemplar")]
    FewShotWithoutExemplars,
    #[error("few-shot claim prompts carry exactly {expected} exemplars, got {got}")]
    ClaimExemplarCount { expected: usize, got: usize },
    #[error("chain-of-thought prompting applies to stance detection only")]
    ChainOfThoughtForClaims,
    #[error("chain-of-thought exemplar {0} has no reason")]
    MissingReason(usize),
    #[error("exemplars do not match the {0:?} task")]
    ExemplarKind(Task),
    #[error("prompt spec is for {actual:?}, expected {expected:?}")]
    WrongTask { expected: Task, actual: Task },
}

/// Task, strategy and the ordered exemplars a prompt is built from. Only
/// constructible in a valid state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSpec {
    task: Task,
    strategy: Strategy,
    exemplars: Exemplars,
    template_version: String,
}

impl PromptSpec {
    pub fn new(task: Task, strategy: Strategy, exemplars: Exemplars) -> Result<Self, PromptError> {
        Self::with_claim_exemplar_count(task, strategy, exemplars, DEFAULT_CLAIM_EXEMPLARS)
    }

    pub fn with_claim_exemplar_count(
        task: Task,
        strategy: Strategy,
        exemplars: Exemplars,
        claim_exemplars: usize,
    ) -> Result<Self, PromptError> {
        match (&exemplars, task) {
            (Exemplars::Claim(_), Task::ClaimId) | (Exemplars::Stance(_), Task::Stance) => {}
            _ if exemplars.is_empty() => {}
            _ => return Err(PromptError::ExemplarKind(task)),
        }
        match strategy {
            Strategy::ZeroShot if !exemplars.is_empty() => {
                return Err(PromptError::ZeroShotWithExemplars(exemplars.len()))
            }
            Strategy::ZeroShot => {}
            Strategy::FewShot | Strategy::ChainOfThought if exemplars.is_empty() => {
                return Err(PromptError::FewShotWithoutExemplars)
            }
            Strategy::FewShot if task == Task::ClaimId && exemplars.len() != claim_exemplars => {
                return Err(PromptError::ClaimExemplarCount { expected: claim_exemplars, got: exemplars.len() })
            }
            Strategy::FewShot => {}
            Strategy::ChainOfThought if task == Task::ClaimId => return Err(PromptError::ChainOfThoughtForClaims),
            Strategy::ChainOfThought => {
                if let Exemplars::Stance(list) = &exemplars {
                    if let Some(idx) = list.iter().position(|e| e.reason.as_deref().is_none_or(|r| r.trim().is_empty())) {
                        return Err(PromptError::MissingReason(idx));
                    }
                }
            }
        }
        let exemplars = match (exemplars, task) {
            (e, _) if !e.is_empty() => e,
            (_, Task::ClaimId) => Exemplars::Claim(Vec::new()),
            (_, Task::Stance) => Exemplars::Stance(Vec::new()),
        };
        Ok(PromptSpec { task, strategy, exemplars, template_version: TEMPLATE_VERSION.to_string() })
    }

    pub fn claim_zero_shot() -> Self {
        Self::new(Task::ClaimId, Strategy::ZeroShot, Exemplars::Claim(Vec::new())).expect("valid")
    }

    pub fn stance_zero_shot() -> Self {
        Self::new(Task::Stance, Strategy::ZeroShot, Exemplars::Stance(Vec::new())).expect("valid")
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn exemplars(&self) -> &Exemplars {
        &self.exemplars
    }

    pub fn template_version(&self) -> &str {
        &self.template_version
    }

    fn expect_task(&self, expected: Task) -> Result<(), PromptError> {
        if self.task == expected {
            Ok(())
        } else {
            Err(PromptError::WrongTask { expected, actual: self.task })
        }
    }
}

fn yes_no_str(b: bool) -> &'static str {
    if b {
        "Yes"
    } else {
        "No"
    }
}

pub fn build_claim_prompt(spec: &PromptSpec, title: &str) -> Result<String, PromptError> {
    spec.expect_task(Task::ClaimId)?;
    let mut out = String::from(CLAIM_INSTRUCTION);
    match (&spec.exemplars, spec.strategy) {
        (Exemplars::Claim(list), Strategy::FewShot) => {
            out.push_str(CLAIM_FEW_SHOT_LEAD);
            out.push('\n');
            for ex in list {
                out.push_str(&format!("Input: {}\nClaim: {}\n", ex.input, yes_no_str(ex.claim)));
            }
            out.push_str(&format!("\nInput: {title}\nClaim:"));
        }
        _ => out.push_str(&format!("\n\nInput: {title}")),
    }
    Ok(out)
}

pub fn build_stance_prompt(spec: &PromptSpec, title: &str, comment: &str) -> Result<String, PromptError> {
    spec.expect_task(Task::Stance)?;
    let mut out = String::from(STANCE_INSTRUCTION);
    out.push_str("\n\n");
    if let Exemplars::Stance(list) = &spec.exemplars {
        for ex in list {
            out.push_str(&format!("Title: {}\nComment: {}\n", ex.title, ex.comment));
            if spec.strategy == Strategy::ChainOfThought {
                out.push_str(&format!("Reason: {}\n", ex.reason.as_deref().unwrap_or_default()));
            }
            out.push_str(&format!("Stance: {}\n\n", ex.stance));
        }
    }
    out.push_str(&format!("Title: {title}\nComment: {comment}"));
    match spec.strategy {
        Strategy::ZeroShot => {}
        Strategy::FewShot => out.push_str("\nStance:"),
        Strategy::ChainOfThought => out.push_str("\nReason:"),
    }
    Ok(out)
}

mod yes_no {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(super::yes_no_str(*value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        let raw = String::deserialize(d)?;
        match raw.as_str() {
            "Yes" => Ok(true),
            "No" => Ok(false),
            other => Err(serde::de::Error::custom(format!("expected \"Yes\" or \"No\", got {other:?}"))),
        }
    }
}
