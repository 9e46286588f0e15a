//! Turning free-form model replies into labels.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompt::Strategy;
use crate::model::StanceLabel;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseFailure {
    #[error("no label found in response {0:?}")]
    NoLabel(String),
    #[error("conflicting labels in response {0:?}")]
    Conflicting(String),
}

/// What to do with a reply that does not parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailurePolicy {
    /// Keep the sample out of the metrics and count it.
    #[default]
    Exclude,
    /// Score it as `None` stance / no claim.
    MapToDefault,
}

fn excerpt(text: &str) -> String {
    const MAX: usize = 120;
    match text.char_indices().nth(MAX) {
        Some((idx, _)) => format!("{}…", &text[..idx]),
        None => text.to_string(),
    }
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase)
}

/// `true` iff a standalone "yes" appears before any standalone "no".
pub fn parse_claim_response(text: &str) -> Result<bool, ParseFailure> {
    for token in tokens(text) {
        match token.as_str() {
            "yes" => return Ok(true),
            "no" => return Ok(false),
            _ => {}
        }
    }
    Err(ParseFailure::NoLabel(excerpt(text)))
}

fn stance_token(token: &str) -> Option<StanceLabel> {
    match token {
        "favor" => Some(StanceLabel::Favor),
        "against" => Some(StanceLabel::Against),
        "none" | "neutral" => Some(StanceLabel::None),
        _ => None,
    }
}

fn labels_in(line: &str) -> Vec<StanceLabel> {
    let mut found: Vec<StanceLabel> = Vec::new();
    for label in tokens(line).filter_map(|t| stance_token(&t)) {
        if !found.contains(&label) {
            found.push(label);
        }
    }
    found
}

fn decide(line: &str, whole: &str) -> Result<StanceLabel, ParseFailure> {
    match labels_in(line).as_slice() {
        [] => Err(ParseFailure::NoLabel(excerpt(whole))),
        [one] => Ok(*one),
        _ => Err(ParseFailure::Conflicting(excerpt(whole))),
    }
}

/// Returns the text after `Stance:` if the line is a stance line, tolerating
/// markdown decoration such as `**Stance:**` or `- Stance:`.
fn stance_line_rest(line: &str) -> Option<&str> {
    let trimmed = line.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '_' | '#' | '>' | '-' | '`'));
    let head = trimmed.get(..6)?;
    if !head.eq_ignore_ascii_case("stance") {
        return None;
    }
    let rest = trimmed[6..].trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '_'));
    rest.strip_prefix(':')
}

/// Zero-/few-shot: the first line mentioning a label decides. Chain of
/// thought: the last `Stance:` line decides; a reply that is nothing but a
/// bare label is also accepted.
pub fn parse_stance_response(text: &str, strategy: Strategy) -> Result<StanceLabel, ParseFailure> {
    match strategy {
        Strategy::ZeroShot | Strategy::FewShot => {
            match text.lines().find(|line| !labels_in(line).is_empty()) {
                Some(line) => decide(line, text),
                None => Err(ParseFailure::NoLabel(excerpt(text))),
            }
        }
        Strategy::ChainOfThought => {
            if let Some(rest) = text.lines().rev().find_map(stance_line_rest) {
                return decide(rest, text);
            }
            let mut all = tokens(text);
            match (all.next().as_deref().and_then(stance_token), all.next()) {
                (Some(label), None) => Ok(label),
                _ => Err(ParseFailure::NoLabel(excerpt(text))),
            }
        }
    }
}

/// Canonical reply for a label; parses back to the same label under every
/// strategy.
pub fn render_stance(label: StanceLabel) -> &'static str {
    label.prompt_token()
}
