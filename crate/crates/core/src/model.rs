//! Domain types shared by every pipeline stage, plus the JSON Lines corpus
//! layout (`posts.jsonl`, `comments.jsonl`, `pairs.jsonl`).

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::text::word_count;

/// Fields present in a record that this schema does not know about. They are
/// carried through untouched so a load/save cycle is lossless.
pub type Extra = BTreeMap<String, Value>;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid corpus: {0}")]
    Invalid(String),
}

/// A forum submission. `title` is the text whose claim comments are judged
/// against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub title: String,
    #[serde(default)]
    pub flair: Option<String>,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub author: String,
    #[serde(default)]
    pub body: String,
    #[serde(default)]
    pub source_url: Option<String>,
    #[serde(flatten)]
    pub extra: Extra,
}

/// A reply in a post's discussion thread. Top-level iff `parent_id` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comment {
    pub id: String,
    pub post_id: String,
    #[serde(default)]
    pub parent_id: Option<String>,
    #[serde(default)]
    pub author: String,
    #[serde(default)]
    pub body: String,
    pub created_at: DateTime<Utc>,
    #[serde(flatten)]
    pub extra: Extra,
}

impl Comment {
    pub fn is_top_level(&self) -> bool {
        self.parent_id.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StanceLabel {
    Favor,
    Against,
    None,
}

impl StanceLabel {
    pub const ALL: [StanceLabel; 3] = [StanceLabel::Favor, StanceLabel::Against, StanceLabel::None];

    pub fn as_str(self) -> &'static str {
        match self {
            StanceLabel::Favor => "Favor",
            StanceLabel::Against => "Against",
            StanceLabel::None => "None",
        }
    }

    /// The label as the chat prompts ask for it.
    pub fn prompt_token(self) -> &'static str {
        match self {
            StanceLabel::Favor => "FAVOR",
            StanceLabel::Against => "AGAINST",
            StanceLabel::None => "NONE",
        }
    }
}

impl fmt::Display for StanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown label `{0}`")]
pub struct UnknownLabel(pub String);

impl FromStr for StanceLabel {
    type Err = UnknownLabel;

    /// Exact wire values only; the label set is closed.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Favor" => Ok(StanceLabel::Favor),
            "Against" => Ok(StanceLabel::Against),
            "None" => Ok(StanceLabel::None),
            other => Err(UnknownLabel(other.to_string())),
        }
    }
}

/// Three-way natural-language-inference classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NliLabel {
    Entailment,
    Neutral,
    Contradiction,
}

impl NliLabel {
    pub const ALL: [NliLabel; 3] = [NliLabel::Entailment, NliLabel::Neutral, NliLabel::Contradiction];
}

/// Favor ↔ Entailment, Against ↔ Contradiction, None ↔ Neutral.
pub fn map_stance_to_nli(label: StanceLabel) -> NliLabel {
    match label {
        StanceLabel::Favor => NliLabel::Entailment,
        StanceLabel::Against => NliLabel::Contradiction,
        StanceLabel::None => NliLabel::Neutral,
    }
}

pub fn map_nli_to_stance(label: NliLabel) -> StanceLabel {
    match label {
        NliLabel::Entailment => StanceLabel::Favor,
        NliLabel::Contradiction => StanceLabel::Against,
        NliLabel::Neutral => StanceLabel::None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClaimType {
    Explicit,
    Implicit,
    NoClaim,
}

/// Claim type of a title that survived curation; `NoClaim` cannot occur.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PairClaimType {
    Explicit,
    Implicit,
}

impl PairClaimType {
    pub fn as_str(self) -> &'static str {
        match self {
            PairClaimType::Explicit => "Explicit",
            PairClaimType::Implicit => "Implicit",
        }
    }
}

impl From<PairClaimType> for ClaimType {
    fn from(value: PairClaimType) -> Self {
        match value {
            PairClaimType::Explicit => ClaimType::Explicit,
            PairClaimType::Implicit => ClaimType::Implicit,
        }
    }
}

/// Gold or derived claim annotation for one post title.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawClaimLabel", into = "RawClaimLabel")]
pub struct ClaimLabel {
    has_claim: bool,
    claim_type: ClaimType,
}

impl ClaimLabel {
    pub const NO_CLAIM: ClaimLabel = ClaimLabel { has_claim: false, claim_type: ClaimType::NoClaim };

    pub fn claim(kind: PairClaimType) -> Self {
        ClaimLabel { has_claim: true, claim_type: kind.into() }
    }

    pub fn has_claim(&self) -> bool {
        self.has_claim
    }

    pub fn claim_type(&self) -> ClaimType {
        self.claim_type
    }

    pub fn pair_claim_type(&self) -> Option<PairClaimType> {
        match self.claim_type {
            ClaimType::Explicit => Some(PairClaimType::Explicit),
            ClaimType::Implicit => Some(PairClaimType::Implicit),
            ClaimType::NoClaim => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawClaimLabel {
    has_claim: bool,
    claim_type: ClaimType,
}

impl TryFrom<RawClaimLabel> for ClaimLabel {
    type Error = String;

    fn try_from(raw: RawClaimLabel) -> Result<Self, Self::Error> {
        if raw.has_claim == (raw.claim_type == ClaimType::NoClaim) {
            return Err(format!(
                "has_claim = {} is inconsistent with claim_type = {:?}",
                raw.has_claim, raw.claim_type
            ));
        }
        Ok(ClaimLabel { has_claim: raw.has_claim, claim_type: raw.claim_type })
    }
}

impl From<ClaimLabel> for RawClaimLabel {
    fn from(label: ClaimLabel) -> Self {
        RawClaimLabel { has_claim: label.has_claim, claim_type: label.claim_type }
    }
}

/// A claim label attached to a post id, as stored in claim-label files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostClaimLabel {
    pub post_id: String,
    #[serde(flatten)]
    pub label: ClaimLabel,
}

/// A (title, comment) pair, the unit stance is predicted and annotated on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StancePair {
    pub pair_id: String,
    pub title: String,
    pub comment: String,
    #[serde(default)]
    pub gold_stance: Option<StanceLabel>,
    pub claim_type: PairClaimType,
    pub comment_word_count: usize,
    #[serde(flatten)]
    pub extra: Extra,
}

impl StancePair {
    pub fn new(
        pair_id: impl Into<String>,
        title: impl Into<String>,
        comment: impl Into<String>,
        claim_type: PairClaimType,
    ) -> Self {
        let comment = comment.into();
        StancePair {
            pair_id: pair_id.into(),
            title: title.into(),
            comment_word_count: word_count(&comment),
            comment,
            gold_stance: None,
            claim_type,
            extra: Extra::new(),
        }
    }

    pub fn with_gold(mut self, gold: StanceLabel) -> Self {
        self.gold_stance = Some(gold);
        self
    }
}

/// Entailment / neutral / contradiction probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNliScores")]
pub struct NliScores {
    pub entailment: f64,
    pub neutral: f64,
    pub contradiction: f64,
}

#[derive(Deserialize)]
struct RawNliScores {
    entailment: f64,
    neutral: f64,
    contradiction: f64,
}

impl TryFrom<RawNliScores> for NliScores {
    type Error = String;

    fn try_from(raw: RawNliScores) -> Result<Self, Self::Error> {
        NliScores::new(raw.entailment, raw.neutral, raw.contradiction)
    }
}

impl NliScores {
    pub const SUM_TOLERANCE: f64 = 1e-6;

    pub fn new(entailment: f64, neutral: f64, contradiction: f64) -> Result<Self, String> {
        for (name, p) in [("entailment", entailment), ("neutral", neutral), ("contradiction", contradiction)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} probability {p} outside [0, 1]"));
            }
        }
        let sum = entailment + neutral + contradiction;
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(format!("NLI probabilities sum to {sum}, expected 1"));
        }
        Ok(NliScores { entailment, neutral, contradiction })
    }

    pub fn get(&self, label: NliLabel) -> f64 {
        match label {
            NliLabel::Entailment => self.entailment,
            NliLabel::Neutral => self.neutral,
            NliLabel::Contradiction => self.contradiction,
        }
    }

    /// Highest-scoring class. Exact ties resolve Entailment, then Neutral,
    /// then Contradiction.
    pub fn argmax(&self) -> NliLabel {
        let mut best = NliLabel::Entailment;
        for label in [NliLabel::Neutral, NliLabel::Contradiction] {
            if self.get(label) > self.get(best) {
                best = label;
            }
        }
        best
    }
}

/// Posts, comments and pairs of one collection run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub posts: Vec<Post>,
    pub comments: Vec<Comment>,
    pub pairs: Vec<StancePair>,
    pub provenance: serde_json::Map<String, Value>,
}

pub const POSTS_FILE: &str = "posts.jsonl";
pub const COMMENTS_FILE: &str = "comments.jsonl";
pub const PAIRS_FILE: &str = "pairs.jsonl";
pub const PROVENANCE_FILE: &str = "provenance.json";

impl Corpus {
    /// Checks id uniqueness, nonempty titles, comment → post references and
    /// cached word counts.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut post_ids = HashSet::new();
        for post in &self.posts {
            if post.id.is_empty() {
                return Err(ModelError::Invalid("post with empty id".into()));
            }
            if post.title.trim().is_empty() {
                return Err(ModelError::Invalid(format!("post {} has an empty title", post.id)));
            }
            if !post_ids.insert(post.id.as_str()) {
                return Err(ModelError::Invalid(format!("duplicate post id {}", post.id)));
            }
        }
        let mut comment_ids = HashSet::new();
        for comment in &self.comments {
            if !post_ids.contains(comment.post_id.as_str()) {
                return Err(ModelError::Invalid(format!(
                    "comment {} references unknown post {}",
                    comment.id, comment.post_id
                )));
            }
            if !comment_ids.insert(comment.id.as_str()) {
                return Err(ModelError::Invalid(format!("duplicate comment id {}", comment.id)));
            }
        }
        validate_pairs(&self.pairs)
    }

    pub fn load(dir: &Path) -> Result<Corpus, ModelError> {
        let opt = |name: &str| {
            let p = dir.join(name);
            p.exists().then_some(p)
        };
        let posts = match opt(POSTS_FILE) {
            Some(p) => read_jsonl(&p)?,
            None => Vec::new(),
        };
        let comments = match opt(COMMENTS_FILE) {
            Some(p) => read_jsonl(&p)?,
            None => Vec::new(),
        };
        let pairs = match opt(PAIRS_FILE) {
            Some(p) => read_jsonl(&p)?,
            None => Vec::new(),
        };
        let provenance = match opt(PROVENANCE_FILE) {
            Some(p) => {
                let text = std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
                serde_json::from_str(&text)
                    .map_err(|e| ModelError::Json { path: p.display().to_string(), line: 1, source: e })?
            }
            None => serde_json::Map::new(),
        };
        let corpus = Corpus { posts, comments, pairs, provenance };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn save(&self, dir: &Path) -> Result<(), ModelError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        write_jsonl(&dir.join(POSTS_FILE), &self.posts)?;
        write_jsonl(&dir.join(COMMENTS_FILE), &self.comments)?;
        write_jsonl(&dir.join(PAIRS_FILE), &self.pairs)?;
        let path = dir.join(PROVENANCE_FILE);
        let text = serde_json::to_string_pretty(&self.provenance).expect("map serializes");
        std::fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))
    }
}

pub fn validate_pairs(pairs: &[StancePair]) -> Result<(), ModelError> {
    let mut ids = HashSet::new();
    for pair in pairs {
        if !ids.insert(pair.pair_id.as_str()) {
            return Err(ModelError::Invalid(format!("duplicate pair id {}", pair.pair_id)));
        }
        let expected = word_count(&pair.comment);
        if pair.comment_word_count != expected {
            return Err(ModelError::Invalid(format!(
                "pair {} caches comment_word_count {} but the comment has {expected} words",
                pair.pair_id, pair.comment_word_count
            )));
        }
    }
    Ok(())
}

fn io_err(path: &Path, source: std::io::Error) -> ModelError {
    ModelError::io(path, source)
}

impl ModelError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        ModelError::Io { path: path.display().to_string(), source }
    }
}

/// Reads one JSON value per nonblank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ModelError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|source| ModelError::Json {
            path: path.display().to_string(),
            line: idx + 1,
            source,
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), ModelError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut writer = BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record).expect("records serialize");
        writeln!(writer, "{line}").map_err(|e| io_err(path, e))?;
    }
    writer.flush().map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stance_nli_mapping_matches_alignment() {
        assert_eq!(map_stance_to_nli(StanceLabel::Favor), NliLabel::Entailment);
        assert_eq!(map_stance_to_nli(StanceLabel::Against), NliLabel::Contradiction);
        assert_eq!(map_stance_to_nli(StanceLabel::None), NliLabel::Neutral);
        assert_eq!(map_nli_to_stance(NliLabel::Entailment), StanceLabel::Favor);
        assert_eq!(map_nli_to_stance(NliLabel::Neutral), StanceLabel::None);
        assert_eq!(map_nli_to_stance(NliLabel::Contradiction), StanceLabel::Against);
        for label in StanceLabel::ALL {
            assert_eq!(map_nli_to_stance(map_stance_to_nli(label)), label);
        }
        for label in NliLabel::ALL {
            assert_eq!(map_stance_to_nli(map_nli_to_stance(label)), label);
        }
    }

    #[test]
    fn stance_label_wire_values_are_closed() {
        assert_eq!(serde_json::to_string(&StanceLabel::Favor).unwrap(), "\"Favor\"");
        assert!(serde_json::from_str::<StanceLabel>("\"FAVOUR\"").is_err());
        assert!("FAVOUR".parse::<StanceLabel>().is_err());
        assert_eq!("None".parse::<StanceLabel>(), Ok(StanceLabel::None));
    }

    #[test]
    fn claim_label_rejects_inconsistent_records() {
        let ok: ClaimLabel = serde_json::from_str(r#"{"has_claim":true,"claim_type":"Implicit"}"#).unwrap();
        assert_eq!(ok.pair_claim_type(), Some(PairClaimType::Implicit));
        assert!(serde_json::from_str::<ClaimLabel>(r#"{"has_claim":false,"claim_type":"Explicit"}"#).is_err());
        assert!(serde_json::from_str::<ClaimLabel>(r#"{"has_claim":true,"claim_type":"NoClaim"}"#).is_err());
    }

    #[test]
    fn nli_scores_must_be_a_distribution() {
        assert!(NliScores::new(0.7, 0.2, 0.1).is_ok());
        assert!(NliScores::new(0.7, 0.2, 0.2).is_err());
        assert!(NliScores::new(1.2, -0.1, -0.1).is_err());
        assert!(serde_json::from_str::<NliScores>(r#"{"entailment":0.5,"neutral":0.5,"contradiction":0.5}"#).is_err());
    }

    #[test]
    fn argmax_tie_break_enumeration() {
        // Every way to tie two or three classes at the top.
        let cases = [
            ((0.4, 0.4, 0.2), NliLabel::Entailment),
            ((0.4, 0.2, 0.4), NliLabel::Entailment),
            ((0.2, 0.4, 0.4), NliLabel::Neutral),
            ((0.25, 0.5, 0.25), NliLabel::Neutral),
            ((0.5, 0.0, 0.5), NliLabel::Entailment),
            ((1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0), NliLabel::Entailment),
        ];
        for ((e, n, c), want) in cases {
            assert_eq!(NliScores { entailment: e, neutral: n, contradiction: c }.argmax(), want);
        }
    }

    #[test]
    fn pair_word_count_is_cached() {
        let pair = StancePair::new("p1", "Title", "Didn't help, at all.", PairClaimType::Explicit);
        assert_eq!(pair.comment_word_count, 6);
        let mut bad = pair.clone();
        bad.comment_word_count = 2;
        assert!(validate_pairs(&[bad]).is_err());
        assert!(validate_pairs(&[pair.clone(), pair]).is_err());
    }
}
