//! Mining emerging opinions from health forums.
//!
//! The crate covers the whole offline pipeline: ingesting posts and comments,
//! an LLM-in-the-loop claim filter over post titles, stance detection for
//! (title, comment) pairs through chat, NLI and NLI+similarity backends,
//! evaluation with stratified diagnostics, and the bookkeeping behind the
//! human annotation stage.

pub mod annotation;
pub mod batch;
pub mod claims;
pub mod eval;
pub mod gateway;
pub mod ingest;
pub mod model;
pub mod stance;
pub mod synthetic;
pub mod text;

pub use model::{
    map_nli_to_stance, map_stance_to_nli, ClaimLabel, ClaimType, Comment, Corpus, NliLabel, NliScores,
    PairClaimType, Post, PostClaimLabel, StanceLabel, StancePair,
};
pub use text::word_count;
