//! Post and comment acquisition plus the curation filters.
//!
//! Two sources are supported: a local dump directory in the corpus JSONL
//! layout, and a generic paginated JSON listing served over HTTP
//! (`GET {base}/posts?limit=N&after=CURSOR` returning
//! `{"items": [...], "after": "next-cursor" | null}`, same for `/comments`).

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, NaiveDate, NaiveTime, TimeZone, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{ClaimLabel, Comment, Post, StancePair, COMMENTS_FILE, POSTS_FILE};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{url}: giving up after {attempts} attempt(s): {message}")]
    Transport { url: String, attempts: u32, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("missing claim label for post(s): {}", .0.join(", "))]
    MissingClaimLabels(Vec<String>),
}

pub const DELETED_SENTINELS: [&str; 2] = ["[deleted]", "[removed]"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestFilter {
    /// Accepted flairs. Empty disables flair filtering.
    pub flairs: BTreeSet<String>,
    /// Inclusive UTC window on `Post::created_at`.
    pub date_from: DateTime<Utc>,
    pub date_to: DateTime<Utc>,
    pub drop_bots: bool,
    pub drop_deleted: bool,
    pub drop_empty: bool,
    pub top_level_only: bool,
    /// Exact author names treated as bots, in addition to the `bot` suffix rule.
    pub bot_blocklist: BTreeSet<String>,
}

impl Default for IngestFilter {
    fn default() -> Self {
        IngestFilter {
            flairs: BTreeSet::new(),
            date_from: DateTime::<Utc>::MIN_UTC,
            date_to: DateTime::<Utc>::MAX_UTC,
            drop_bots: true,
            drop_deleted: true,
            drop_empty: true,
            top_level_only: true,
            bot_blocklist: BTreeSet::from(["AutoModerator".to_string()]),
        }
    }
}

impl IngestFilter {
    pub fn with_flairs<I, S>(mut self, flairs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.flairs = flairs.into_iter().map(Into::into).collect();
        self
    }

    /// Whole calendar days, `from` 00:00:00 through the last nanosecond of `to`.
    pub fn with_days(mut self, from: NaiveDate, to: NaiveDate) -> Self {
        self.date_from = Utc.from_utc_datetime(&from.and_time(NaiveTime::MIN));
        let end = to.and_hms_nano_opt(23, 59, 59, 999_999_999).expect("valid time");
        self.date_to = Utc.from_utc_datetime(&end);
        self
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.date_from > self.date_to {
            return Err(IngestError::InvalidFilter(format!(
                "date_from {} is after date_to {}",
                self.date_from, self.date_to
            )));
        }
        Ok(())
    }

    pub fn accepts_post(&self, post: &Post) -> bool {
        let in_window = post.created_at >= self.date_from && post.created_at <= self.date_to;
        let flair_ok = self.flairs.is_empty()
            || post.flair.as_ref().is_some_and(|f| self.flairs.contains(f));
        in_window && flair_ok
    }

    pub fn is_bot(&self, author: &str) -> bool {
        self.bot_blocklist.contains(author) || author.ends_with("bot") || author.ends_with("Bot")
    }

    pub fn accepts_comment(&self, comment: &Comment) -> bool {
        if self.top_level_only && !comment.is_top_level() {
            return false;
        }
        if self.drop_bots && self.is_bot(&comment.author) {
            return false;
        }
        if self.drop_deleted && is_deleted(comment) {
            return false;
        }
        !(self.drop_empty && comment.body.trim().is_empty())
    }
}

/// Either the body or the author carries a deletion sentinel.
pub fn is_deleted(comment: &Comment) -> bool {
    let body = comment.body.trim();
    let author = comment.author.trim();
    DELETED_SENTINELS.iter().any(|s| body == *s || author == *s)
}

pub fn filter_comments(comments: &[Comment], filter: &IngestFilter) -> Vec<Comment> {
    comments.iter().filter(|c| filter.accepts_comment(c)).cloned().collect()
}

/// A record that could not be parsed or failed validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    pub source: String,
    pub location: String,
    pub error: String,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fetched<T> {
    pub records: Vec<T>,
    pub rejects: Vec<Reject>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpListing {
    pub base_url: String,
    pub page_limit: usize,
    pub max_attempts: u32,
    pub backoff: Duration,
    pub timeout: Duration,
}

impl HttpListing {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpListing {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            page_limit: 100,
            max_attempts: 3,
            backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Http(HttpListing),
    Dump { posts: PathBuf, comments: Option<PathBuf> },
}

impl Source {
    /// `http(s)://…` selects the listing protocol; a directory selects its
    /// `posts.jsonl` / `comments.jsonl`; any other path is a posts file with an
    /// optional sibling `comments.jsonl`.
    pub fn parse(descriptor: &str) -> Source {
        if descriptor.starts_with("http://") || descriptor.starts_with("https://") {
            return Source::Http(HttpListing::new(descriptor));
        }
        let path = PathBuf::from(descriptor);
        let (posts, dir) = if path.is_dir() {
            (path.join(POSTS_FILE), path.clone())
        } else {
            let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (path, dir)
        };
        let comments = dir.join(COMMENTS_FILE);
        let comments = (comments.exists() && comments != posts).then_some(comments);
        Source::Dump { posts, comments }
    }
}

/// Posts passing `filter`, ordered by `(created_at, id)`.
pub fn fetch_posts(source: &Source, filter: &IngestFilter) -> Result<Fetched<Post>, IngestError> {
    filter.validate()?;
    let raw = match source {
        Source::Http(listing) => fetch_listing(listing, "posts")?,
        Source::Dump { posts, .. } => read_records(posts)?,
    };
    let Fetched { records, mut rejects } = decode::<Post>(raw, |p| {
        if p.id.is_empty() {
            Err("empty post id".to_string())
        } else if p.title.trim().is_empty() {
            Err(format!("post {} has an empty title", p.id))
        } else {
            Ok(())
        }
    });
    let mut seen = HashSet::new();
    let mut kept = Vec::new();
    for (post, location, raw) in records {
        if !seen.insert(post.id.clone()) {
            rejects.push(Reject { source: location.0, location: location.1, error: format!("duplicate post id {}", post.id), raw });
            continue;
        }
        if filter.accepts_post(&post) {
            kept.push(post);
        }
    }
    kept.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
    Ok(Fetched { records: kept, rejects })
}

/// Every comment the source has, unfiltered, ordered by `(created_at, id)`.
pub fn fetch_comments(source: &Source) -> Result<Fetched<Comment>, IngestError> {
    let raw = match source {
        Source::Http(listing) => fetch_listing(listing, "comments")?,
        Source::Dump { comments: Some(path), .. } => read_records(path)?,
        Source::Dump { comments: None, .. } => Vec::new(),
    };
    let Fetched { records, mut rejects } = decode::<Comment>(raw, |c| {
        if c.id.is_empty() {
            Err("empty comment id".to_string())
        } else {
            Ok(())
        }
    });
    let mut seen = HashSet::new();
    let mut kept = Vec::new();
    for (comment, location, raw) in records {
        if seen.insert(comment.id.clone()) {
            kept.push(comment);
        } else {
            rejects.push(Reject {
                source: location.0,
                location: location.1,
                error: format!("duplicate comment id {}", comment.id),
                raw,
            });
        }
    }
    kept.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
    Ok(Fetched { records: kept, rejects })
}

/// Drops comments whose post is not in `posts`.
pub fn comments_for_posts(comments: Vec<Comment>, posts: &[Post]) -> Vec<Comment> {
    let ids: HashSet<&str> = posts.iter().map(|p| p.id.as_str()).collect();
    comments.into_iter().filter(|c| ids.contains(c.post_id.as_str())).collect()
}

/// One pair per claim-bearing post and each of its top-level comments, in
/// post order then comment order.
pub fn build_pairs(
    posts: &[Post],
    comments: &[Comment],
    claim_labels: &BTreeMap<String, ClaimLabel>,
) -> Result<Vec<StancePair>, IngestError> {
    let missing: Vec<String> =
        posts.iter().filter(|p| !claim_labels.contains_key(&p.id)).map(|p| p.id.clone()).collect();
    if !missing.is_empty() {
        return Err(IngestError::MissingClaimLabels(missing));
    }
    let mut by_post: BTreeMap<&str, Vec<&Comment>> = BTreeMap::new();
    for comment in comments.iter().filter(|c| c.is_top_level()) {
        by_post.entry(comment.post_id.as_str()).or_default().push(comment);
    }
    let mut pairs = Vec::new();
    for post in posts {
        let Some(kind) = claim_labels[&post.id].pair_claim_type() else {
            continue;
        };
        for comment in by_post.get(post.id.as_str()).into_iter().flatten() {
            let mut pair =
                StancePair::new(format!("{}_{}", post.id, comment.id), post.title.clone(), comment.body.clone(), kind);
            pair.extra.insert("post_id".into(), Value::String(post.id.clone()));
            pairs.push(pair);
        }
    }
    Ok(pairs)
}

/// A seeded uniform sample of `n` pairs, kept in input order. Asking for at
/// least as many pairs as exist returns them all.
pub fn sample_pairs(pairs: &[StancePair], n: usize, seed: u64) -> Vec<StancePair> {
    use rand::SeedableRng;
    if n >= pairs.len() {
        return pairs.to_vec();
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, pairs.len(), n).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| pairs[i].clone()).collect()
}

type Located = (Value, (String, String), String);

fn read_records(path: &Path) -> Result<Vec<Result<Located, Reject>>, IngestError> {
    let io = |source| IngestError::Io { path: path.display().to_string(), source };
    let file = File::open(path).map_err(io)?;
    let src = path.display().to_string();
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let location = format!("line {}", idx + 1);
        out.push(match serde_json::from_str::<Value>(&line) {
            Ok(value) => Ok((value, (src.clone(), location), line)),
            Err(e) => Err(Reject { source: src.clone(), location, error: e.to_string(), raw: line }),
        });
    }
    Ok(out)
}

fn decode<T: DeserializeOwned>(
    raw: Vec<Result<Located, Reject>>,
    check: impl Fn(&T) -> Result<(), String>,
) -> Fetched<(T, (String, String), String)> {
    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for item in raw {
        match item {
            Err(reject) => rejects.push(reject),
            Ok((value, (source, location), raw)) => match serde_json::from_value::<T>(value) {
                Ok(record) => match check(&record) {
                    Ok(()) => records.push((record, (source, location), raw)),
                    Err(error) => rejects.push(Reject { source, location, error, raw }),
                },
                Err(e) => rejects.push(Reject { source, location, error: e.to_string(), raw }),
            },
        }
    }
    Fetched { records, rejects }
}

#[derive(Deserialize)]
struct Page {
    items: Vec<Value>,
    #[serde(default)]
    after: Option<String>,
}

fn fetch_listing(listing: &HttpListing, kind: &str) -> Result<Vec<Result<Located, Reject>>, IngestError> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(listing.timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let url = format!("{}/{kind}", listing.base_url);
    let mut out = Vec::new();
    let mut after: Option<String> = None;
    let mut page_no = 0usize;
    loop {
        let page = get_page(&agent, listing, &url, after.as_deref())?;
        for (idx, value) in page.items.into_iter().enumerate() {
            let raw = value.to_string();
            out.push(Ok((value, (url.clone(), format!("page {page_no} item {idx}")), raw)));
        }
        page_no += 1;
        match page.after {
            Some(cursor) if !cursor.is_empty() => after = Some(cursor),
            _ => break,
        }
    }
    Ok(out)
}

fn get_page(agent: &ureq::Agent, listing: &HttpListing, url: &str, after: Option<&str>) -> Result<Page, IngestError> {
    let mut last = String::new();
    for attempt in 1..=listing.max_attempts.max(1) {
        if attempt > 1 {
            std::thread::sleep(listing.backoff);
        }
        let mut request = agent.get(url).query("limit", listing.page_limit.to_string());
        if let Some(cursor) = after {
            request = request.query("after", cursor);
        }
        match request.call() {
            Ok(mut response) if response.status().is_success() => {
                let body = response.body_mut().read_to_string();
                match body.map_err(|e| e.to_string()).and_then(|b| serde_json::from_str::<Page>(&b).map_err(|e| e.to_string())) {
                    Ok(page) => return Ok(page),
                    Err(e) => last = format!("malformed page: {e}"),
                }
            }
            Ok(response) => last = format!("HTTP {}", response.status()),
            Err(e) => last = e.to_string(),
        }
    }
    Err(IngestError::Transport { url: url.to_string(), attempts: listing.max_attempts.max(1), message: last })
}
