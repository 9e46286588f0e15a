//! Seeded generator for a synthetic forum corpus shaped like the study's
//! curation funnel, together with a chat-model script that replays fixed
//! answers for every prompt the pipeline will send.
//!
//! Designed counts (see [`FunnelDesign`]): 202 in-window Research/Article
//! posts, 9 of which reuse the claim exemplar titles; 96 of the remaining
//! 193 are flagged as claims by the script, 74 of those survive review.
//! The flagged posts carry 742 top-level comments, 679 after dropping bot,
//! deleted and empty ones; 600 of those sit under reviewed claim posts.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::claims::ClaimAnnotation;
use crate::gateway::{
    build_claim_prompt, build_stance_prompt, ClaimExemplar, Exemplars, PromptError, PromptSpec, Script, StanceExemplar,
    Strategy, Task,
};
use crate::model::{write_jsonl, Comment, ModelError, PairClaimType, Post, StanceLabel};

pub const DEFAULT_SEED: u64 = 20230301;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunnelDesign {
    pub raw_posts: usize,
    pub filtered_posts: usize,
    pub exemplar_titles: usize,
    pub claim_inputs: usize,
    pub claim_positive: usize,
    pub claim_confirmed: usize,
    pub top_level_comments: usize,
    pub comments_after_filter: usize,
    pub pairs_available: usize,
}

pub const PAPER_FUNNEL: FunnelDesign = FunnelDesign {
    raw_posts: 255,
    filtered_posts: 202,
    exemplar_titles: 9,
    claim_inputs: 193,
    claim_positive: 96,
    claim_confirmed: 74,
    top_level_comments: 742,
    comments_after_filter: 679,
    pairs_available: 600,
};

const EXPLICIT_TITLES: usize = 45;
const FALSE_NEGATIVES: usize = 5;
const BOT_COMMENTS: usize = 21;
const DELETED_COMMENTS: usize = 24;
const EMPTY_COMMENTS: usize = 18;
const REPLIES: usize = 180;
const SIDE_COMMENTS: usize = 150;
const PARSE_FAILURES_PER_STRATEGY: usize = 3;

/// Exemplars the script must agree with; prompts embed them verbatim.
#[derive(Debug, Clone)]
pub struct ExemplarSet {
    pub claim: Vec<ClaimExemplar>,
    pub stance_few: Vec<StanceExemplar>,
    pub stance_cot: Vec<StanceExemplar>,
}

impl ExemplarSet {
    pub fn load(dir: &Path) -> Result<Self, ModelError> {
        Ok(ExemplarSet {
            claim: crate::model::read_jsonl(&dir.join("claim_fewshot.jsonl"))?,
            stance_few: crate::model::read_jsonl(&dir.join("stance_fewshot.jsonl"))?,
            stance_cot: crate::model::read_jsonl(&dir.join("stance_cot.jsonl"))?,
        })
    }

    pub fn claim_spec(&self, strategy: Strategy) -> Result<PromptSpec, PromptError> {
        match strategy {
            Strategy::ZeroShot => Ok(PromptSpec::claim_zero_shot()),
            _ => PromptSpec::new(Task::ClaimId, strategy, Exemplars::Claim(self.claim.clone())),
        }
    }

    pub fn stance_spec(&self, strategy: Strategy) -> Result<PromptSpec, PromptError> {
        match strategy {
            Strategy::ZeroShot => Ok(PromptSpec::stance_zero_shot()),
            Strategy::FewShot => PromptSpec::new(Task::Stance, strategy, Exemplars::Stance(self.stance_few.clone())),
            Strategy::ChainOfThought => PromptSpec::new(Task::Stance, strategy, Exemplars::Stance(self.stance_cot.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldStance {
    pub pair_id: String,
    pub gold_stance: StanceLabel,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub posts: Vec<Post>,
    pub comments: Vec<Comment>,
    pub claim_annotations: Vec<ClaimAnnotation>,
    pub stance_gold: Vec<GoldStance>,
    pub script: Script,
    pub design: FunnelDesign,
}

pub const POSTS_FILE: &str = "posts.jsonl";
pub const COMMENTS_FILE: &str = "comments.jsonl";
pub const CLAIMS_FILE: &str = "claims.jsonl";
pub const STANCE_GOLD_FILE: &str = "stance_gold.jsonl";
pub const SCRIPT_FILE: &str = "script.json";
pub const DESIGN_FILE: &str = "design.json";

impl SyntheticCorpus {
    /// Writes every generated file into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), ModelError> {
        std::fs::create_dir_all(dir).map_err(|e| ModelError::io(dir, e))?;
        write_jsonl(&dir.join(POSTS_FILE), &self.posts)?;
        write_jsonl(&dir.join(COMMENTS_FILE), &self.comments)?;
        write_jsonl(&dir.join(CLAIMS_FILE), &self.claim_annotations)?;
        write_jsonl(&dir.join(STANCE_GOLD_FILE), &self.stance_gold)?;
        for (name, value) in [
            (SCRIPT_FILE, serde_json::to_string_pretty(&self.script)),
            (DESIGN_FILE, serde_json::to_string_pretty(&self.design)),
        ] {
            let path = dir.join(name);
            let mut text = value.expect("serializable");
            text.push('\n');
            std::fs::write(&path, text).map_err(|e| ModelError::io(&path, e))?;
        }
        Ok(())
    }
}

const TREATMENTS: &[&str] = &[
    "low dose naltrexone",
    "nicotine patches",
    "paxlovid",
    "metformin",
    "acyclovir",
    "famotidine",
    "nattokinase",
    "stellate ganglion block",
    "hyperbaric oxygen",
    "ivabradine",
    "vitamin d",
    "fluvoxamine",
    "maraviroc",
    "guanfacine",
    "coq10",
    "quercetin",
    "melatonin",
    "plasma exchange",
    "antihistamines",
    "pacing",
];

const SYMPTOMS: &[&str] = &[
    "brain fog",
    "fatigue",
    "post exertional malaise",
    "pots",
    "tinnitus",
    "insomnia",
    "shortness of breath",
    "heart palpitations",
    "loss of smell",
    "joint pain",
    "headaches",
    "chest pain",
    "hair loss",
    "neuropathy",
    "memory problems",
];

const EFFECTS: &[&str] = &["reduces", "improves", "worsens", "relieves", "prevents", "eases", "shortens", "triggers"];

const EXPLICIT_FRAMES: &[&str] = &[
    "New study: {claim} in long covid patients",
    "Trial finds {claim}",
    "Researchers report {claim} after six weeks",
    "Preprint suggests {claim}",
    "Case series: {claim} in most participants",
    "Small cohort shows {claim}",
];

const IMPLICIT_FRAMES: &[&str] = &[
    "{treatment} and {symptom}: what the latest trial found",
    "Patients on {treatment} describe changes in their {symptom}",
    "A closer look at {treatment} for {symptom}",
    "Doctors revisit {treatment} as {symptom} cases climb",
    "The quiet success of {treatment} against {symptom}",
];

const NO_CLAIM_FRAMES: &[&str] = &[
    "Anyone tried {treatment} for {symptom}?",
    "Where can I find a doctor who prescribes {treatment}?",
    "Survey on {symptom} for an upcoming study",
    "Funding announced for {symptom} research centre",
    "Interview with a researcher studying {symptom}",
    "List of ongoing trials involving {treatment}",
    "Podcast episode about {symptom} and {treatment}",
];

const FALSE_POSITIVE_FRAMES: &[&str] = &[
    "Registry opens enrolment for {treatment} and {symptom} study",
    "Conference recap: sessions on {treatment} and {symptom}",
    "Review of open questions about {treatment} and {symptom}",
];

const OTHER_FLAIRS: &[&str] = &["Question", "Vent", "Support", "Symptoms", "Success Story"];

const SENTENCES: &[&str] = &[
    "I started this about two months ago and kept a daily log.",
    "My doctor was hesitant at first but agreed to a short trial.",
    "The first week was rough and I almost quit.",
    "By the third week I could walk to the mailbox again.",
    "Honestly it did nothing for me and I gave it a fair shot.",
    "My partner noticed the difference before I did.",
    "I think the sample size here is tiny so take it with a grain of salt.",
    "This matches what my specialist told me last month.",
    "I am a nurse and we see this pattern a lot in clinic.",
    "It helped my sleep but the headaches stayed the same.",
    "Has anyone found a dose that works without side effects?",
    "I wish the article linked the actual paper.",
    "Crashes still come but they are shorter now.",
    "It made my heart rate worse so I stopped.",
    "Two years in and this is the first thing that moved the needle.",
    "The study only followed people for a few weeks.",
    "I read the whole paper and the methods look solid.",
    "Mixed results for me, some good days and some terrible ones.",
    "Insurance would not cover it so I paid out of pocket.",
    "Please be careful and talk to your doctor before trying this.",
    "My symptoms came back as soon as I finished the course.",
    "We need bigger trials before anyone gets excited.",
    "This is the kind of research we have been begging for.",
    "I tried it alongside pacing and cannot say which one helped.",
    "Nothing in this thread surprises me anymore.",
    "Same experience here, slow but steady improvement.",
    "Thanks for posting, saving this for my next appointment.",
    "The headline oversells what the researchers actually found.",
];

const REASONS: &[&str] = &[
    "The commenter describes a personal experience that lines up with the title.",
    "The commenter reports that the treatment had no effect for them.",
    "The comment shares an unrelated story and takes no position on the title.",
    "The commenter questions the evidence behind the title.",
    "The comment supports the finding with a similar outcome.",
];

const UNPARSEABLE: &[&str] = &["I cannot tell from this comment.", "It is unclear what the commenter thinks.", "Hard to say."];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Exemplar,
    TruePositive(PairClaimType),
    FalsePositive,
    FalseNegative,
    TrueNegative,
}

struct Gen {
    rng: ChaCha8Rng,
    used_titles: BTreeSet<String>,
    next_author: usize,
}

impl Gen {
    fn pick<'a>(&mut self, items: &'a [&'a str]) -> &'a str {
        items.choose(&mut self.rng).expect("nonempty")
    }

    fn claim_parts(&mut self) -> (String, String, String) {
        let t = self.pick(TREATMENTS).to_string();
        let e = self.pick(EFFECTS).to_string();
        let s = self.pick(SYMPTOMS).to_string();
        (t, e, s)
    }

    fn unique(&mut self, make: &mut dyn FnMut(&mut Gen) -> (String, Option<String>)) -> (String, Option<String>) {
        loop {
            let (title, claim) = make(self);
            if self.used_titles.insert(title.to_lowercase()) {
                return (title, claim);
            }
        }
    }

    fn title(&mut self, role: Role) -> (String, Option<String>) {
        self.unique(&mut |g: &mut Gen| {
            let (t, e, s) = g.claim_parts();
            let fill = |frame: &str| capitalize(&frame.replace("{treatment}", &t).replace("{symptom}", &s));
            match role {
                Role::TruePositive(PairClaimType::Explicit) | Role::FalseNegative => {
                    let claim = format!("{t} {e} {s}");
                    let frame = g.pick(EXPLICIT_FRAMES);
                    (capitalize(&frame.replace("{claim}", &claim)), Some(claim))
                }
                Role::TruePositive(PairClaimType::Implicit) => {
                    let frame = g.pick(IMPLICIT_FRAMES);
                    (fill(frame), Some(format!("{t} {e} {s} in long covid")))
                }
                Role::FalsePositive => (fill(g.pick(FALSE_POSITIVE_FRAMES)), None),
                Role::TrueNegative => (fill(g.pick(NO_CLAIM_FRAMES)), None),
                Role::Exemplar => unreachable!("exemplar titles are fixed"),
            }
        })
    }

    fn author(&mut self) -> String {
        self.next_author += 1;
        format!("u{:04}_lc", self.next_author % 700)
    }

    fn body(&mut self) -> String {
        let roll: f64 = self.rng.random();
        let target = if roll < 0.55 {
            self.rng.random_range(3..50)
        } else if roll < 0.85 {
            self.rng.random_range(50..100)
        } else {
            self.rng.random_range(100..240)
        };
        let mut body = String::new();
        while crate::text::word_count(&body) < target {
            if !body.is_empty() {
                body.push(' ');
            }
            body.push_str(self.pick(SENTENCES));
        }
        body
    }

    fn time_in(&mut self, start: DateTime<Utc>, span_secs: i64) -> DateTime<Utc> {
        start + Duration::seconds(self.rng.random_range(0..span_secs))
    }

    /// `total` split over `parts` buckets, each at least one, skewed so a
    /// few buckets are large.
    fn skewed_split(&mut self, total: usize, parts: usize) -> Vec<usize> {
        let weights: Vec<f64> = (0..parts).map(|_| (-self.rng.random::<f64>().max(1e-9).ln()).powf(1.6)).collect();
        let mut counts = vec![1usize; parts];
        let sum: f64 = weights.iter().sum();
        let mut left = total - parts;
        let cumulative: Vec<f64> = weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w / sum;
                Some(*acc)
            })
            .collect();
        while left > 0 {
            let x: f64 = self.rng.random();
            let i = cumulative.iter().position(|c| x < *c).unwrap_or(parts - 1);
            counts[i] += 1;
            left -= 1;
        }
        counts
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn noisy(rng: &mut ChaCha8Rng, gold: StanceLabel, accuracy: f64) -> StanceLabel {
    if rng.random::<f64>() < accuracy {
        gold
    } else {
        let others: Vec<StanceLabel> = StanceLabel::ALL.into_iter().filter(|l| *l != gold).collect();
        *others.choose(rng).expect("two others")
    }
}

fn zero_shot_reply(rng: &mut ChaCha8Rng, label: StanceLabel) -> String {
    let token = label.prompt_token();
    match rng.random_range(0..4) {
        0 => token.to_string(),
        1 => format!("{token}."),
        2 => format!("The comment is {token} as it relates to the post title."),
        _ => format!("Answer: {token}"),
    }
}

pub fn generate(seed: u64, exemplars: &ExemplarSet) -> Result<SyntheticCorpus, PromptError> {
    let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(seed), used_titles: BTreeSet::new(), next_author: 0 };
    let march = Utc.with_ymd_and_hms(2023, 3, 1, 0, 0, 0).unwrap();
    let month = 31 * 24 * 3600;
    let d = PAPER_FUNNEL;

    for e in &exemplars.claim {
        g.used_titles.insert(e.input.to_lowercase());
    }

    let generated = d.claim_inputs;
    let negatives = generated - d.claim_positive;
    let mut roles: Vec<Role> = Vec::with_capacity(generated);
    roles.extend((0..EXPLICIT_TITLES).map(|_| Role::TruePositive(PairClaimType::Explicit)));
    roles.extend((EXPLICIT_TITLES..d.claim_confirmed).map(|_| Role::TruePositive(PairClaimType::Implicit)));
    roles.extend((d.claim_confirmed..d.claim_positive).map(|_| Role::FalsePositive));
    roles.extend((0..FALSE_NEGATIVES).map(|_| Role::FalseNegative));
    roles.extend((FALSE_NEGATIVES..negatives).map(|_| Role::TrueNegative));
    roles.shuffle(&mut g.rng);

    struct Draft {
        role: Role,
        title: String,
        claim_text: Option<String>,
        flair: Option<String>,
        created_at: DateTime<Utc>,
    }
    let mut drafts: Vec<Draft> = Vec::new();
    for e in &exemplars.claim {
        let flair = if g.rng.random_bool(0.5) { "Research" } else { "Article" };
        let created_at = g.time_in(march, month);
        drafts.push(Draft { role: Role::Exemplar, title: e.input.clone(), claim_text: None, flair: Some(flair.into()), created_at });
    }
    for role in roles {
        let (title, claim_text) = g.title(role);
        let flair = if g.rng.random_bool(0.5) { "Research" } else { "Article" };
        let created_at = g.time_in(march, month);
        drafts.push(Draft { role, title, claim_text, flair: Some(flair.into()), created_at });
    }
    let in_window = drafts.len();
    // Posts that the ingest filter must drop.
    for i in 0..(d.raw_posts - in_window) {
        let (title, _) = g.title(Role::TrueNegative);
        let (flair, created_at) = match i % 5 {
            0 => (Some(g.pick(&["Research", "Article"]).to_string()), g.time_in(march - Duration::days(14), 13 * 86400)),
            1 => (Some("Research".to_string()), g.time_in(march + Duration::days(31), 10 * 86400)),
            2 => (None, g.time_in(march, month)),
            _ => (Some(g.pick(OTHER_FLAIRS).to_string()), g.time_in(march, month)),
        };
        drafts.push(Draft { role: Role::TrueNegative, title, claim_text: None, flair, created_at });
    }
    drafts.shuffle(&mut g.rng);

    let mut posts = Vec::new();
    let mut roles_by_post = BTreeMap::new();
    let mut claim_annotations = Vec::new();
    for (i, draft) in drafts.into_iter().enumerate() {
        let id = format!("p{:04}", i + 1);
        let counted = draft.flair.as_deref().is_some_and(|f| f == "Research" || f == "Article")
            && draft.created_at >= march
            && draft.created_at < march + Duration::days(31);
        if counted {
            roles_by_post.insert(id.clone(), draft.role);
            match draft.role {
                Role::Exemplar => {}
                Role::TruePositive(_) | Role::FalseNegative => claim_annotations.push(ClaimAnnotation {
                    post_id: id.clone(),
                    has_claim: Some(true),
                    claim_text: draft.claim_text.clone(),
                    claim_type: None,
                }),
                Role::FalsePositive | Role::TrueNegative => claim_annotations.push(ClaimAnnotation {
                    post_id: id.clone(),
                    has_claim: Some(false),
                    claim_text: None,
                    claim_type: None,
                }),
            }
        }
        posts.push(Post {
            id,
            title: draft.title,
            flair: draft.flair,
            created_at: draft.created_at,
            author: g.author(),
            body: String::new(),
            source_url: None,
            extra: Default::default(),
        });
    }
    posts.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));

    let ids_with = |want: &dyn Fn(Role) -> bool| -> Vec<String> {
        posts.iter().filter(|p| roles_by_post.get(&p.id).is_some_and(|r| want(*r))).map(|p| p.id.clone()).collect()
    };
    let tp_ids = ids_with(&|r| matches!(r, Role::TruePositive(_)));
    let fp_ids = ids_with(&|r| r == Role::FalsePositive);
    let flagged: Vec<String> = ids_with(&|r| matches!(r, Role::TruePositive(_) | Role::FalsePositive));
    let unflagged = ids_with(&|r| matches!(r, Role::FalseNegative | Role::TrueNegative));
    let created: BTreeMap<String, DateTime<Utc>> = posts.iter().map(|p| (p.id.clone(), p.created_at)).collect();

    // Top-level comments under flagged posts.
    let mut slots: Vec<(String, Kind)> = Vec::new();
    for (ids, total) in [(&tp_ids, d.pairs_available), (&fp_ids, d.comments_after_filter - d.pairs_available)] {
        let split = g.skewed_split(total, ids.len());
        for (id, n) in ids.iter().zip(split) {
            slots.extend((0..n).map(|_| (id.clone(), Kind::Valid)));
        }
    }
    for (kind, n) in [(Kind::Bot, BOT_COMMENTS), (Kind::Deleted, DELETED_COMMENTS), (Kind::Empty, EMPTY_COMMENTS)] {
        for _ in 0..n {
            let id = flagged.choose(&mut g.rng).expect("flagged posts").clone();
            slots.push((id, kind));
        }
    }
    // Comments the funnel never sees: under unflagged posts, and replies.
    for _ in 0..SIDE_COMMENTS {
        let id = unflagged.choose(&mut g.rng).expect("unflagged posts").clone();
        slots.push((id, Kind::Valid));
    }
    slots.sort_by(|a, b| a.0.cmp(&b.0));

    let mut comments = Vec::new();
    let mut bodies: BTreeSet<(String, String)> = BTreeSet::new();
    for (post_id, kind) in slots {
        let created_at = created[&post_id] + Duration::seconds(g.rng.random_range(60..3 * 86400));
        let (author, body) = match kind {
            Kind::Valid => {
                // Distinct bodies per post keep every prompt distinct.
                let body = loop {
                    let body = g.body();
                    if bodies.insert((post_id.clone(), body.clone())) {
                        break body;
                    }
                };
                (g.author(), body)
            }
            Kind::Bot => {
                let name = g.pick(&["AutoModerator", "RemindMeBot", "sneakpeekbot", "covid_facts_bot"]).to_string();
                (name, "This is an automated message. Please read the community rules before posting.".to_string())
            }
            Kind::Deleted => {
                if g.rng.random_bool(0.5) {
                    ("[deleted]".to_string(), "[deleted]".to_string())
                } else {
                    (g.author(), "[removed]".to_string())
                }
            }
            Kind::Empty => (g.author(), if g.rng.random_bool(0.5) { String::new() } else { "   ".to_string() }),
        };
        comments.push(Comment {
            id: String::new(),
            post_id,
            parent_id: None,
            author,
            body,
            created_at,
            extra: Default::default(),
        });
    }
    comments.sort_by(|a, b| (&a.post_id, a.created_at).cmp(&(&b.post_id, b.created_at)));
    for (i, c) in comments.iter_mut().enumerate() {
        c.id = format!("c{:05}", i + 1);
    }
    let top_level = comments.len();
    for i in 0..REPLIES {
        let parent = comments[g.rng.random_range(0..top_level)].clone();
        let reply_body = if i % 9 == 0 { "[deleted]".to_string() } else { g.body() };
        comments.push(Comment {
            id: format!("r{:05}", i + 1),
            post_id: parent.post_id.clone(),
            parent_id: Some(parent.id.clone()),
            author: g.author(),
            body: reply_body,
            created_at: parent.created_at + Duration::seconds(g.rng.random_range(60..86400)),
            extra: Default::default(),
        });
    }

    // Script: claim replies for every generated title, both strategies.
    let mut script = Script::default();
    let titles: BTreeMap<&str, &str> = posts.iter().map(|p| (p.id.as_str(), p.title.as_str())).collect();
    for strategy in [Strategy::ZeroShot, Strategy::FewShot] {
        let spec = exemplars.claim_spec(strategy)?;
        for (id, role) in &roles_by_post {
            let says_yes = match role {
                Role::Exemplar => continue,
                Role::TruePositive(_) | Role::FalsePositive => true,
                Role::FalseNegative | Role::TrueNegative => false,
            };
            // The zero-shot script is noisier; only few-shot drives the funnel.
            let says_yes = if strategy == Strategy::ZeroShot && g.rng.random_bool(0.15) { !says_yes } else { says_yes };
            let reply = match (says_yes, g.rng.random_range(0..3)) {
                (true, 0) => "Yes",
                (true, 1) => "Yes.",
                (true, _) => "Claim: Yes",
                (false, 0) => "No",
                (false, 1) => "No.",
                (false, _) => "No, this is a question or general information.",
            };
            script.insert(&build_claim_prompt(&spec, titles[id.as_str()])?, reply);
        }
    }

    // Gold stance and scripted stance replies for every pair under a
    // reviewed claim post.
    let filter = crate::ingest::IngestFilter::default();
    let tp_set: BTreeSet<&str> = tp_ids.iter().map(String::as_str).collect();
    let pair_comments: Vec<&Comment> = comments
        .iter()
        .filter(|c| tp_set.contains(c.post_id.as_str()) && filter.accepts_comment(c))
        .collect();
    let specs = [
        (Strategy::ZeroShot, exemplars.stance_spec(Strategy::ZeroShot)?, 0.55),
        (Strategy::FewShot, exemplars.stance_spec(Strategy::FewShot)?, 0.62),
        (Strategy::ChainOfThought, exemplars.stance_spec(Strategy::ChainOfThought)?, 0.70),
    ];
    let failures: Vec<BTreeSet<usize>> = specs
        .iter()
        .map(|_| {
            rand::seq::index::sample(&mut g.rng, pair_comments.len(), PARSE_FAILURES_PER_STRATEGY).into_iter().collect()
        })
        .collect();
    let mut stance_gold = Vec::new();
    for (i, c) in pair_comments.iter().enumerate() {
        let roll: f64 = g.rng.random();
        let gold = if roll < 0.28 {
            StanceLabel::Against
        } else if roll < 0.72 {
            StanceLabel::Favor
        } else {
            StanceLabel::None
        };
        stance_gold.push(GoldStance { pair_id: format!("{}_{}", c.post_id, c.id), gold_stance: gold });
        for ((strategy, spec, accuracy), fail) in specs.iter().zip(&failures) {
            let predicted = noisy(&mut g.rng, gold, *accuracy);
            let reply = if fail.contains(&i) {
                g.pick(UNPARSEABLE).to_string()
            } else {
                match strategy {
                    Strategy::ZeroShot => zero_shot_reply(&mut g.rng, predicted),
                    Strategy::FewShot => predicted.as_str().to_string(),
                    Strategy::ChainOfThought => format!("Reason: {}\nStance: {}", g.pick(REASONS), predicted.as_str()),
                }
            };
            script.insert(&build_stance_prompt(spec, titles[c.post_id.as_str()], &c.body)?, reply);
        }
    }

    Ok(SyntheticCorpus { posts, comments, claim_annotations, stance_gold, script, design: d })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Valid,
    Bot,
    Deleted,
    Empty,
}
