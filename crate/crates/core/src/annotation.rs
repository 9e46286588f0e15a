//! Annotation task queue, label resolution and agreement statistics.
//!
//! Every state change is appended to a JSONL event log and synced to disk
//! before the call returns, so replaying the log restores every
//! acknowledged label. Lease and submit run under one lock and are atomic
//! with respect to each other.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{StanceLabel, StancePair};

pub const DEFAULT_LEASE_TTL_SECS: i64 = 600;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("annotator id is empty")]
    EmptyAnnotator,
    #[error("unknown pair {0:?}")]
    NotFound(String),
    #[error("{annotator} holds no lease on {pair_id}")]
    NoLease { pair_id: String, annotator: String },
    #[error("cannot vote over an empty label list")]
    EmptyVote,
    #[error("min_labels must be at least 1")]
    MinLabels,
    #[error("event log {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("event log {path} line {line}: {message}")]
    CorruptLog { path: String, line: usize, message: String },
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// A clock that only moves when told to.
pub struct ManualClock(Mutex<DateTime<Utc>>);

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        ManualClock(Mutex::new(start))
    }

    pub fn advance(&self, by: Duration) {
        *self.0.lock().unwrap() += by;
    }

    pub fn set(&self, to: DateTime<Utc>) {
        *self.0.lock().unwrap() = to;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskStatus {
    Open,
    Leased,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lease {
    pub annotator: String,
    pub expires_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub pair_id: String,
    pub title: String,
    pub comment: String,
    pub status: TaskStatus,
    pub lease: Option<Lease>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub pair_id: String,
    pub annotator: String,
    pub label: StanceLabel,
    pub recorded_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubmitOutcome {
    Recorded,
    Unchanged,
    Replaced,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    Task { pair: StancePair },
    Lease { pair_id: String, annotator: String, expires_at: DateTime<Utc> },
    Label { record: LabelRecord },
    Replace { previous: LabelRecord, record: LabelRecord },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueConfig {
    pub min_labels: usize,
    pub lease_ttl: Duration,
}

impl Default for QueueConfig {
    fn default() -> Self {
        QueueConfig { min_labels: 1, lease_ttl: Duration::seconds(DEFAULT_LEASE_TTL_SECS) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Progress {
    pub open: usize,
    pub leased: usize,
    pub done: usize,
}

struct TaskState {
    pair: StancePair,
    lease: Option<Lease>,
    labels: BTreeMap<String, LabelRecord>,
}

struct State {
    tasks: Vec<TaskState>,
    index: HashMap<String, usize>,
    log: Option<(PathBuf, File)>,
}

impl State {
    fn apply(&mut self, event: Event) {
        match event {
            Event::Task { pair } => {
                if !self.index.contains_key(&pair.pair_id) {
                    self.index.insert(pair.pair_id.clone(), self.tasks.len());
                    self.tasks.push(TaskState { pair, lease: None, labels: BTreeMap::new() });
                }
            }
            Event::Lease { pair_id, annotator, expires_at } => {
                if let Some(&i) = self.index.get(&pair_id) {
                    self.tasks[i].lease = Some(Lease { annotator, expires_at });
                }
            }
            Event::Label { record } | Event::Replace { record, .. } => {
                if let Some(&i) = self.index.get(&record.pair_id) {
                    let task = &mut self.tasks[i];
                    if task.lease.as_ref().is_some_and(|l| l.annotator == record.annotator) {
                        task.lease = None;
                    }
                    task.labels.insert(record.annotator.clone(), record);
                }
            }
        }
    }

    fn persist(&mut self, events: &[Event]) -> Result<(), AnnotationError> {
        if let Some((path, file)) = self.log.as_mut() {
            let io = |source| AnnotationError::Io { path: path.display().to_string(), source };
            let mut buf = String::new();
            for e in events {
                buf.push_str(&serde_json::to_string(e).expect("event serializes"));
                buf.push('\n');
            }
            file.write_all(buf.as_bytes()).map_err(io)?;
            file.sync_data().map_err(io)?;
        }
        Ok(())
    }

    fn commit(&mut self, events: Vec<Event>) -> Result<(), AnnotationError> {
        self.persist(&events)?;
        for e in events {
            self.apply(e);
        }
        Ok(())
    }
}

pub struct TaskQueue {
    state: Mutex<State>,
    config: QueueConfig,
    clock: Arc<dyn Clock>,
}

impl TaskQueue {
    pub fn in_memory(pairs: &[StancePair], config: QueueConfig, clock: Arc<dyn Clock>) -> Result<Self, AnnotationError> {
        Self::build(None, pairs, config, clock)
    }

    /// Replays `log` (created if missing), then registers any of `pairs` the
    /// log does not already know.
    pub fn open(log: &Path, pairs: &[StancePair], config: QueueConfig, clock: Arc<dyn Clock>) -> Result<Self, AnnotationError> {
        Self::build(Some(log), pairs, config, clock)
    }

    fn build(log: Option<&Path>, pairs: &[StancePair], config: QueueConfig, clock: Arc<dyn Clock>) -> Result<Self, AnnotationError> {
        if config.min_labels == 0 {
            return Err(AnnotationError::MinLabels);
        }
        let mut state = State { tasks: Vec::new(), index: HashMap::new(), log: None };
        if let Some(path) = log {
            let (events, intact) = replay(path)?;
            for event in events {
                state.apply(event);
            }
            state.log = Some((path.to_path_buf(), open_for_append(path, intact)?));
        }
        let fresh: Vec<Event> = pairs
            .iter()
            .filter(|p| !state.index.contains_key(&p.pair_id))
            .map(|p| Event::Task { pair: p.clone() })
            .collect();
        state.commit(fresh)?;
        Ok(TaskQueue { state: Mutex::new(state), config, clock })
    }

    pub fn config(&self) -> QueueConfig {
        self.config
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn status(&self, task: &TaskState, now: DateTime<Utc>) -> TaskStatus {
        if task.labels.len() >= self.config.min_labels {
            TaskStatus::Done
        } else if task.lease.as_ref().is_some_and(|l| l.expires_at > now) {
            TaskStatus::Leased
        } else {
            TaskStatus::Open
        }
    }

    fn view(&self, task: &TaskState, now: DateTime<Utc>) -> AnnotationTask {
        let status = self.status(task, now);
        AnnotationTask {
            pair_id: task.pair.pair_id.clone(),
            title: task.pair.title.clone(),
            comment: task.pair.comment.clone(),
            status,
            lease: if status == TaskStatus::Leased { task.lease.clone() } else { None },
        }
    }

    /// Leases the first open task this annotator has not labeled. An
    /// annotator already holding a live lease gets that task back.
    pub fn lease_next(&self, annotator: &str) -> Result<Option<AnnotationTask>, AnnotationError> {
        if annotator.trim().is_empty() {
            return Err(AnnotationError::EmptyAnnotator);
        }
        let mut state = self.lock();
        let now = self.clock.now();
        let held = state.tasks.iter().position(|t| {
            self.status(t, now) == TaskStatus::Leased && t.lease.as_ref().is_some_and(|l| l.annotator == annotator)
        });
        let pick = held.or_else(|| {
            state
                .tasks
                .iter()
                .position(|t| self.status(t, now) == TaskStatus::Open && !t.labels.contains_key(annotator))
        });
        let Some(i) = pick else {
            return Ok(None);
        };
        if held.is_none() {
            let event = Event::Lease {
                pair_id: state.tasks[i].pair.pair_id.clone(),
                annotator: annotator.to_string(),
                expires_at: now + self.config.lease_ttl,
            };
            state.commit(vec![event])?;
        }
        Ok(Some(self.view(&state.tasks[i], now)))
    }

    /// Records a label. The annotator must hold a live lease on the pair or
    /// be revising a label they already gave.
    pub fn submit(&self, pair_id: &str, annotator: &str, label: StanceLabel) -> Result<SubmitOutcome, AnnotationError> {
        if annotator.trim().is_empty() {
            return Err(AnnotationError::EmptyAnnotator);
        }
        let mut state = self.lock();
        let now = self.clock.now();
        let &i = state.index.get(pair_id).ok_or_else(|| AnnotationError::NotFound(pair_id.to_string()))?;
        let task = &state.tasks[i];
        let record = LabelRecord { pair_id: pair_id.to_string(), annotator: annotator.to_string(), label, recorded_at: now };
        let (event, outcome) = match task.labels.get(annotator) {
            Some(previous) if previous.label == label => return Ok(SubmitOutcome::Unchanged),
            Some(previous) => (Event::Replace { previous: previous.clone(), record }, SubmitOutcome::Replaced),
            None => {
                let leased = task.lease.as_ref().is_some_and(|l| l.annotator == annotator && l.expires_at > now);
                if !leased {
                    return Err(AnnotationError::NoLease { pair_id: pair_id.to_string(), annotator: annotator.to_string() });
                }
                (Event::Label { record }, SubmitOutcome::Recorded)
            }
        };
        state.commit(vec![event])?;
        Ok(outcome)
    }

    pub fn task(&self, pair_id: &str) -> Option<AnnotationTask> {
        let state = self.lock();
        let now = self.clock.now();
        state.index.get(pair_id).map(|&i| self.view(&state.tasks[i], now))
    }

    pub fn labels(&self, pair_id: &str) -> Vec<LabelRecord> {
        let state = self.lock();
        state.index.get(pair_id).map(|&i| state.tasks[i].labels.values().cloned().collect()).unwrap_or_default()
    }

    pub fn labels_by_pair(&self) -> BTreeMap<String, Vec<StanceLabel>> {
        self.lock()
            .tasks
            .iter()
            .filter(|t| !t.labels.is_empty())
            .map(|t| (t.pair.pair_id.clone(), t.labels.values().map(|r| r.label).collect()))
            .collect()
    }

    pub fn progress(&self) -> Progress {
        let state = self.lock();
        let now = self.clock.now();
        let mut p = Progress::default();
        for t in &state.tasks {
            match self.status(t, now) {
                TaskStatus::Open => p.open += 1,
                TaskStatus::Leased => p.leased += 1,
                TaskStatus::Done => p.done += 1,
            }
        }
        p
    }

    /// Gold labels supplied with the task pairs, used for vote-vs-gold error.
    pub fn gold(&self) -> BTreeMap<String, StanceLabel> {
        self.lock().tasks.iter().filter_map(|t| t.pair.gold_stance.map(|g| (t.pair.pair_id.clone(), g))).collect()
    }

    pub fn agreement(&self) -> AgreementStats {
        let gold = self.gold();
        agreement_stats(&self.labels_by_pair(), if gold.is_empty() { None } else { Some(&gold) })
    }

    /// Finished tasks whose labels have no strict majority.
    pub fn adjudication(&self) -> Vec<AdjudicationItem> {
        let state = self.lock();
        let now = self.clock.now();
        state
            .tasks
            .iter()
            .filter(|t| self.status(t, now) == TaskStatus::Done)
            .filter_map(|t| {
                let labels: Vec<LabelRecord> = t.labels.values().cloned().collect();
                let vote = majority_vote(&labels.iter().map(|r| r.label).collect::<Vec<_>>()).ok()?;
                (vote == Vote::Tie).then(|| AdjudicationItem {
                    pair_id: t.pair.pair_id.clone(),
                    title: t.pair.title.clone(),
                    comment: t.pair.comment.clone(),
                    labels,
                })
            })
            .collect()
    }

    /// All pairs with `gold_stance` set to the majority vote of finished
    /// tasks; ties and unfinished tasks export `null`.
    pub fn export(&self) -> Vec<StancePair> {
        let state = self.lock();
        let now = self.clock.now();
        state
            .tasks
            .iter()
            .map(|t| {
                let mut pair = t.pair.clone();
                pair.gold_stance = None;
                if self.status(t, now) == TaskStatus::Done {
                    let labels: Vec<StanceLabel> = t.labels.values().map(|r| r.label).collect();
                    if let Ok(Vote::Label(l)) = majority_vote(&labels) {
                        pair.gold_stance = Some(l);
                    }
                }
                pair
            })
            .collect()
    }
}

/// Events in the log, plus the byte length of its intact prefix. A torn
/// final line is a write that was never acknowledged and is dropped.
fn replay(path: &Path) -> Result<(Vec<Event>, u64), AnnotationError> {
    let io = |source| AnnotationError::Io { path: path.display().to_string(), source };
    if !path.exists() {
        return Ok((Vec::new(), 0));
    }
    let text = std::fs::read_to_string(path).map_err(io)?;
    let mut events = Vec::new();
    let mut offset = 0usize;
    let mut intact = 0usize;
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    for (n, line) in lines.iter().enumerate() {
        offset += line.len();
        let body = line.trim();
        if body.is_empty() {
            intact = offset;
            continue;
        }
        match serde_json::from_str::<Event>(body) {
            Ok(e) if line.ends_with('\n') => {
                events.push(e);
                intact = offset;
            }
            Ok(_) | Err(_) if n + 1 == lines.len() => {}
            Ok(_) => unreachable!("only the last line can lack a newline"),
            Err(e) => {
                return Err(AnnotationError::CorruptLog { path: path.display().to_string(), line: n + 1, message: e.to_string() })
            }
        }
    }
    Ok((events, intact as u64))
}

fn open_for_append(path: &Path, intact: u64) -> Result<File, AnnotationError> {
    let io = |source| AnnotationError::Io { path: path.display().to_string(), source };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    if file.metadata().map_err(io)?.len() > intact {
        file.set_len(intact).map_err(io)?;
        file.sync_data().map_err(io)?;
    }
    Ok(file)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "label")]
pub enum Vote {
    Label(StanceLabel),
    Tie,
}

/// Strict-majority label, or `Tie` when no label holds more than half.
pub fn majority_vote(labels: &[StanceLabel]) -> Result<Vote, AnnotationError> {
    if labels.is_empty() {
        return Err(AnnotationError::EmptyVote);
    }
    Ok(StanceLabel::ALL
        .into_iter()
        .find(|l| 2 * labels.iter().filter(|x| *x == l).count() > labels.len())
        .map_or(Vote::Tie, Vote::Label))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disagreement {
    pub pair_id: String,
    pub labels: Vec<StanceLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub labeled_pairs: usize,
    pub multi_labeled_pairs: usize,
    /// Fraction of multi-labeled pairs on which every label agrees.
    pub exact_agreement: Option<f64>,
    pub disagreements: Vec<Disagreement>,
    pub ties: usize,
    pub gold_compared: usize,
    /// Fraction of gold-labeled pairs whose vote differs from gold; a tie
    /// counts as a difference.
    pub vote_vs_gold_error: Option<f64>,
}

pub fn agreement_stats(
    labels: &BTreeMap<String, Vec<StanceLabel>>,
    gold: Option<&BTreeMap<String, StanceLabel>>,
) -> AgreementStats {
    let mut multi = 0;
    let mut agreeing = 0;
    let mut disagreements = Vec::new();
    let mut ties = 0;
    let mut compared = 0;
    let mut wrong = 0;
    for (pair_id, ls) in labels.iter().filter(|(_, ls)| !ls.is_empty()) {
        if ls.len() > 1 {
            multi += 1;
            if ls.iter().all(|l| *l == ls[0]) {
                agreeing += 1;
            } else {
                disagreements.push(Disagreement { pair_id: pair_id.clone(), labels: ls.clone() });
            }
        }
        let vote = majority_vote(ls).expect("nonempty");
        if vote == Vote::Tie {
            ties += 1;
        }
        if let Some(g) = gold.and_then(|g| g.get(pair_id)) {
            compared += 1;
            if vote != Vote::Label(*g) {
                wrong += 1;
            }
        }
    }
    AgreementStats {
        labeled_pairs: labels.values().filter(|ls| !ls.is_empty()).count(),
        multi_labeled_pairs: multi,
        exact_agreement: (multi > 0).then(|| agreeing as f64 / multi as f64),
        disagreements,
        ties,
        gold_compared: compared,
        vote_vs_gold_error: (compared > 0).then(|| wrong as f64 / compared as f64),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjudicationItem {
    pub pair_id: String,
    pub title: String,
    pub comment: String,
    pub labels: Vec<LabelRecord>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PairClaimType;
    use chrono::TimeZone;
    use StanceLabel::*;

    fn pairs(n: usize) -> Vec<StancePair> {
        (0..n).map(|i| StancePair::new(format!("p_{i}"), "title", "comment", PairClaimType::Explicit)).collect()
    }

    fn clock() -> Arc<ManualClock> {
        Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2023, 3, 1, 12, 0, 0).unwrap()))
    }

    #[test]
    fn votes() {
        assert_eq!(majority_vote(&[Favor, Favor, Against]).unwrap(), Vote::Label(Favor));
        assert_eq!(majority_vote(&[Favor, Against, None]).unwrap(), Vote::Tie);
        assert_eq!(majority_vote(&[Against]).unwrap(), Vote::Label(Against));
        assert_eq!(majority_vote(&[Favor, Against]).unwrap(), Vote::Tie);
        assert!(matches!(majority_vote(&[]), Err(AnnotationError::EmptyVote)));
    }

    #[test]
    fn leases_are_disjoint_and_expire() {
        let clock = clock();
        let q = TaskQueue::in_memory(&pairs(3), QueueConfig::default(), clock.clone()).unwrap();
        let a = q.lease_next("a").unwrap().unwrap();
        let b = q.lease_next("b").unwrap().unwrap();
        assert_ne!(a.pair_id, b.pair_id);
        assert_eq!(q.lease_next("a").unwrap().unwrap().pair_id, a.pair_id);
        assert_eq!(q.progress(), Progress { open: 1, leased: 2, done: 0 });
        clock.advance(Duration::minutes(11));
        assert_eq!(q.task(&a.pair_id).unwrap().status, TaskStatus::Open);
        assert!(matches!(q.submit(&a.pair_id, "a", Favor), Err(AnnotationError::NoLease { .. })));
        assert_eq!(q.lease_next("c").unwrap().unwrap().pair_id, a.pair_id);
    }

    #[test]
    fn submit_and_revise() {
        let q = TaskQueue::in_memory(&pairs(1), QueueConfig::default(), clock()).unwrap();
        assert!(matches!(q.submit("nope", "a", Favor), Err(AnnotationError::NotFound(_))));
        let t = q.lease_next("a").unwrap().unwrap();
        assert_eq!(q.submit(&t.pair_id, "a", Favor).unwrap(), SubmitOutcome::Recorded);
        assert_eq!(q.submit(&t.pair_id, "a", Favor).unwrap(), SubmitOutcome::Unchanged);
        assert_eq!(q.submit(&t.pair_id, "a", Against).unwrap(), SubmitOutcome::Replaced);
        assert_eq!(q.labels(&t.pair_id).len(), 1);
        assert_eq!(q.task(&t.pair_id).unwrap().status, TaskStatus::Done);
        assert!(q.lease_next("a").unwrap().is_none());
        assert_eq!(q.export()[0].gold_stance, Some(Against));
    }

    #[test]
    fn three_label_mode_and_adjudication() {
        let cfg = QueueConfig { min_labels: 3, ..Default::default() };
        let q = TaskQueue::in_memory(&pairs(1), cfg, clock()).unwrap();
        for (who, label) in [("a", Favor), ("b", Against), ("c", None)] {
            let t = q.lease_next(who).unwrap().unwrap();
            q.submit(&t.pair_id, who, label).unwrap();
        }
        assert_eq!(q.progress().done, 1);
        assert_eq!(q.adjudication().len(), 1);
        assert_eq!(q.export()[0].gold_stance, Option::None);
    }

    #[test]
    fn log_replay_restores_state() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("events.jsonl");
        let clock = clock();
        {
            let q = TaskQueue::open(&log, &pairs(2), QueueConfig::default(), clock.clone()).unwrap();
            let t = q.lease_next("a").unwrap().unwrap();
            q.submit(&t.pair_id, "a", Favor).unwrap();
            q.lease_next("b").unwrap().unwrap();
        }
        // Simulate a crash in the middle of a write.
        let mut f = OpenOptions::new().append(true).open(&log).unwrap();
        f.write_all(b"{\"event\":\"lab").unwrap();
        drop(f);
        let q = TaskQueue::open(&log, &pairs(2), QueueConfig::default(), clock).unwrap();
        assert_eq!(q.labels("p_0")[0].label, Favor);
        assert_eq!(q.task("p_1").unwrap().status, TaskStatus::Leased);
        let t = q.lease_next("c").unwrap();
        assert!(t.is_none());
        q.submit("p_1", "b", None).unwrap();
        let q2 = TaskQueue::open(&log, &[], QueueConfig::default(), Arc::new(SystemClock)).unwrap();
        assert_eq!(q2.progress().done, 2);
    }

    #[test]
    fn agreement() {
        let mut labels = BTreeMap::new();
        labels.insert("a".to_string(), vec![Favor, Favor]);
        labels.insert("b".to_string(), vec![Favor, Against]);
        labels.insert("c".to_string(), vec![None]);
        let gold: BTreeMap<String, StanceLabel> = [("a", Favor), ("b", Favor), ("c", Against)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let s = agreement_stats(&labels, Some(&gold));
        assert_eq!(s.multi_labeled_pairs, 2);
        assert_eq!(s.exact_agreement, Some(0.5));
        assert_eq!(s.disagreements.len(), 1);
        assert_eq!(s.ties, 1);
        assert_eq!(s.vote_vs_gold_error, Some(2.0 / 3.0));
    }

    #[test]
    fn vote_serialization() {
        assert_eq!(serde_json::to_string(&Vote::Label(Favor)).unwrap(), r#"{"kind":"label","label":"Favor"}"#);
        assert_eq!(serde_json::to_string(&Vote::Tie).unwrap(), r#"{"kind":"tie"}"#);
    }
}
