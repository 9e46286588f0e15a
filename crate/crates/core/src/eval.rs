//! Metrics and diagnostic reports.
//!
//! Metric convention: a zero denominator makes precision, recall or F1 zero.
//! Macro F1 is the unweighted mean over every declared class, including
//! classes absent from both gold and predictions.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::claims::ClaimPrediction;
use crate::gateway::FailurePolicy;
use crate::model::{PairClaimType, StanceLabel, StancePair};
use crate::stance::StancePrediction;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("gold has {gold} labels but pred has {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("label {0:?} is not in the class set")]
    UnknownLabel(String),
    #[error("duplicate class {0:?}")]
    DuplicateClass(String),
    #[error("word count must be at least 1")]
    ZeroWordCount,
    #[error("prediction for unknown pair {0:?}")]
    UnknownPair(String),
    #[error("duplicate prediction for {0:?}")]
    DuplicatePrediction(String),
    #[error("no prediction for pair {0:?}")]
    MissingPrediction(String),
    #[error("no gold label for {0:?}")]
    MissingGold(String),
    #[error("distribution row {0:?} has no comments")]
    EmptyRow(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    /// Rows are gold, columns are predicted.
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(classes: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self, EvalError> {
        check_classes(&classes)?;
        if counts.len() != classes.len() || counts.iter().any(|r| r.len() != classes.len()) {
            return Err(EvalError::LengthMismatch { gold: classes.len(), pred: counts.len() });
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, gold: usize, pred: usize) -> u64 {
        self.counts[gold][pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

fn check_classes(classes: &[String]) -> Result<(), EvalError> {
    for (i, c) in classes.iter().enumerate() {
        if classes[..i].contains(c) {
            return Err(EvalError::DuplicateClass(c.clone()));
        }
    }
    Ok(())
}

pub fn confusion<L: PartialEq + ToString>(classes: &[L], gold: &[L], pred: &[L]) -> Result<ConfusionMatrix, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::LengthMismatch { gold: gold.len(), pred: pred.len() });
    }
    let names: Vec<String> = classes.iter().map(ToString::to_string).collect();
    check_classes(&names)?;
    let index = |l: &L| classes.iter().position(|c| c == l).ok_or_else(|| EvalError::UnknownLabel(l.to_string()));
    let mut counts = vec![vec![0u64; classes.len()]; classes.len()];
    for (g, p) in gold.iter().zip(pred) {
        counts[index(g)?][index(p)?] += 1;
    }
    Ok(ConfusionMatrix { classes: names, counts })
}

pub fn stance_confusion(gold: &[StanceLabel], pred: &[StanceLabel]) -> Result<ConfusionMatrix, EvalError> {
    confusion(&StanceLabel::ALL, gold, pred)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<String>,
    pub per_class: BTreeMap<String, ClassMetrics>,
    pub macro_f1: f64,
    pub total: u64,
    pub parse_failure_count: usize,
    pub excluded_count: usize,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn prf1(matrix: &ConfusionMatrix) -> EvalReport {
    let n = matrix.classes.len();
    let mut per_class = BTreeMap::new();
    let mut f1_sum = 0.0;
    for c in 0..n {
        let tp = matrix.counts[c][c];
        let gold: u64 = matrix.counts[c].iter().sum();
        let predicted: u64 = (0..n).map(|r| matrix.counts[r][c]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, gold);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        f1_sum += f1;
        per_class.insert(matrix.classes[c].clone(), ClassMetrics { precision, recall, f1, support: gold });
    }
    EvalReport {
        classes: matrix.classes.clone(),
        per_class,
        macro_f1: if n == 0 { 0.0 } else { f1_sum / n as f64 },
        total: matrix.total(),
        parse_failure_count: 0,
        excluded_count: 0,
        confusion: matrix.clone(),
    }
}

impl EvalReport {
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>9} {:>9} {:>9} {:>8}", "class", "precision", "recall", "f1", "support");
        for class in &self.classes {
            let m = &self.per_class[class];
            let _ = writeln!(out, "{:<10} {:>9.3} {:>9.3} {:>9.3} {:>8}", class, m.precision, m.recall, m.f1, m.support);
        }
        let _ = writeln!(out, "{:<10} {:>29.3} {:>8}", "macro-f1", self.macro_f1, self.total);
        let _ = writeln!(out, "parse failures: {}  excluded: {}", self.parse_failure_count, self.excluded_count);
        out
    }
}

/// Gold/predicted label pairs after joining predictions onto pairs.
#[derive(Debug, Clone)]
struct Joined<'a> {
    rows: Vec<(&'a StancePair, StanceLabel, StanceLabel)>,
    parse_failures: usize,
    excluded: usize,
}

fn join<'a>(pairs: &'a [StancePair], preds: &[StancePrediction], policy: FailurePolicy) -> Result<Joined<'a>, EvalError> {
    let mut by_id: HashMap<&str, &StancePrediction> = HashMap::new();
    for p in preds {
        if by_id.insert(p.pair_id.as_str(), p).is_some() {
            return Err(EvalError::DuplicatePrediction(p.pair_id.clone()));
        }
    }
    let known: HashMap<&str, &StancePair> = pairs.iter().map(|p| (p.pair_id.as_str(), p)).collect();
    if let Some(stray) = preds.iter().find(|p| !known.contains_key(p.pair_id.as_str())) {
        return Err(EvalError::UnknownPair(stray.pair_id.clone()));
    }
    let mut joined = Joined { rows: Vec::new(), parse_failures: 0, excluded: 0 };
    for pair in pairs {
        let pred = by_id.get(pair.pair_id.as_str()).ok_or_else(|| EvalError::MissingPrediction(pair.pair_id.clone()))?;
        let gold = pair.gold_stance.ok_or_else(|| EvalError::MissingGold(pair.pair_id.clone()))?;
        if pred.parse_failed {
            joined.parse_failures += 1;
            if policy == FailurePolicy::Exclude {
                joined.excluded += 1;
                continue;
            }
            joined.rows.push((pair, gold, StanceLabel::None));
        } else {
            joined.rows.push((pair, gold, pred.predicted));
        }
    }
    Ok(joined)
}

fn stance_report(rows: &[(&StancePair, StanceLabel, StanceLabel)]) -> EvalReport {
    let gold: Vec<_> = rows.iter().map(|r| r.1).collect();
    let pred: Vec<_> = rows.iter().map(|r| r.2).collect();
    prf1(&stance_confusion(&gold, &pred).expect("closed label set"))
}

/// Stance evaluation over every pair; each pair needs a gold label and
/// exactly one prediction.
pub fn evaluate_stance(pairs: &[StancePair], preds: &[StancePrediction], policy: FailurePolicy) -> Result<EvalReport, EvalError> {
    let joined = join(pairs, preds, policy)?;
    let mut report = stance_report(&joined.rows);
    report.parse_failure_count = joined.parse_failures;
    report.excluded_count = joined.excluded;
    Ok(report)
}

/// Claim identification scored as a two-class problem.
pub fn evaluate_claims(gold: &BTreeMap<String, bool>, preds: &[ClaimPrediction], policy: FailurePolicy) -> Result<EvalReport, EvalError> {
    let mut g = Vec::new();
    let mut p = Vec::new();
    let mut failures = 0;
    let mut excluded = 0;
    let mut seen = std::collections::HashSet::new();
    for pred in preds {
        if !seen.insert(pred.post_id.as_str()) {
            return Err(EvalError::DuplicatePrediction(pred.post_id.clone()));
        }
        let truth = *gold.get(&pred.post_id).ok_or_else(|| EvalError::MissingGold(pred.post_id.clone()))?;
        if pred.parse_failed {
            failures += 1;
            if policy == FailurePolicy::Exclude {
                excluded += 1;
                continue;
            }
        }
        g.push(if truth { "claim" } else { "no-claim" });
        p.push(if pred.predicted { "claim" } else { "no-claim" });
    }
    let mut report = prf1(&confusion(&["claim", "no-claim"], &g, &p)?);
    report.parse_failure_count = failures;
    report.excluded_count = excluded;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LengthBin {
    Short,
    Medium,
    Long,
}

impl LengthBin {
    pub const ALL: [LengthBin; 3] = [LengthBin::Short, LengthBin::Medium, LengthBin::Long];

    pub fn as_str(self) -> &'static str {
        match self {
            LengthBin::Short => "Short",
            LengthBin::Medium => "Medium",
            LengthBin::Long => "Long",
        }
    }
}

/// Half-open bins: [1, 50), [50, 100), [100, ∞).
pub fn length_bin(word_count: usize) -> Result<LengthBin, EvalError> {
    match word_count {
        0 => Err(EvalError::ZeroWordCount),
        1..=49 => Ok(LengthBin::Short),
        50..=99 => Ok(LengthBin::Medium),
        _ => Ok(LengthBin::Long),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stratifier {
    ClaimType,
    CommentLength,
}

impl std::str::FromStr for Stratifier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "claim-type" => Ok(Stratifier::ClaimType),
            "length" | "comment-length" => Ok(Stratifier::CommentLength),
            other => Err(format!("unknown stratifier {other:?} (expected claim-type or length)")),
        }
    }
}

impl Stratifier {
    pub fn keys(self) -> Vec<&'static str> {
        match self {
            Stratifier::ClaimType => vec![PairClaimType::Explicit.as_str(), PairClaimType::Implicit.as_str()],
            Stratifier::CommentLength => LengthBin::ALL.iter().map(|b| b.as_str()).collect(),
        }
    }

    pub fn key(self, pair: &StancePair) -> Result<&'static str, EvalError> {
        match self {
            Stratifier::ClaimType => Ok(pair.claim_type.as_str()),
            Stratifier::CommentLength => Ok(length_bin(pair.comment_word_count)?.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub support: u64,
    /// Absent for an empty stratum.
    pub report: Option<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumReport {
    pub stratifier: Stratifier,
    pub strata: BTreeMap<String, Stratum>,
    pub total: u64,
    pub parse_failure_count: usize,
    pub excluded_count: usize,
}

pub fn stratified_eval(
    pairs: &[StancePair],
    preds: &[StancePrediction],
    stratifier: Stratifier,
    policy: FailurePolicy,
) -> Result<StratumReport, EvalError> {
    let joined = join(pairs, preds, policy)?;
    let mut buckets: BTreeMap<&str, Vec<_>> = stratifier.keys().into_iter().map(|k| (k, Vec::new())).collect();
    for row in &joined.rows {
        buckets.get_mut(stratifier.key(row.0)?).expect("every key is declared").push(*row);
    }
    let strata = buckets
        .into_iter()
        .map(|(key, rows)| {
            let stratum = if rows.is_empty() {
                Stratum { support: 0, report: None }
            } else {
                Stratum { support: rows.len() as u64, report: Some(stance_report(&rows)) }
            };
            (key.to_string(), stratum)
        })
        .collect();
    Ok(StratumReport {
        stratifier,
        strata,
        total: joined.rows.len() as u64,
        parse_failure_count: joined.parse_failures,
        excluded_count: joined.excluded,
    })
}

impl StratumReport {
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>8} {:>9}", "stratum", "support", "macro-f1");
        for (key, s) in &self.strata {
            match &s.report {
                Some(r) => {
                    let _ = writeln!(out, "{:<10} {:>8} {:>9.3}", key, s.support, r.macro_f1);
                }
                None => {
                    let _ = writeln!(out, "{:<10} {:>8} {:>9}", key, 0, "-");
                }
            }
        }
        let _ = writeln!(out, "{:<10} {:>8}", "total", self.total);
        out
    }
}

/// Percentages per stance, each in [0, 100].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StancePct {
    pub against: f64,
    pub favor: f64,
    pub none: f64,
}

impl StancePct {
    fn from_labels(labels: &[StanceLabel]) -> Self {
        let n = labels.len() as f64;
        let pct = |l| 100.0 * labels.iter().filter(|x| **x == l).count() as f64 / n;
        StancePct { against: pct(StanceLabel::Against), favor: pct(StanceLabel::Favor), none: pct(StanceLabel::None) }
    }

    pub fn rounded(&self) -> [i64; 3] {
        [self.against.round() as i64, self.favor.round() as i64, self.none.round() as i64]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub title_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub comment_count: u64,
    pub gold_pct: StancePct,
    pub pred_pct: StancePct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub rows: Vec<DistributionRow>,
    pub weighted_average: StancePct,
    pub weighted_average_pred: StancePct,
    pub comment_count: u64,
}

/// Weights each row by its comment count.
pub fn weighted_average(rows: &[DistributionRow]) -> Result<Distribution, EvalError> {
    if let Some(r) = rows.iter().find(|r| r.comment_count == 0) {
        return Err(EvalError::EmptyRow(r.title_id.clone()));
    }
    let total: u64 = rows.iter().map(|r| r.comment_count).sum();
    let avg = |f: &dyn Fn(&DistributionRow) -> f64| {
        if total == 0 {
            0.0
        } else {
            rows.iter().map(|r| f(r) * r.comment_count as f64).sum::<f64>() / total as f64
        }
    };
    Ok(Distribution {
        weighted_average: StancePct {
            against: avg(&|r| r.gold_pct.against),
            favor: avg(&|r| r.gold_pct.favor),
            none: avg(&|r| r.gold_pct.none),
        },
        weighted_average_pred: StancePct {
            against: avg(&|r| r.pred_pct.against),
            favor: avg(&|r| r.pred_pct.favor),
            none: avg(&|r| r.pred_pct.none),
        },
        rows: rows.to_vec(),
        comment_count: total,
    })
}

/// Per-title gold and predicted distributions, titles in order of first
/// appearance. A title is identified by the pair's `post_id` field when it
/// has one, else by the part of `pair_id` before the last `_`.
pub fn stance_distribution(
    pairs: &[StancePair],
    preds: &[StancePrediction],
    policy: FailurePolicy,
) -> Result<Distribution, EvalError> {
    let joined = join(pairs, preds, policy)?;
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, (String, Vec<StanceLabel>, Vec<StanceLabel>)> = HashMap::new();
    for (pair, gold, pred) in &joined.rows {
        let id = title_id(pair);
        let entry = groups.entry(id.clone()).or_insert_with(|| {
            order.push(id);
            (pair.title.clone(), Vec::new(), Vec::new())
        });
        entry.1.push(*gold);
        entry.2.push(*pred);
    }
    let rows: Vec<DistributionRow> = order
        .into_iter()
        .map(|id| {
            let (title, gold, pred) = &groups[&id];
            DistributionRow {
                title: Some(title.clone()),
                comment_count: gold.len() as u64,
                gold_pct: StancePct::from_labels(gold),
                pred_pct: StancePct::from_labels(pred),
                title_id: id,
            }
        })
        .collect();
    weighted_average(&rows)
}

fn title_id(pair: &StancePair) -> String {
    if let Some(post) = pair.extra.get("post_id").and_then(|v| v.as_str()) {
        return post.to_string();
    }
    match pair.pair_id.rsplit_once('_') {
        Some((post, _)) => post.to_string(),
        None => pair.pair_id.clone(),
    }
}

impl Distribution {
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<40} {:>8} | {:>7} {:>5} {:>4} | {:>7} {:>5} {:>4}", "title", "comments", "against", "favor", "none", "against", "favor", "none");
        let line = |out: &mut String, name: &str, count: String, g: &StancePct, p: &StancePct| {
            let [ga, gf, gn] = g.rounded();
            let [pa, pf, pn] = p.rounded();
            let short: String = name.chars().take(40).collect();
            let _ = writeln!(out, "{short:<40} {count:>8} | {ga:>6}% {gf:>4}% {gn:>3}% | {pa:>6}% {pf:>4}% {pn:>3}%");
        };
        for r in &self.rows {
            line(&mut out, r.title.as_deref().unwrap_or(&r.title_id), r.comment_count.to_string(), &r.gold_pct, &r.pred_pct);
        }
        line(&mut out, "Weighted average", self.comment_count.to_string(), &self.weighted_average, &self.weighted_average_pred);
        out
    }
}
