//! Checks against values frozen by the scripts under `scripts/oracles`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Deserialize;
use serde_json::Value;
use stancemine_core::annotation::{agreement_stats, majority_vote, Vote};
use stancemine_core::claims::tag_explicitness;
use stancemine_core::eval::{confusion, prf1, stratified_eval, weighted_average, DistributionRow, StancePct, Stratifier};
use stancemine_core::gateway::{parse_claim_response, parse_stance_response, FailurePolicy, Strategy};
use stancemine_core::ingest::{fetch_posts, IngestFilter, Source};
use stancemine_core::stance::{cosine_similarity, RawOutput, StanceMethod, StancePrediction};
use stancemine_core::{word_count, PairClaimType, StanceLabel, StancePair};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/oracles").join(name)
}

fn lines(name: &str) -> Vec<Value> {
    std::fs::read_to_string(fixture(name)).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn json(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

#[test]
fn explicitness_matches_normalization_oracle() {
    let cases = lines("explicitness.jsonl");
    assert_eq!(cases.len(), 20);
    for c in cases {
        let got = tag_explicitness(c["title"].as_str().unwrap(), c["claim_text"].as_str().unwrap()).unwrap();
        assert_eq!(got.as_str(), c["expected"].as_str().unwrap(), "{c}");
    }
}

#[test]
fn word_counts_match_tokenizer_oracle() {
    for c in lines("word_count.jsonl") {
        assert_eq!(word_count(c["text"].as_str().unwrap()), c["count"].as_u64().unwrap() as usize, "{c}");
    }
}

#[test]
fn cosine_matches_high_precision_value() {
    let expected: f64 = json("metrics.json")["cosine_123_456"].as_str().unwrap().parse().unwrap();
    let got = cosine_similarity(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
}

#[test]
fn two_class_metrics_match_reference_library() {
    let m = json("metrics.json");
    let report = prf1(&confusion(&[0, 1], &[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap());
    for (i, class) in ["0", "1"].iter().enumerate() {
        let c = &report.per_class[*class];
        assert!((c.precision - m["two_class"]["precision"][i].as_f64().unwrap()).abs() < 1e-12);
        assert!((c.recall - m["two_class"]["recall"][i].as_f64().unwrap()).abs() < 1e-12);
        assert!((c.f1 - m["two_class"]["f1"][i].as_f64().unwrap()).abs() < 1e-12);
    }
    assert!((report.macro_f1 - m["two_class"]["macro_f1"].as_f64().unwrap()).abs() < 1e-12);
}

#[derive(Deserialize)]
struct StrataCase {
    pair_id: String,
    claim_type: PairClaimType,
    comment_word_count: usize,
    gold: StanceLabel,
    pred: StanceLabel,
}

#[test]
fn strata_match_reference_library() {
    let m = json("metrics.json");
    let cases: Vec<StrataCase> = serde_json::from_value(m["strata_pairs"].clone()).unwrap();
    let pairs: Vec<StancePair> = cases
        .iter()
        .map(|c| {
            let comment = vec!["word"; c.comment_word_count].join(" ");
            StancePair::new(&c.pair_id, "title", comment, c.claim_type).with_gold(c.gold)
        })
        .collect();
    let preds: Vec<StancePrediction> = cases
        .iter()
        .map(|c| StancePrediction {
            pair_id: c.pair_id.clone(),
            predicted: c.pred,
            method: StanceMethod::LlmCot,
            raw: RawOutput::Text(c.pred.as_str().into()),
            parse_failed: false,
        })
        .collect();
    for (by, key) in [(Stratifier::ClaimType, "claim_type"), (Stratifier::CommentLength, "length")] {
        let report = stratified_eval(&pairs, &preds, by, FailurePolicy::Exclude).unwrap();
        let expected = m["strata_expected"][key].as_object().unwrap();
        let mut total = 0;
        for (stratum, exp) in expected {
            let got = &report.strata[stratum];
            assert_eq!(got.support, exp["support"].as_u64().unwrap(), "{key}/{stratum}");
            let f1 = got.report.as_ref().unwrap().macro_f1;
            assert!((f1 - exp["macro_f1"].as_f64().unwrap()).abs() < 1e-9, "{key}/{stratum}: {f1}");
            total += got.support;
        }
        assert_eq!(total, cases.len() as u64);
    }
}

#[test]
fn ingest_window_and_flairs_match_oracle() {
    let expected: Vec<String> = serde_json::from_value(json("ingest_40_expected.json")).unwrap();
    let filter = IngestFilter::default()
        .with_flairs(["Research", "Article"])
        .with_days(chrono::NaiveDate::from_ymd_opt(2023, 3, 1).unwrap(), chrono::NaiveDate::from_ymd_opt(2023, 3, 31).unwrap());
    let source = Source::Dump { posts: fixture("ingest_40_posts.jsonl"), comments: None };
    let got = fetch_posts(&source, &filter).unwrap();
    assert!(got.rejects.is_empty());
    let ids: Vec<String> = got.records.into_iter().map(|p| p.id).collect();
    assert_eq!(ids, expected);
}

fn strategy(name: &str) -> Strategy {
    match name {
        "zero-shot" => Strategy::ZeroShot,
        "few-shot" => Strategy::FewShot,
        "chain-of-thought" => Strategy::ChainOfThought,
        other => panic!("strategy {other}"),
    }
}

#[test]
fn parser_cases_match_oracle() {
    let cases = lines("parser_cases.jsonl");
    assert_eq!(cases.len(), 40);
    for c in &cases {
        let text = c["text"].as_str().unwrap();
        let expected = c["expected"].as_str();
        let got = match c["task"].as_str().unwrap() {
            "claim" => parse_claim_response(text).ok().map(|b| if b { "Yes" } else { "No" }),
            _ => parse_stance_response(text, strategy(c["strategy"].as_str().unwrap())).ok().map(StanceLabel::as_str),
        };
        assert_eq!(got, expected, "{c}");
    }
    for kind in ["well-formed", "decorated", "adversarial"] {
        assert!(cases.iter().any(|c| c["kind"] == kind));
    }
}

#[test]
fn appendix_weighted_average_within_one_point() {
    let fx = json("appendix_distribution.json");
    let rows: Vec<DistributionRow> = serde_json::from_value(fx["rows"].clone()).unwrap();
    assert_eq!(rows.len(), 11);
    let dist = weighted_average(&rows).unwrap();
    let printed = |side: &str| -> StancePct { serde_json::from_value(fx["printed_weighted_average"][side].clone()).unwrap() };
    for (got, want) in [(dist.weighted_average, printed("gold")), (dist.weighted_average_pred, printed("pred"))] {
        assert!((got.against - want.against).abs() <= 1.0, "{got:?} vs {want:?}");
        assert!((got.favor - want.favor).abs() <= 1.0, "{got:?} vs {want:?}");
        assert!((got.none - want.none).abs() <= 1.0, "{got:?} vs {want:?}");
    }
    // Recomputed from the rounded row percentages; the printed pred row is 19/41/39.
    let close = |p: StancePct, v: [f64; 3]| {
        (p.against - v[0]).abs() < 1e-3 && (p.favor - v[1]).abs() < 1e-3 && (p.none - v[2]).abs() < 1e-3
    };
    assert!(close(dist.weighted_average, [27.622, 44.020, 28.243]), "{:?}", dist.weighted_average);
    assert!(close(dist.weighted_average_pred, [19.0, 41.5, 39.514]), "{:?}", dist.weighted_average_pred);
}

#[derive(Deserialize)]
struct QcRow {
    pair_id: String,
    gold: StanceLabel,
    labels: Vec<StanceLabel>,
}

#[test]
fn qc_fixture_error_rate() {
    let rows: Vec<QcRow> = lines("qc_100.jsonl").into_iter().map(|v| serde_json::from_value(v).unwrap()).collect();
    let expected = json("qc_100_expected.json");
    let labels: BTreeMap<String, Vec<StanceLabel>> = rows.iter().map(|r| (r.pair_id.clone(), r.labels.clone())).collect();
    let gold: BTreeMap<String, StanceLabel> = rows.iter().map(|r| (r.pair_id.clone(), r.gold)).collect();
    let stats = agreement_stats(&labels, Some(&gold));
    assert_eq!(stats.vote_vs_gold_error, Some(0.33));
    assert_eq!(stats.vote_vs_gold_error.unwrap(), expected["vote_vs_gold_error"].as_f64().unwrap());
    assert_eq!(stats.ties as u64, expected["ties"].as_u64().unwrap());
    assert_eq!(stats.disagreements.len() as u64, expected["disagreements"].as_u64().unwrap());
    assert_eq!(stats.exact_agreement, expected["exact_agreement"].as_f64());
    let ties = rows.iter().filter(|r| majority_vote(&r.labels).unwrap() == Vote::Tie).count();
    assert_eq!(ties, stats.ties);
}
