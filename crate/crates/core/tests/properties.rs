use std::collections::BTreeMap;

use chrono::{TimeZone, Utc};
use proptest::prelude::*;
use stancemine_core::annotation::{majority_vote, Vote};
use stancemine_core::eval::{length_bin, stance_confusion, LengthBin};
use stancemine_core::ingest::{build_pairs, filter_comments, sample_pairs, IngestFilter};
use stancemine_core::model::Extra;
use stancemine_core::stance::{cosine_similarity, sts_decision};
use stancemine_core::{ClaimLabel, Comment, NliScores, PairClaimType, Post, StanceLabel, StancePair};

fn label() -> impl Strategy<Value = StanceLabel> {
    prop::sample::select(StanceLabel::ALL.to_vec())
}

fn comment() -> impl Strategy<Value = Comment> {
    let author = prop::sample::select(vec!["alice", "AutoModerator", "helperbot", "[deleted]", "bob"]);
    let body = prop::sample::select(vec!["it helped", "", "   ", "[removed]", "[deleted]", "no change at all"]);
    (0u32..40, 0u32..5, prop::option::of(0u32..40), author, body).prop_map(|(id, post, parent, author, body)| Comment {
        id: format!("c{id}"),
        post_id: format!("p{post}"),
        parent_id: parent.map(|p| format!("c{p}")),
        author: author.into(),
        body: body.into(),
        created_at: Utc.with_ymd_and_hms(2023, 3, 10, 0, 0, 0).unwrap(),
        extra: Extra::new(),
    })
}

fn post(i: usize, title: &str) -> Post {
    Post {
        id: format!("p{i}"),
        title: title.into(),
        flair: Some("Research".into()),
        created_at: Utc.with_ymd_and_hms(2023, 3, 1, 0, 0, 0).unwrap(),
        author: "op".into(),
        body: String::new(),
        source_url: None,
        extra: Extra::new(),
    }
}

fn scores() -> impl Strategy<Value = NliScores> {
    (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0).prop_filter_map("nonzero", |(a, b, c)| {
        let s = a + b + c;
        (s > 0.0).then(|| NliScores::new(a / s, b / s, c / s).ok()).flatten()
    })
}

fn vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, dim).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-6))
}

proptest! {
    #[test]
    fn comment_filter_is_idempotent_subset(comments in prop::collection::vec(comment(), 0..60)) {
        let filter = IngestFilter::default();
        let once = filter_comments(&comments, &filter);
        prop_assert_eq!(filter_comments(&once, &filter), once.clone());
        prop_assert!(once.iter().all(|c| comments.contains(c)));
        for c in &once {
            prop_assert!(c.parent_id.is_none());
            prop_assert!(!c.body.trim().is_empty());
            prop_assert!(!["[deleted]", "[removed]"].contains(&c.body.as_str()));
            prop_assert!(c.author != "AutoModerator" && !c.author.ends_with("bot"));
        }
    }

    #[test]
    fn confusion_total_matches_input(pairs in prop::collection::vec((label(), label()), 0..200)) {
        let (gold, pred): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
        let m = stance_confusion(&gold, &pred).unwrap();
        prop_assert_eq!(m.total(), pairs.len() as u64);
        let diag: u64 = (0..3).map(|i| m.get(i, i)).sum();
        prop_assert_eq!(diag, pairs.iter().filter(|(g, p)| g == p).count() as u64);
    }

    #[test]
    fn cosine_is_bounded_and_symmetric((u, v) in (1usize..16).prop_flat_map(|d| (vector(d), vector(d)))) {
        let uv = cosine_similarity(&u, &v).unwrap();
        prop_assert!((-1.0..=1.0).contains(&uv));
        prop_assert_eq!(uv, cosine_similarity(&v, &u).unwrap());
        prop_assert!((cosine_similarity(&u, &u).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sts_rule(sim in -1.0f64..1.0, s in scores(), t in 0.0f64..1.0) {
        let got = sts_decision(sim, &s, t);
        if sim < t {
            prop_assert_eq!(got, StanceLabel::None);
        } else if s.entailment >= s.contradiction {
            prop_assert_eq!(got, StanceLabel::Favor);
        } else {
            prop_assert_eq!(got, StanceLabel::Against);
        }
    }

    #[test]
    fn vote_ignores_order(mut labels in prop::collection::vec(label(), 1..9), seed in any::<u64>()) {
        let before = majority_vote(&labels).unwrap();
        let n = labels.len();
        for i in 0..n {
            labels.swap(i, (seed.wrapping_mul(i as u64 + 7) % n as u64) as usize);
        }
        prop_assert_eq!(majority_vote(&labels).unwrap(), before);
    }

    #[test]
    fn pair_count_equals_top_level_comments_of_claim_posts(
        comments in prop::collection::vec(comment(), 0..60),
        claims in prop::collection::vec(prop::option::of(any::<bool>()), 5),
    ) {
        let posts: Vec<Post> = (0..5).map(|i| post(i, "title")).collect();
        let labels: BTreeMap<String, ClaimLabel> = claims
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let l = match c {
                    Some(true) => ClaimLabel::claim(PairClaimType::Explicit),
                    Some(false) => ClaimLabel::claim(PairClaimType::Implicit),
                    None => ClaimLabel::NO_CLAIM,
                };
                (format!("p{i}"), l)
            })
            .collect();
        let pairs = build_pairs(&posts, &comments, &labels).unwrap();
        let expected = comments
            .iter()
            .filter(|c| c.parent_id.is_none() && labels[&c.post_id].has_claim())
            .count();
        prop_assert_eq!(pairs.len(), expected);
    }

    #[test]
    fn sampling_is_a_seeded_ordered_subset(n_pairs in 0usize..120, n in 0usize..150, seed in any::<u64>()) {
        let pairs: Vec<StancePair> =
            (0..n_pairs).map(|i| StancePair::new(format!("x{i:03}"), "t", "c", PairClaimType::Implicit)).collect();
        let a = sample_pairs(&pairs, n, seed);
        prop_assert_eq!(&a, &sample_pairs(&pairs, n, seed));
        prop_assert_eq!(a.len(), n.min(n_pairs));
        let ids: Vec<&str> = a.iter().map(|p| p.pair_id.as_str()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        sorted.dedup();
        prop_assert_eq!(ids, sorted);
    }
}

#[test]
fn length_bins_partition_one_to_five_hundred() {
    let mut seen = BTreeMap::<LengthBin, usize>::new();
    for n in 1..=500 {
        *seen.entry(length_bin(n).unwrap()).or_default() += 1;
    }
    assert_eq!(seen[&LengthBin::Short], 49);
    assert_eq!(seen[&LengthBin::Medium], 50);
    assert_eq!(seen[&LengthBin::Long], 401);
    assert_eq!(length_bin(49).unwrap(), LengthBin::Short);
    assert_eq!(length_bin(50).unwrap(), LengthBin::Medium);
    assert_eq!(length_bin(99).unwrap(), LengthBin::Medium);
    assert_eq!(length_bin(100).unwrap(), LengthBin::Long);
    assert!(length_bin(0).is_err());
}

#[test]
fn tie_iff_no_strict_majority_for_every_multiset() {
    for n in 1..=7 {
        for favor in 0..=n {
            for against in 0..=n - favor {
                let none = n - favor - against;
                let labels: Vec<StanceLabel> = std::iter::repeat_n(StanceLabel::Favor, favor)
                    .chain(std::iter::repeat_n(StanceLabel::Against, against))
                    .chain(std::iter::repeat_n(StanceLabel::None, none))
                    .collect();
                let top = [favor, against, none].into_iter().max().unwrap();
                let vote = majority_vote(&labels).unwrap();
                assert_eq!(vote == Vote::Tie, 2 * top <= n, "{favor}/{against}/{none}");
                if let Vote::Label(l) = vote {
                    assert!(2 * labels.iter().filter(|x| **x == l).count() > n);
                }
            }
        }
    }
}
