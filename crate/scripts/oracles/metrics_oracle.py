#!/usr/bin/env python3
"""Frozen numeric oracles computed with independent tools.

* cosine([1,2,3],[4,5,6]) at 50 significant digits (mpmath)
* per-class P/R/F1 for gold [0,0,1,1] vs pred [0,1,1,1] (scikit-learn)
* per-stratum macro F1 over a seeded 50-pair fixture (scikit-learn)
"""
import json
import random
import sys

import mpmath
from sklearn.metrics import f1_score, precision_recall_fscore_support

LABELS = ["Favor", "Against", "None"]


def cosine():
    mpmath.mp.dps = 50
    u = [mpmath.mpf(1), mpmath.mpf(2), mpmath.mpf(3)]
    v = [mpmath.mpf(4), mpmath.mpf(5), mpmath.mpf(6)]
    dot = sum(a * b for a, b in zip(u, v))
    nu = mpmath.sqrt(sum(a * a for a in u))
    nv = mpmath.sqrt(sum(b * b for b in v))
    return mpmath.nstr(dot / (nu * nv), 30)


def two_class():
    gold, pred = [0, 0, 1, 1], [0, 1, 1, 1]
    p, r, f, s = precision_recall_fscore_support(gold, pred, labels=[0, 1], zero_division=0)
    return {
        "precision": [float(x) for x in p],
        "recall": [float(x) for x in r],
        "f1": [float(x) for x in f],
        "macro_f1": float(f1_score(gold, pred, labels=[0, 1], average="macro", zero_division=0)),
    }


def strata_fixture(seed=11):
    rng = random.Random(seed)
    pairs = []
    for i in range(50):
        gold = rng.choice(LABELS)
        pred = gold if rng.random() < 0.6 else rng.choice(LABELS)
        pairs.append({
            "pair_id": f"s{i:02d}",
            "claim_type": rng.choice(["Explicit", "Implicit"]),
            "comment_word_count": rng.choice([1, 12, 49, 50, 75, 99, 100, 180]),
            "gold": gold,
            "pred": pred,
        })
    return pairs


def length_bin(n):
    return "Short" if n < 50 else ("Medium" if n < 100 else "Long")


def strata_expected(pairs):
    out = {}
    for name, key in (("claim_type", lambda p: p["claim_type"]), ("length", lambda p: length_bin(p["comment_word_count"]))):
        groups = {}
        for p in pairs:
            groups.setdefault(key(p), []).append(p)
        out[name] = {
            k: {
                "support": len(v),
                "macro_f1": float(f1_score([p["gold"] for p in v], [p["pred"] for p in v], labels=LABELS, average="macro", zero_division=0)),
            }
            for k, v in sorted(groups.items())
        }
    return out


def main(out):
    pairs = strata_fixture()
    doc = {
        "cosine_123_456": cosine(),
        "two_class": two_class(),
        "strata_pairs": pairs,
        "strata_expected": strata_expected(pairs),
    }
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "fixtures/oracles/metrics.json")
