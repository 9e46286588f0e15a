#!/usr/bin/env python3
"""100 pairs, three annotators each, with gold labels.

Built so the strict-majority vote matches gold on 67 pairs and misses on 33:
28 pairs where two annotators agree on a wrong label and 5 three-way ties.
Expected statistics are recomputed from the records, not from the design.
"""
import json
import random
import sys
from collections import Counter

LABELS = ["Favor", "Against", "None"]


def vote(labels):
    label, n = Counter(labels).most_common(1)[0]
    return label if 2 * n > len(labels) else None


def build(seed=33):
    rng = random.Random(seed)
    rows = []
    kinds = ["unanimous"] * 40 + ["majority"] * 27 + ["wrong"] * 28 + ["tie"] * 5
    rng.shuffle(kinds)
    for i, kind in enumerate(kinds):
        gold = rng.choice(LABELS)
        other = [l for l in LABELS if l != gold]
        if kind == "unanimous":
            labels = [gold] * 3
        elif kind == "majority":
            labels = [gold, gold, rng.choice(other)]
        elif kind == "wrong":
            wrong = rng.choice(other)
            labels = [wrong, wrong, rng.choice([gold, [l for l in other if l != wrong][0]])]
        else:
            labels = list(LABELS)
        rng.shuffle(labels)
        rows.append({"pair_id": f"qc{i:03d}", "gold": gold, "labels": labels})
    return rows


def stats(rows):
    wrong = sum(1 for r in rows if vote(r["labels"]) != r["gold"])
    ties = sum(1 for r in rows if vote(r["labels"]) is None)
    agree = sum(1 for r in rows if len(set(r["labels"])) == 1)
    return {
        "pairs": len(rows),
        "vote_wrong": wrong,
        "vote_vs_gold_error": wrong / len(rows),
        "ties": ties,
        "exact_agreement": agree / len(rows),
        "disagreements": len(rows) - agree,
    }


def main(out_rows, out_expected):
    rows = build()
    with open(out_rows, "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(r) + "\n")
    s = stats(rows)
    assert s["vote_wrong"] == 33
    with open(out_expected, "w", encoding="utf-8") as fh:
        json.dump(s, fh, indent=1)
        fh.write("\n")


if __name__ == "__main__":
    args = sys.argv[1:] or ["fixtures/oracles/qc_100.jsonl", "fixtures/oracles/qc_100_expected.json"]
    main(*args)
