#!/usr/bin/env python3
"""Builds the 40-post ingestion fixture and its expected id list.

Filter: flair in {Research, Article}; created_at within
[2023-03-01T00:00:00Z, 2023-03-31T23:59:59.999999999Z]; output ordered by
(created_at, id).
"""
import json
import random
import sys
from datetime import datetime, timedelta, timezone

FLAIRS = ["Research", "Article", "Question", "Vent", "research", None]
BOUNDARIES = [
    "2023-02-28T23:59:59Z",
    "2023-03-01T00:00:00Z",
    "2023-03-31T23:59:59Z",
    "2023-04-01T00:00:00Z",
]


def build(seed=7):
    rng = random.Random(seed)
    base = datetime(2023, 2, 20, tzinfo=timezone.utc)
    posts = []
    for i in range(40):
        if i < len(BOUNDARIES) * 2:
            ts = BOUNDARIES[i % len(BOUNDARIES)]
            flair = "Research" if i < len(BOUNDARIES) else "Article"
        else:
            dt = base + timedelta(seconds=rng.randrange(0, 50 * 86400))
            ts = dt.strftime("%Y-%m-%dT%H:%M:%SZ")
            flair = rng.choice(FLAIRS)
        posts.append({
            "id": f"p{i:02d}",
            "title": f"Synthetic title number {i}",
            "flair": flair,
            "created_at": ts,
            "author": f"user{rng.randrange(1000)}",
            "body": "",
            "source_url": None,
        })
    rng.shuffle(posts)
    return posts


def main(out_posts, out_expected):
    posts = build()
    with open(out_posts, "w", encoding="utf-8") as fh:
        for p in posts:
            fh.write(json.dumps(p) + "\n")
    expected = [p["id"] for p in sorted(posts, key=lambda p: (p["created_at"], p["id"])) if p["flair"] in {"Research", "Article"} and "2023-03-01T00:00:00Z" <= p["created_at"] <= "2023-03-31T23:59:59Z"]
    with open(out_expected, "w", encoding="utf-8") as fh:
        json.dump(expected, fh, indent=1)
        fh.write("\n")


if __name__ == "__main__":
    main(
        sys.argv[1] if len(sys.argv) > 1 else "fixtures/oracles/ingest_40_posts.jsonl",
        sys.argv[2] if len(sys.argv) > 2 else "fixtures/oracles/ingest_40_expected.json",
    )
