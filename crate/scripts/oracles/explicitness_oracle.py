#!/usr/bin/env python3
"""Normalization oracle for explicit/implicit claim tagging.

normalize: lowercase, split on whitespace, strip punctuation from both ends
of every token, drop tokens that become empty, join with one space.
Explicit iff normalize(claim) is a contiguous substring of normalize(title).
"""
import json
import string
import sys

PUNCT = string.punctuation + "“”‘’—–…«»"

CASES = [
    ("New study shows Covid is causing Cancer (in young people)", "covid is causing cancer"),
    ("New study shows Covid is causing Cancer (in young people)", "Covid causes cancer in young people"),
    ("Treatment of Long-Haul COVID Patients With Off-Label Acyclovir", "Treatment of Long-Haul COVID Patients With Off-Label Acyclovir"),
    ("Treatment of Long-Haul COVID Patients With Off-Label Acyclovir", "acyclovir treats long covid"),
    ("The Latest Promising Long COVID Treatment? Psychedelic Drugs", "psychedelic drugs"),
    ("The Latest Promising Long COVID Treatment? Psychedelic Drugs", "Psychedelic drugs treat long COVID"),
    ("Alkaline water improves exercise-induced metabolic acidosis", "ALKALINE   WATER improves"),
    ("Alkaline water improves exercise-induced metabolic acidosis", "\"alkaline water improves exercise-induced metabolic acidosis.\""),
    ("The linkage between MTHFR gene mutation, Anxiety/Depression and Long Covd?", "MTHFR gene mutation anxiety/depression"),
    ("The linkage between MTHFR gene mutation, Anxiety/Depression and Long Covd?", "MTHFR mutations cause long covid"),
    ("Long COVID stemmed from mild cases of COVID-19 in most people", "mild cases of covid-19"),
    ("Long COVID stemmed from mild cases of COVID-19 in most people", "mild covid leads to long covid"),
    ("New theories of the possible link between Covid shots and tinnitus are emerging", "covid shots and tinnitus"),
    ("New theories of the possible link between Covid shots and tinnitus are emerging", "vaccines cause tinnitus"),
    ("Nicotine rebalances NAD+ homeostasis and improves aging-related symptoms", "nicotine rebalances nad homeostasis"),
    ("Nicotine rebalances NAD+ homeostasis and improves aging-related symptoms", "nicotine patches help"),
    ("Tiziana Life Sciences to assess intranasal foralumab for long Covid", "intranasal foralumab"),
    ("Tiziana Life Sciences to assess intranasal foralumab for long Covid", "foralumab works"),
    ("Vitamin D deficiency linked to worse outcomes", "vitamin d deficiency linked to worse outcomes!!"),
    ("Vitamin D deficiency linked to worse outcomes", "deficiency linked worse"),
]


def normalize(text):
    tokens = (tok.strip(PUNCT) for tok in text.lower().split())
    return " ".join(t for t in tokens if t)


def main(out):
    assert len(CASES) == 20
    with open(out, "w", encoding="utf-8") as fh:
        for title, claim in CASES:
            tag = "Explicit" if normalize(claim) in normalize(title) else "Implicit"
            fh.write(json.dumps({"title": title, "claim_text": claim, "expected": tag}) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "fixtures/oracles/explicitness.jsonl")
