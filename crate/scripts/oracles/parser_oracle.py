#!/usr/bin/env python3
"""Expected labels for the 40-case reply-parsing fixture.

Rules, applied to lowercase alphanumeric runs ("tokens"):
  claim   first of yes/no decides; neither -> failure
  stance  zero/few: first line holding any of favor/against/none/neutral;
          more than one distinct label on it -> failure
          cot: last line of the form [decoration]stance[decoration]: rest,
          decided on rest as above; with no such line, a reply that is a
          single label token is accepted; anything else fails
Decoration is any run of whitespace and * _ # > - ` before the keyword and
whitespace, * or _ between the keyword and the colon.
"""
import json
import re
import sys

STANCE = {"favor": "Favor", "against": "Against", "none": "None", "neutral": "None"}
STANCE_LINE = re.compile(r"^[\s*_#>\-`]*stance[\s*_]*:(.*)$", re.IGNORECASE)


def tokens(text):
    return re.findall(r"[^\W_]+", text.lower())


def claim(text):
    for t in tokens(text):
        if t in ("yes", "no"):
            return "Yes" if t == "yes" else "No"
    return None


def decide(line):
    found = []
    for t in tokens(line):
        if t in STANCE and STANCE[t] not in found:
            found.append(STANCE[t])
    return found[0] if len(found) == 1 else None


def stance(text, strategy):
    if strategy in ("zero-shot", "few-shot"):
        for line in text.split("\n"):
            if any(t in STANCE for t in tokens(line)):
                return decide(line)
        return None
    for line in reversed(text.split("\n")):
        m = STANCE_LINE.match(line)
        if m:
            return decide(m.group(1))
    toks = tokens(text)
    return STANCE.get(toks[0]) if len(toks) == 1 else None


CASES = [
    # well-formed
    ("claim", None, "Yes", "well-formed"),
    ("claim", None, "No", "well-formed"),
    ("claim", None, "yes", "well-formed"),
    ("stance", "zero-shot", "FAVOR", "well-formed"),
    ("stance", "zero-shot", "AGAINST", "well-formed"),
    ("stance", "few-shot", "NONE", "well-formed"),
    ("stance", "few-shot", "Against", "well-formed"),
    ("stance", "chain-of-thought", "Reason: The commenter says it did nothing for them.\nStance: Against", "well-formed"),
    ("stance", "chain-of-thought", "Reason: They report improvement after two weeks.\nStance: Favor", "well-formed"),
    ("stance", "chain-of-thought", "Reason: The comment talks about something unrelated.\nStance: None", "well-formed"),
    # decorated
    ("claim", None, "'Yes' - the title claims a treatment works.", "decorated"),
    ("claim", None, "Claim: No", "decorated"),
    ("claim", None, "**Yes**", "decorated"),
    ("claim", None, "Answer:\n\nNo.", "decorated"),
    ("stance", "zero-shot", "Stance: **Favor**", "decorated"),
    ("stance", "zero-shot", "The stance is against.", "decorated"),
    ("stance", "few-shot", "\n\n  none  \n", "decorated"),
    ("stance", "few-shot", "Label -> FAVOR (confident)", "decorated"),
    ("stance", "chain-of-thought", "Reason: mixed.\n**Stance:** none", "decorated"),
    ("stance", "chain-of-thought", "Reason: they got worse.\n- Stance: AGAINST.", "decorated"),
    ("stance", "chain-of-thought", "## Stance : Favor", "decorated"),
    ("stance", "chain-of-thought", "Reason: no relation to the claim.\nStance: Neutral", "decorated"),
    ("stance", "chain-of-thought", "Favor", "decorated"),
    ("stance", "zero-shot", "neutral", "decorated"),
    # adversarial
    ("claim", None, "Maybe", "adversarial"),
    ("claim", None, "I don't know", "adversarial"),
    ("claim", None, "Nope, yes it does", "adversarial"),
    ("claim", None, "No claim here. Yes, really.", "adversarial"),
    ("claim", None, "Yesterday I said nothing", "adversarial"),
    ("stance", "zero-shot", "FAVOR, AGAINST, or NONE", "adversarial"),
    ("stance", "zero-shot", "I cannot determine this", "adversarial"),
    ("stance", "few-shot", "Unfavorable, but see below\nAgainst", "adversarial"),
    ("stance", "few-shot", "Hard to say.\nFavor or against?", "adversarial"),
    ("stance", "few-shot", "", "adversarial"),
    ("stance", "chain-of-thought", "Reason: against the grain of the thread", "adversarial"),
    ("stance", "chain-of-thought", "Stance: Favor\nReason: but on reflection\nStance: Against", "adversarial"),
    ("stance", "chain-of-thought", "Reason: one could argue favor.\nStance: unclear", "adversarial"),
    ("stance", "chain-of-thought", "Stance: Favor / Against", "adversarial"),
    ("stance", "chain-of-thought", "Against because reasons", "adversarial"),
    ("stance", "chain-of-thought", "Circumstance: Favor", "adversarial"),
]


def main(out):
    assert len(CASES) == 40
    with open(out, "w", encoding="utf-8") as fh:
        for task, strategy, text, kind in CASES:
            expected = claim(text) if task == "claim" else stance(text, strategy)
            fh.write(json.dumps({"task": task, "strategy": strategy, "text": text, "kind": kind, "expected": expected}) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "fixtures/oracles/parser_cases.jsonl")
