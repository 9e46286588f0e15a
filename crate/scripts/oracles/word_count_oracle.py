#!/usr/bin/env python3
"""Reference word counter used to freeze fixtures/oracles/word_count.jsonl.

Rule set: split on whitespace; every leading or trailing punctuation
character of a chunk is its own token; whatever remains in the middle
(contractions, hyphenated words, decimals) is a single token.
Written independently of the Rust tokenizer, with regular expressions.
"""
import json
import re
import string
import sys

PUNCT = set(string.punctuation) | set("“”‘’—–…«»")
CLASS = "[" + re.escape("".join(sorted(PUNCT))) + "]"
CHUNK = re.compile(r"^(" + CLASS + r"*)(.*?)(" + CLASS + r"*)$", re.S)

SENTENCES = [
    "",
    "hello world",
    "Didn't help, at all.",
    "I've been taking LDN for 3 months and it's helped a lot!",
    "Had to take it after surgery, didn't make any effect",
    "Hmm i have my doubts.",
    "   leading and trailing spaces   ",
    "(in young people)",
    "\"Simple concept, covid damages and damage = increased risk.\"",
    "Viruses cause something *like* 15% of cancers.",
    "Oh?? And here I was thinking it was because I went to too many metal concerts.",
    "No no no it must be the vaccine.. Interesting..",
    "microdosing seemed to work for me. then I got back on LDN",
    "Well my case was extra mild (no cough, almost no congestion, 3 days of elevated temp 99 to 100)",
    "As another commenter stated, \"mild \" is a pretty wide range - anyone who didn't get hospitallized.",
    "Why are so many people saying this cant be true?",
    "My gosh, y'all blaming some agenda are the reason why",
    "Downvotes, calling people names, we dont believe in science, blah blah blah.",
    "I found out I have MTHFR, slow COMT, as well as a gene",
    "---",
    "...",
    "!!!wow!!!",
    "U.S. data shows 1.5 million cases",
    "e-mail me at test@example.com, ok?",
    "rock'n'roll won't cure long-covid",
    "“Smart quotes” are punctuation — sort of…",
    "tabs\tand\nnewlines\r\ncount as whitespace",
    "'tis the season",
    "She said: 'no way'",
    "Nicotine rebalances NAD+ homeostasis",
    "$100 per month; worth it?",
    "#longcovid #recovery",
    "@someone thanks!",
    "[deleted]",
    "50/50 chance",
    "3:30pm appointment",
    "Wait... what?!",
    "A",
    "a b c d e f g h i j",
    "«guillemets» test",
    "over-the-counter meds (OTC) help",
    "it's 2023, isn't it?",
    "Covid-19 vaccines & boosters",
    "50-100 words, roughly",
    "Ex: vitamin D3 + K2",
    "(((nested)))",
    "end with comma,",
    ",start with comma",
    "Mixed: \"quotes\", (parens), [brackets]; {braces}!",
    "café naïve résumé",
]


def word_count(text):
    total = 0
    for chunk in text.split():
        m = CHUNK.match(chunk)
        lead, core, trail = m.group(1), m.group(2), m.group(3)
        total += len(lead) + len(trail) + (1 if core else 0)
    return total


def main(out):
    assert len(SENTENCES) == 50
    with open(out, "w", encoding="utf-8") as fh:
        for s in SENTENCES:
            fh.write(json.dumps({"text": s, "count": word_count(s)}, ensure_ascii=False) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "fixtures/oracles/word_count.jsonl")
