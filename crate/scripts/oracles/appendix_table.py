#!/usr/bin/env python3
"""Extracts the per-title stance table from a LaTeX source into a fixture.

Usage: appendix_table.py SOURCE OUT

Each data row is `title & comments & a% & f% & n% & a% & f% & n% \\`; the
bold closing row holds the printed weighted averages.
"""
import json
import re
import sys

ROW = re.compile(r"^(?P<title>.+?)&\s*(?P<n>\d+)\s*&" + r"\s*(\d+)\\%\s*&" * 5 + r"\s*(\d+)\\%\s*\\\\")
AVG = re.compile(r"Weighted average.*?" + r"\\textbf\{(\d+)\\%\}.*?" * 6)


def clean(title):
    title = title.replace("\\-", "-").replace("``", '"')
    return re.sub(r"\s+", " ", title).strip()


def main(source, out):
    text = open(source, encoding="utf-8").read()
    start = text.index("\\section{Appendix}")
    body = text[start : text.index("\\end{tabular}", start)]
    rows = []
    for line in body.splitlines():
        m = ROW.match(line.strip())
        if not m:
            continue
        pct = [int(x) for x in m.groups()[2:]]
        rows.append({
            "title_id": f"t{len(rows) + 1:02d}",
            "title": clean(m.group("title")),
            "comment_count": int(m.group("n")),
            "gold_pct": {"against": pct[0], "favor": pct[1], "none": pct[2]},
            "pred_pct": {"against": pct[3], "favor": pct[4], "none": pct[5]},
        })
    avg = [int(x) for x in AVG.search(body).groups()]
    assert len(rows) == 11, len(rows)
    fixture = {
        "rows": rows,
        "printed_weighted_average": {
            "gold": {"against": avg[0], "favor": avg[1], "none": avg[2]},
            "pred": {"against": avg[3], "favor": avg[4], "none": avg[5]},
        },
    }
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(fixture, fh, indent=1, ensure_ascii=False)
        fh.write("\n")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2])
