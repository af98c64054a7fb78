"""Generates conlleval_parity.json.

Chunk counts come from the `conlleval` package (version 0.2, a line-by-line
port of conlleval.pl). Precision, recall and F1 are computed from those counts
with the conlleval.pl conventions: precision is 0 when nothing was predicted,
recall is 0 when there is no gold chunk.

    pip install conlleval==0.2
    python gen_conlleval_parity.py > ../conlleval_parity.json
"""

import json
import random

from conlleval import evaluate

LABELS = ["A", "Time", "from.Loc"]


def random_tags(rng, n):
    tags = []
    for _ in range(n):
        r = rng.random()
        if r < 0.4:
            tags.append("O")
        elif r < 0.7:
            tags.append("B-" + rng.choice(LABELS))
        else:
            # I- tags may be orphans or switch label mid-chunk
            tags.append("I-" + rng.choice(LABELS))
    return tags


def perturb(rng, tags):
    out = list(tags)
    for i in range(len(out)):
        if rng.random() < 0.25:
            out[i] = random_tags(rng, 1)[0]
    return out


def counts(gold, pred):
    lines = []
    for g_seq, p_seq in zip(gold, pred):
        for i, (g, p) in enumerate(zip(g_seq, p_seq)):
            lines.append(f"w{i} {g} {p}")
        lines.append("")
    stats = evaluate(lines)["overall"]["chunks"]["stats"]
    return stats["gold"], stats["pred"], stats["correct"]


def scores(gold, pred, correct):
    p = correct / pred if pred else 0.0
    r = correct / gold if gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def main():
    rng = random.Random(20240611)
    cases, reports = [], []
    # hand-picked edge cases first
    fixed = [
        ([["B-Time", "I-Time", "O"]], [["B-Time", "I-Time", "O"]]),
        ([["B-Time", "I-Time", "O"]], [["B-Time", "O", "O"]]),
        ([["I-Time", "I-Time", "O"]], [["B-Time", "I-Time", "O"]]),
        ([["B-Time", "B-Time"]], [["B-Time", "I-Time"]]),
        ([["B-A", "I-Time", "I-Time"]], [["B-A", "B-Time", "I-Time"]]),
        ([["O", "I-A", "O", "I-A"]], [["O", "I-A", "O", "B-A"]]),
        ([["B-A", "O"]], [["O", "O"]]),
        ([["O", "O"]], [["B-A", "I-A"]]),
    ]
    for gold, pred in fixed:
        cases.append({"gold": gold, "pred": pred})
    while len(cases) < 64:
        n_sent = rng.randint(1, 4)
        gold = [random_tags(rng, rng.randint(1, 9)) for _ in range(n_sent)]
        pred = [perturb(rng, g) if rng.random() < 0.7 else random_tags(rng, len(g)) for g in gold]
        g, p, c = counts(gold, pred)
        if g == 0 and p == 0:
            continue
        cases.append({"gold": gold, "pred": pred})

    for case in cases:
        g, p, c = counts(case["gold"], case["pred"])
        prec, rec, f1 = scores(g, p, c)
        reports.append({
            "precision": f"{prec:.4f}",
            "recall": f"{rec:.4f}",
            "f1": f"{f1:.4f}",
            "gold_chunks": g,
            "pred_chunks": p,
            "correct_chunks": c,
        })

    fixture = {
        "name": "conlleval_parity",
        "kind": "chunk_f1",
        "provenance": "DERIVED",
        "oracle": "conlleval 0.2 (Python port of conlleval.pl) chunk counts; "
                  "P/R/F with conlleval.pl zero conventions; see oracle/gen_conlleval_parity.py",
        "input": {"cases": cases},
        "expected": {"reports": reports},
    }
    print(json.dumps(fixture, indent=1))


if __name__ == "__main__":
    main()
