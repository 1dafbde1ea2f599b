#!/usr/bin/env python3
"""Generate the synthetic demo corpus under data/demo/.

The corpus is small (a few hundred records) but deliberately hostile to
bag-of-words shortcuts: contrast sentences carry two aspects with
opposite labels, negation and subjunctive constructions flip or override
the nearby adjective, and a relative-clause template separates the
aspect from its predicate. Dependency heads are hand-specified per
template, standing in for parser output.

Everything is deterministic: rerunning this script reproduces the files
byte for byte.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from aspect_gcn.data import CLASS_NAMES, Example, write_parsed_dataset  # noqa: E402

ASPECTS = ["food", "service", "staff", "pizza", "wine", "menu", "battery", "screen", "keyboard", "laptop", "price", "decor"]
POSITIVE = ["great", "excellent", "tasty", "friendly", "fast", "reliable", "bright", "delicious", "pleasant", "sturdy"]
NEGATIVE = ["terrible", "dreadful", "slow", "rude", "dim", "awful", "noisy", "flimsy", "bland", "overpriced"]
NEUTRAL = ["average", "ordinary", "unremarkable", "typical"]

LABEL = {"negative": 0, "neutral": 1, "positive": 2}


def polarity(adjective: str) -> int:
    if adjective in POSITIVE:
        return LABEL["positive"]
    if adjective in NEGATIVE:
        return LABEL["negative"]
    return LABEL["neutral"]


def flipped(adjective: str) -> int:
    p = polarity(adjective)
    if p == LABEL["positive"]:
        return LABEL["negative"]
    if p == LABEL["negative"]:
        return LABEL["positive"]
    return LABEL["neutral"]


def simple(aspect, adjective):
    tokens = ["the", aspect, "was", adjective, "."]
    heads = [1, 2, -1, 2, 2]
    return [(tokens, heads, 1, 2, polarity(adjective))]


def intensified(aspect, adjective):
    tokens = ["the", aspect, "was", "really", adjective, "."]
    heads = [1, 2, -1, 4, 2, 2]
    return [(tokens, heads, 1, 2, polarity(adjective))]


def negated(aspect, adjective):
    tokens = ["the", aspect, "was", "not", adjective, "."]
    heads = [1, 2, -1, 4, 2, 2]
    return [(tokens, heads, 1, 2, flipped(adjective))]


def subjunctive(aspect, adjective):
    # Only used with positive adjectives: wishing for more of a virtue
    # implies its current absence.
    tokens = ["the", aspect, "should", "be", "more", adjective, "."]
    heads = [1, 3, 3, -1, 5, 3, 3]
    return [(tokens, heads, 1, 2, LABEL["negative"])]


def relative_clause(aspect, adjective):
    tokens = ["the", aspect, "my", "friend", "ordered", "was", adjective, "."]
    heads = [1, 5, 3, 4, 1, -1, 5, 5]
    return [(tokens, heads, 1, 2, polarity(adjective))]


def contrast(aspect_a, adjective_a, aspect_b, adjective_b):
    tokens = ["the", aspect_a, "was", adjective_a, "but", "the", aspect_b, "was", adjective_b, "."]
    heads = [1, 2, -1, 2, 2, 6, 7, 2, 7, 2]
    return [
        (tokens, heads, 1, 2, polarity(adjective_a)),
        (tokens, heads, 6, 7, polarity(adjective_b)),
    ]


def coordinated(aspect_a, aspect_b, adjective):
    tokens = ["the", aspect_a, "and", "the", aspect_b, "were", adjective, "."]
    heads = [1, 5, 1, 4, 1, -1, 5, 5]
    label = polarity(adjective)
    return [(tokens, heads, 1, 2, label), (tokens, heads, 4, 5, label)]


def triple(a1, j1, a2, j2, a3, j3):
    tokens = ["the", a1, "was", j1, ",", "the", a2, "was", j2, "and", "the", a3, "was", j3, "."]
    heads = [1, 2, -1, 2, 2, 6, 7, 2, 7, 2, 11, 12, 2, 12, 2]
    return [
        (tokens, heads, 1, 2, polarity(j1)),
        (tokens, heads, 6, 7, polarity(j2)),
        (tokens, heads, 11, 12, polarity(j3)),
    ]


def generate(seed: int = 20240613):
    rng = np.random.default_rng(seed)
    adjectives = POSITIVE + NEGATIVE + NEUTRAL
    records = []

    def pick(pool, k):
        return [pool[i] for i in rng.choice(len(pool), size=k, replace=False)]

    for aspect in ASPECTS:
        for adjective in adjectives:
            records += simple(aspect, adjective)
    for _ in range(90):
        (aspect,) = pick(ASPECTS, 1)
        (adjective,) = pick(adjectives, 1)
        records += intensified(aspect, adjective)
    for _ in range(110):
        (aspect,) = pick(ASPECTS, 1)
        (adjective,) = pick(POSITIVE + NEGATIVE, 1)
        records += negated(aspect, adjective)
    for _ in range(60):
        (aspect,) = pick(ASPECTS, 1)
        (adjective,) = pick(POSITIVE, 1)
        records += subjunctive(aspect, adjective)
    for _ in range(80):
        (aspect,) = pick(ASPECTS, 1)
        (adjective,) = pick(adjectives, 1)
        records += relative_clause(aspect, adjective)
    for _ in range(120):
        aspect_a, aspect_b = pick(ASPECTS, 2)
        adjective_a = pick(POSITIVE, 1)[0]
        adjective_b = pick(NEGATIVE, 1)[0]
        if rng.random() < 0.5:
            adjective_a, adjective_b = adjective_b, adjective_a
        records += contrast(aspect_a, adjective_a, aspect_b, adjective_b)
    for _ in range(40):
        aspect_a, aspect_b = pick(ASPECTS, 2)
        (adjective,) = pick(adjectives, 1)
        records += coordinated(aspect_a, aspect_b, adjective)
    for _ in range(25):
        a1, a2, a3 = pick(ASPECTS, 3)
        j1, j2, j3 = pick(adjectives, 3)
        records += triple(a1, j1, a2, j2, a3, j3)

    # Deduplicate identical (sentence, span) pairs, keeping first labels.
    seen = set()
    unique = []
    for tokens, heads, frm, to, label in records:
        key = (tuple(tokens), frm, to)
        if key in seen:
            continue
        seen.add(key)
        unique.append(Example(tokens=list(tokens), heads=list(heads), aspect_from=frm, aspect_to=to, label=label))

    order = rng.permutation(len(unique))
    shuffled = [unique[i] for i in order]
    split = int(round(len(shuffled) * 0.8))
    return shuffled[:split], shuffled[split:]


def write_raw(path: Path, examples) -> None:
    lines = []
    for example in examples:
        sentence = example.tokens[: example.aspect_from] + ["$T$"] + example.tokens[example.aspect_to :]
        lines.append(" ".join(sentence))
        lines.append(" ".join(example.tokens[example.aspect_from : example.aspect_to]))
        lines.append(str({0: -1, 1: 0, 2: 1}[example.label]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_embeddings(path: Path, dim: int = 32, seed: int = 97) -> None:
    rng = np.random.default_rng(seed)
    words = sorted(set(ASPECTS + POSITIVE + NEGATIVE + NEUTRAL + ["the", "was", "were", "not", "should", "be", "more", "really", "and", "but", ",", "."]))
    # Leave a couple of words uncovered to exercise the OOV path.
    uncovered = {"typical", "decor"}
    with open(path, "w", encoding="utf-8") as handle:
        for word in words:
            if word in uncovered:
                continue
            vector = rng.normal(0.0, 0.3, size=dim)
            handle.write(word + " " + " ".join(f"{v:.6f}" for v in vector) + "\n")


def main() -> None:
    out_dir = Path(__file__).resolve().parent.parent / "data" / "demo"
    out_dir.mkdir(parents=True, exist_ok=True)
    train_set, test_set = generate()
    write_parsed_dataset(out_dir / "train.jsonl", train_set)
    write_parsed_dataset(out_dir / "test.jsonl", test_set)
    write_raw(out_dir / "train.raw", train_set)
    write_raw(out_dir / "test.raw", test_set)
    write_embeddings(out_dir / "embeddings.txt")

    def counts(examples):
        c = {name: 0 for name in CLASS_NAMES}
        for e in examples:
            c[CLASS_NAMES[e.label]] += 1
        return c

    meta = {
        "corpus": "demo (synthetic)",
        "train_records": len(train_set),
        "test_records": len(test_set),
        "train_label_counts": counts(train_set),
        "test_label_counts": counts(test_set),
        "generator": "scripts/make_demo_corpus.py",
        "heads": "hand-specified per template",
    }
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {len(train_set)} train / {len(test_set)} test records to {out_dir}")


if __name__ == "__main__":
    main()
