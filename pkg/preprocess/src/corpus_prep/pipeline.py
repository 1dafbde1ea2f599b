"""Raw triplet files -> parsed JSON lines plus a metadata sidecar.

Input grammar (three lines per record): the sentence with the literal
``$T$`` marker at the aspect position, the aspect term, and the polarity
as -1 / 0 / 1. Output: one JSON object per line with the fields tokens,
heads, aspect_from, aspect_to, label, followed by ``<out>.meta.json``
recording the parser backend, its pinned version, and all counts.

The aspect span is located by character-offset alignment: the marker's
offset in the substituted sentence delimits the aspect characters, and
the span covers exactly the tokens overlapping that range. This stays
correct when the aspect string also occurs elsewhere in the sentence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .parsers import ParserBackend, default_backend

MARKER = "$T$"
POLARITY_TO_LABEL = {"-1": "negative", "0": "neutral", "1": "positive"}
CONFLICT_FILTERED_DATASETS = {"rest15", "rest16"}


class PreprocessError(ValueError):
    pass


@dataclass
class ParsedRecord:
    tokens: list[str]
    heads: list[int]
    aspect_from: int
    aspect_to: int
    label: str

    def validate(self) -> None:
        n = len(self.tokens)
        if len(self.heads) != n:
            raise PreprocessError("token/head length mismatch")
        if not (0 <= self.aspect_from < self.aspect_to <= n):
            raise PreprocessError(f"aspect span [{self.aspect_from}, {self.aspect_to}) invalid for {n} tokens")
        for i, head in enumerate(self.heads):
            if head == i or (head != -1 and not 0 <= head < n):
                raise PreprocessError(f"bad head {head} at token {i}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "tokens": self.tokens,
                "heads": self.heads,
                "aspect_from": self.aspect_from,
                "aspect_to": self.aspect_to,
                "label": self.label,
            },
            ensure_ascii=False,
        )


@dataclass
class RawRecord:
    sentence_with_marker: str
    aspect: str
    label: str


def read_raw(path) -> list[RawRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if len(lines) % 3 != 0:
        raise PreprocessError(f"{path}: line count {len(lines)} is not a multiple of 3")
    records = []
    for start in range(0, len(lines), 3):
        sentence = lines[start].strip()
        aspect = lines[start + 1].strip()
        polarity = lines[start + 2].strip().replace("−", "-")
        if MARKER not in sentence:
            raise PreprocessError(f"{path}: line {start + 1}: missing {MARKER} marker")
        if polarity not in POLARITY_TO_LABEL:
            raise PreprocessError(f"{path}: line {start + 3}: polarity {polarity!r} not in -1/0/1")
        records.append(RawRecord(sentence, aspect, POLARITY_TO_LABEL[polarity]))
    return records


def filter_conflicts(records: list[RawRecord], dataset: str | None) -> tuple[list[RawRecord], int]:
    """Drop aspect-free records and (sentence, target) groups carrying
    more than one polarity. Applied to the restaurant 15/16 style sets."""
    if dataset is None or dataset.lower() not in CONFLICT_FILTERED_DATASETS:
        return records, 0
    kept = [r for r in records if r.aspect and r.aspect.upper() != "NULL"]
    labels_by_group: dict[tuple[str, str], set[str]] = {}
    for record in kept:
        key = (record.sentence_with_marker.replace(MARKER, record.aspect), record.aspect.lower())
        labels_by_group.setdefault(key, set()).add(record.label)
    filtered = [
        r
        for r in kept
        if len(labels_by_group[(r.sentence_with_marker.replace(MARKER, r.aspect), r.aspect.lower())]) == 1
    ]
    return filtered, len(records) - len(filtered)


def align_aspect(record: RawRecord, backend: ParserBackend) -> ParsedRecord | None:
    """Substitute the marker, parse the full sentence once, and map the
    aspect back to a token span by character offsets. None if no token
    overlaps the aspect characters."""
    marker_at = record.sentence_with_marker.index(MARKER)
    sentence = record.sentence_with_marker.replace(MARKER, record.aspect)
    aspect_start = marker_at
    aspect_end = marker_at + len(record.aspect)
    parsed = backend.parse(sentence)
    if not parsed:
        return None
    overlapping = [i for i, t in enumerate(parsed) if t.start < aspect_end and t.end > aspect_start]
    if not overlapping:
        return None
    return ParsedRecord(
        tokens=[t.text for t in parsed],
        heads=[t.head for t in parsed],
        aspect_from=overlapping[0],
        aspect_to=overlapping[-1] + 1,
        label=record.label,
    )


@dataclass
class Counts:
    records_in: int
    records_out: int
    removed_conflicts: int
    skipped_unalignable: int


def parse_corpus(raw_path, out_path, dataset: str | None = None, backend: ParserBackend | None = None) -> Counts:
    backend = backend if backend is not None else default_backend()
    raw = read_raw(raw_path)
    filtered, removed = filter_conflicts(raw, dataset)
    skipped = 0
    lines = []
    for record in filtered:
        parsed = align_aspect(record, backend)
        if parsed is None:
            skipped += 1
            continue
        parsed.validate()
        lines.append(parsed.to_json())
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    counts = Counts(
        records_in=len(raw),
        records_out=len(lines),
        removed_conflicts=removed,
        skipped_unalignable=skipped,
    )
    meta = {
        "source": str(raw_path),
        "dataset": dataset,
        "parser": backend.name,
        "parser_version": backend.version,
        "tokenizer": backend.name,
        "records_in": counts.records_in,
        "records_out": counts.records_out,
        "removed_conflicts": counts.removed_conflicts,
        "skipped_unalignable": counts.skipped_unalignable,
    }
    Path(str(out_path) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return counts
