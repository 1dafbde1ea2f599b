"""Dataset ingestion, vocabulary, adjacency construction, and batching.

Two file formats are understood:

* raw triplet files: three lines per record; line 1 is the sentence with
  the literal marker ``$T$`` where the aspect occurs, line 2 the aspect
  term, line 3 the polarity as -1 / 0 / 1.
* parsed files: UTF-8 JSON lines, one record per line with exactly the
  fields ``tokens``, ``heads``, ``aspect_from``, ``aspect_to``, ``label``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .layers import EmbeddingTable, position_weights
from .autodiff import Tensor

CLASS_NAMES = ("negative", "neutral", "positive")
LABEL_TO_INDEX = {name: i for i, name in enumerate(CLASS_NAMES)}
POLARITY_TO_LABEL = {"-1": "negative", "0": "neutral", "1": "positive"}

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_INDEX = 0
UNK_INDEX = 1

BENCHMARK_DATASETS = ("twitter", "lap14", "rest14", "rest15", "rest16")

# Published per-split label counts (positive, neutral, negative) used to
# validate preprocessed corpora for the five benchmarks.
BENCHMARK_LABEL_COUNTS = {
    "twitter": {"train": (1561, 3127, 1560), "test": (173, 346, 173)},
    "lap14": {"train": (994, 464, 870), "test": (341, 169, 128)},
    "rest14": {"train": (2164, 637, 807), "test": (728, 196, 196)},
    "rest15": {"train": (912, 36, 256), "test": (326, 34, 182)},
    "rest16": {"train": (1240, 69, 439), "test": (469, 30, 117)},
}


class DataError(ValueError):
    """Raised for malformed records or invariant violations."""


@dataclass
class Example:
    """One labeled (sentence, aspect span, dependency heads) sample."""

    tokens: list[str]
    heads: list[int]
    aspect_from: int
    aspect_to: int
    label: int
    token_ids: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.tokens)

    @property
    def span(self) -> tuple[int, int]:
        return (self.aspect_from, self.aspect_to)

    def validate(self, index: int = -1) -> None:
        where = f"record {index}" if index >= 0 else "example"
        n = self.n
        if len(self.heads) != n:
            raise DataError(f"{where}: heads length {len(self.heads)} != {n} tokens")
        if not (0 <= self.aspect_from < self.aspect_to <= n):
            raise DataError(f"{where}: aspect span [{self.aspect_from}, {self.aspect_to}) invalid for length {n} (field aspect_from/aspect_to)")
        for i, head in enumerate(self.heads):
            if head == i:
                raise DataError(f"{where}: token {i} is its own head (field heads)")
            if head != -1 and not (0 <= head < n):
                raise DataError(f"{where}: head {head} of token {i} out of range (field heads)")
        if not (0 <= self.label < len(CLASS_NAMES)):
            raise DataError(f"{where}: label {self.label} invalid (field label)")


@dataclass
class AdjacencyMatrix:
    """n x n dependency adjacency with unit diagonal; entries in {0, 1}."""

    matrix: np.ndarray
    flavor: str  # "dg" (undirected graph) or "dt" (directed tree)


@dataclass
class Vocabulary:
    token_to_index: dict[str, int] = field(default_factory=dict)
    index_to_token: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.index_to_token:
            self.index_to_token = [PAD_TOKEN, UNK_TOKEN]
            self.token_to_index = {PAD_TOKEN: PAD_INDEX, UNK_TOKEN: UNK_INDEX}

    @property
    def size(self) -> int:
        return len(self.index_to_token)

    def add(self, token: str) -> int:
        idx = self.token_to_index.get(token)
        if idx is None:
            idx = len(self.index_to_token)
            self.token_to_index[token] = idx
            self.index_to_token.append(token)
        return idx

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self.token_to_index.get(t, UNK_INDEX) for t in tokens], dtype=np.int64)

    @classmethod
    def build(cls, corpora: Iterable[Iterable[Example]]) -> "Vocabulary":
        """Deterministic first-appearance ordering over the given corpora."""
        vocab = cls()
        for corpus in corpora:
            for example in corpus:
                for token in example.tokens:
                    vocab.add(token)
        return vocab


def attach_token_ids(examples: Sequence[Example], vocab: Vocabulary) -> None:
    for example in examples:
        example.token_ids = vocab.encode(example.tokens)


# ---------------------------------------------------------------------------
# raw triplet format


def load_raw_dataset(path) -> list[tuple[str, str, str]]:
    """Parse a raw triplet file into (sentence_with_marker, aspect, label) rows."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    # Trailing blank line from a final newline is not a record.
    while lines and not lines[-1].strip():
        lines.pop()
    if len(lines) % 3 != 0:
        raise DataError(f"{path}: line count {len(lines)} is not a multiple of 3")
    records = []
    for start in range(0, len(lines), 3):
        sentence = lines[start].strip()
        aspect = lines[start + 1].strip()
        polarity = lines[start + 2].strip().replace("−", "-")
        if "$T$" not in sentence:
            raise DataError(f"{path}: line {start + 1}: sentence is missing the $T$ marker")
        if not aspect:
            raise DataError(f"{path}: line {start + 2}: empty aspect term")
        label = POLARITY_TO_LABEL.get(polarity)
        if label is None:
            raise DataError(f"{path}: line {start + 3}: polarity {polarity!r} is not one of -1/0/1")
        records.append((sentence, aspect, label))
    return records


# ---------------------------------------------------------------------------
# parsed format


def load_parsed_dataset(path) -> list[Example]:
    examples = []
    with open(path, encoding="utf-8") as handle:
        for index, line in enumerate(handle):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"record {index}: invalid JSON ({exc})") from None
            missing = {"tokens", "heads", "aspect_from", "aspect_to", "label"} - record.keys()
            if missing:
                raise DataError(f"record {index}: missing fields {sorted(missing)}")
            label = record["label"]
            if label not in LABEL_TO_INDEX:
                raise DataError(f"record {index}: label {label!r} not in {CLASS_NAMES} (field label)")
            example = Example(
                tokens=[str(t) for t in record["tokens"]],
                heads=[int(h) for h in record["heads"]],
                aspect_from=int(record["aspect_from"]),
                aspect_to=int(record["aspect_to"]),
                label=LABEL_TO_INDEX[label],
            )
            example.validate(index)
            examples.append(example)
    return examples


def write_parsed_dataset(path, examples: Sequence[Example]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for example in examples:
            record = {
                "tokens": example.tokens,
                "heads": example.heads,
                "aspect_from": example.aspect_from,
                "aspect_to": example.aspect_to,
                "label": CLASS_NAMES[example.label],
            }
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def label_counts(examples: Sequence[Example]) -> tuple[int, int, int]:
    """Counts as (positive, neutral, negative)."""
    counts = [0, 0, 0]
    for example in examples:
        counts[example.label] += 1
    return (counts[LABEL_TO_INDEX["positive"]], counts[LABEL_TO_INDEX["neutral"]], counts[LABEL_TO_INDEX["negative"]])


def load_dataset_splits(data_root, name: str) -> tuple[list[Example], list[Example]]:
    root = Path(data_root) / name
    train_path = root / "train.jsonl"
    test_path = root / "test.jsonl"
    for p in (train_path, test_path):
        if not p.exists():
            raise FileNotFoundError(
                f"{p} not found; place preprocessed splits at {root}/train.jsonl and {root}/test.jsonl "
                "(run the corpus preprocessor on the raw triplet files to produce them)"
            )
    return load_parsed_dataset(train_path), load_parsed_dataset(test_path)


# ---------------------------------------------------------------------------
# adjacency construction


def build_adjacency(heads: Sequence[int], n: int, flavor: str) -> AdjacencyMatrix:
    """Adjacency with self-loops from per-token head indices.

    "dg" mirrors every dependency edge (undirected graph); "dt" keeps the
    directed form where each parent row aggregates its children.
    """
    if flavor not in ("dg", "dt"):
        raise ValueError(f"unknown adjacency flavor: {flavor!r}")
    matrix = np.eye(n)
    for child, head in enumerate(heads[:n]):
        if head == -1:
            continue
        if not (0 <= head < n):
            raise DataError(f"head index {head} out of range for length {n}")
        if flavor == "dg":
            matrix[child, head] = 1.0
            matrix[head, child] = 1.0
        else:
            matrix[head, child] = 1.0
    return AdjacencyMatrix(matrix=matrix, flavor=flavor)


# ---------------------------------------------------------------------------
# embeddings


def load_embeddings(path, vocab: Vocabulary, dim: int, oov_seed: int = 1, trainable: bool = True) -> tuple[EmbeddingTable, float]:
    """Load a textual word-vector file into an embedding table.

    Matched vocabulary rows are copied verbatim; out-of-vocabulary rows
    (and the unknown token) are drawn uniformly from [-0.25, 0.25]; the
    padding row stays zero. Returns the table and the coverage ratio
    matched / (|V| - 2) rounded to 4 decimals.
    """
    rng = np.random.default_rng(oov_seed)
    matrix = rng.uniform(-0.25, 0.25, size=(vocab.size, dim))
    matrix[PAD_INDEX] = 0.0
    matched = 0
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) <= dim:
                raise DataError(f"{path}: line {line_no}: expected a word plus {dim} values, got {len(parts)} fields")
            word = " ".join(parts[: len(parts) - dim])
            idx = vocab.token_to_index.get(word)
            if idx is None or idx in (PAD_INDEX, UNK_INDEX):
                continue
            try:
                matrix[idx] = [float(v) for v in parts[len(parts) - dim :]]
            except ValueError:
                raise DataError(f"{path}: line {line_no}: non-numeric embedding value") from None
            matched += 1
    denominator = max(vocab.size - 2, 1)
    coverage = round(matched / denominator, 4)
    return EmbeddingTable(Tensor(matrix, requires_grad=trainable), trainable=trainable), coverage


# ---------------------------------------------------------------------------
# batching


@dataclass
class Batch:
    token_ids: np.ndarray  # [B, n_max] int64, zero-padded
    lengths: np.ndarray  # [B] int64
    adjacency: np.ndarray | None  # [B, n_max, n_max], zero-padded rows/cols
    spans: list[tuple[int, int]]
    q: np.ndarray  # [B, n_max] position weights, zero on padding
    labels: np.ndarray  # [B] int64
    examples: list[Example]

    @property
    def size(self) -> int:
        return len(self.examples)

    @property
    def n_max(self) -> int:
        return self.token_ids.shape[1]

    @property
    def valid(self) -> np.ndarray:
        return (np.arange(self.n_max)[None, :] < self.lengths[:, None]).astype(np.float64)


def make_batch(examples: Sequence[Example], flavor: str | None) -> Batch:
    if not examples:
        raise ValueError("cannot batch zero examples")
    for example in examples:
        if example.token_ids is None:
            raise ValueError("examples must have token_ids attached before batching")
    n_max = max(e.n for e in examples)
    size = len(examples)
    token_ids = np.zeros((size, n_max), dtype=np.int64)
    lengths = np.zeros(size, dtype=np.int64)
    q = np.zeros((size, n_max))
    labels = np.zeros(size, dtype=np.int64)
    adjacency = np.zeros((size, n_max, n_max)) if flavor is not None else None
    spans = []
    for b, example in enumerate(examples):
        n = example.n
        token_ids[b, :n] = example.token_ids
        lengths[b] = n
        labels[b] = example.label
        spans.append(example.span)
        q[b, :n] = position_weights(n, example.aspect_from, example.aspect_to)
        if adjacency is not None:
            adjacency[b, :n, :n] = build_adjacency(example.heads, n, flavor).matrix
    return Batch(token_ids, lengths, adjacency, spans, q, labels, list(examples))


def make_batches(
    examples: Sequence[Example],
    batch_size: int,
    shuffle_seed: int | None = None,
    flavor: str | None = "dg",
) -> list[Batch]:
    """Deterministically shuffled, per-batch padded batches."""
    if not examples:
        raise ValueError("cannot batch an empty dataset")
    if batch_size < 1:
        raise ValueError(f"batch size must be >= 1, got {batch_size}")
    order = list(range(len(examples)))
    if shuffle_seed is not None:
        order = list(np.random.default_rng(shuffle_seed).permutation(len(examples)))
    ordered = [examples[i] for i in order]
    return [make_batch(ordered[i : i + batch_size], flavor) for i in range(0, len(ordered), batch_size)]
