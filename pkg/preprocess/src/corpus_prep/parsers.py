"""Tokenization and dependency-head backends.

Two backends exist: a spaCy-based one (the reference; used automatically
when spacy and an English model are installed, with the exact version
recorded in the output metadata) and a deterministic rule-based fallback
that needs no third-party model. Both return the same structure: tokens
with character offsets plus one head index per token (-1 for the root),
guaranteed to satisfy heads[i] != i.
"""

from __future__ import annotations

import re
from dataclasses import dataclass


@dataclass
class ParsedToken:
    text: str
    start: int  # character offset in the source sentence
    end: int
    head: int  # token index, -1 for root


class ParserBackend:
    name = "abstract"
    version = "0"

    def parse(self, sentence: str) -> list[ParsedToken]:
        raise NotImplementedError


_TOKEN_RE = re.compile(r"\w+(?:'\w+)?|[^\w\s]", re.UNICODE)

DETERMINERS = {"the", "a", "an", "my", "your", "his", "her", "its", "our", "their", "this", "that", "these", "those"}
VERBS = {
    "is", "are", "was", "were", "be", "been", "being", "am",
    "do", "does", "did", "has", "have", "had",
    "should", "would", "could", "can", "will", "may", "might", "must",
    "ordered", "enjoy", "enjoyed", "like", "liked", "love", "loved", "hate", "hated",
    "recommend", "recommended", "works", "worked", "looks", "looked", "seems", "seemed",
}
CONJUNCTIONS = {"and", "but", "or", "nor", "so", "yet"}


def tokenize_with_offsets(sentence: str) -> list[tuple[str, int, int]]:
    return [(m.group(0), m.start(), m.end()) for m in _TOKEN_RE.finditer(sentence)]


class HeuristicParser(ParserBackend):
    """Deterministic rule-based head assignment.

    Not a linguistic parser: it exists so the pipeline runs end to end
    where spaCy cannot be installed. Rules, applied per token:
    punctuation and conjunctions attach to the root; determiners attach
    forward to the next word; other words attach to the nearest verb-ish
    token, falling back to the previous word. The first verb-ish token
    (or the first token) is the root.
    """

    name = "heuristic"
    version = "heuristic-1"

    def parse(self, sentence: str) -> list[ParsedToken]:
        spans = tokenize_with_offsets(sentence)
        n = len(spans)
        if n == 0:
            return []
        lowered = [t.lower() for t, _, _ in spans]
        is_word = [bool(re.match(r"\w", t)) for t, _, _ in spans]
        verb_positions = [i for i, t in enumerate(lowered) if t in VERBS]
        root = verb_positions[0] if verb_positions else 0

        def nearest_verb(i: int) -> int:
            candidates = [v for v in verb_positions if v != i]
            if not candidates:
                return root
            return min(candidates, key=lambda v: (abs(v - i), v))

        heads = []
        for i in range(n):
            if i == root:
                heads.append(-1)
            elif not is_word[i] or lowered[i] in CONJUNCTIONS:
                heads.append(root)
            elif lowered[i] in DETERMINERS and i + 1 < n and is_word[i + 1]:
                heads.append(i + 1)
            elif verb_positions:
                heads.append(nearest_verb(i))
            else:
                heads.append(i - 1 if i > 0 else (1 if n > 1 else -1))
        # A non-root token must never point at itself.
        for i, head in enumerate(heads):
            if head == i:
                heads[i] = root if i != root else -1
        return [ParsedToken(t, s, e, h) for (t, s, e), h in zip(spans, heads)]


class SpacyParser(ParserBackend):
    """spaCy-backed tokenization and dependency parsing."""

    name = "spacy"

    def __init__(self, model: str = "en_core_web_sm"):
        import spacy  # deferred so the fallback works without it

        self._nlp = spacy.load(model, disable=["ner", "lemmatizer"])
        self.version = f"spacy-{spacy.__version__}/{model}-{self._nlp.meta.get('version', '?')}"

    def parse(self, sentence: str) -> list[ParsedToken]:
        doc = self._nlp(sentence)
        return [
            ParsedToken(
                text=token.text,
                start=token.idx,
                end=token.idx + len(token.text),
                head=-1 if token.head.i == token.i else token.head.i,
            )
            for token in doc
        ]


def default_backend() -> ParserBackend:
    """The spaCy backend when importable, otherwise the heuristic one."""
    try:
        return SpacyParser()
    except Exception:
        return HeuristicParser()
