"""Corpus preparation for aspect-level sentiment datasets."""

from .pipeline import ParsedRecord, filter_conflicts, parse_corpus

__all__ = ["ParsedRecord", "filter_conflicts", "parse_corpus"]

__version__ = "0.1.0"
