"""preprocess --in RAW --out PARSED [--dataset NAME] [--backend heuristic|spacy]"""

from __future__ import annotations

import argparse
import sys

from .parsers import HeuristicParser, SpacyParser, default_backend
from .pipeline import PreprocessError, parse_corpus


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="preprocess", description=__doc__)
    parser.add_argument("--in", dest="raw_path", required=True, help="raw triplet file")
    parser.add_argument("--out", dest="out_path", required=True, help="parsed JSON-lines output")
    parser.add_argument("--dataset", default=None, help="dataset name; rest15/rest16 enable conflict filtering")
    parser.add_argument("--backend", choices=("auto", "heuristic", "spacy"), default="auto")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.backend == "heuristic":
            backend = HeuristicParser()
        elif args.backend == "spacy":
            backend = SpacyParser()
        else:
            backend = default_backend()
        counts = parse_corpus(args.raw_path, args.out_path, dataset=args.dataset, backend=backend)
    except (PreprocessError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ImportError as exc:
        print(f"error: requested backend unavailable: {exc}", file=sys.stderr)
        return 1
    print(
        f"{counts.records_out} records written ({counts.records_in} read, "
        f"{counts.removed_conflicts} conflict-filtered, {counts.skipped_unalignable} unalignable; "
        f"backend {backend.name} {backend.version})"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
