#!/usr/bin/env python3
"""End-to-end walkthrough on the synthetic demo corpus.

Trains a small ASGCN-DG, evaluates it, compares it against its w/o-GCN
ablation with a paired t-test, and exports one attention heatmap.
Finishes in a couple of minutes on a laptop CPU.
"""

from __future__ import annotations

import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from aspect_gcn.cli import main  # noqa: E402

OUT = REPO / "runs" / "demo"


def run(*argv) -> None:
    code = main([str(a) for a in argv])
    if code != 0:
        raise SystemExit(code)


if __name__ == "__main__":
    common = [
        "--data-root", REPO / "data",
        "train", "--dataset", "demo", "--seeds", "1,2",
        "--hidden", "32", "--embed-dim", "32",
        "--embeddings", REPO / "data" / "demo" / "embeddings.txt",
        "--epochs", "40", "--patience", "8",
    ]
    run(*common, "--out", OUT / "asgcn_dg")
    run(*common, "--no-gcn", "--out", OUT / "ablation_no_gcn")
    run(
        "--data-root", REPO / "data",
        "eval", "--checkpoint", OUT / "asgcn_dg" / "checkpoint_seed1.bin",
        "--dataset", "demo", "--out", OUT / "eval_dg",
    )
    run(
        "--data-root", REPO / "data",
        "eval", "--checkpoint", OUT / "ablation_no_gcn" / "checkpoint_seed1.bin",
        "--dataset", "demo", "--out", OUT / "eval_no_gcn",
        "--compare", OUT / "eval_dg" / "correctness.json",
    )
    run(
        "--data-root", REPO / "data",
        "visualize", "--dataset", "demo",
        "--checkpoint", OUT / "asgcn_dg" / "checkpoint_seed1.bin",
        "--index", "0", "1", "2", "--out", OUT / "heatmaps",
    )
    print(f"\nartifacts under {OUT}")
