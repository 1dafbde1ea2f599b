#!/usr/bin/env python3
"""Benchmark reproduction driver.

Runs the three-seed protocol on the five benchmark corpora with the
reference hyperparameters (300-d embeddings, hidden 300, lr 0.001,
L2 1e-5, batch 32, two graph layers) once the preprocessed splits and
the pretrained vectors are in place:

    data/<name>/train.jsonl        (name in: twitter lap14 rest14 rest15 rest16)
    data/<name>/test.jsonl
    data/glove.840B.300d.txt

Produce the splits from the raw triplet files with the preprocessor
package (see preprocess/README.md). This script checks what is present,
explains what is missing, and runs whatever it can; expect roughly
laptop-hours per dataset on CPU.
"""

from __future__ import annotations

import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from aspect_gcn.cli import main  # noqa: E402
from aspect_gcn.data import BENCHMARK_DATASETS  # noqa: E402

DATA = REPO / "data"
GLOVE = DATA / "glove.840B.300d.txt"


def have(dataset: str) -> bool:
    return (DATA / dataset / "train.jsonl").exists() and (DATA / dataset / "test.jsonl").exists()


if __name__ == "__main__":
    missing = [d for d in BENCHMARK_DATASETS if not have(d)]
    if missing:
        print("missing preprocessed splits for:", ", ".join(missing))
        print(__doc__)
    if not GLOVE.exists():
        print(f"missing pretrained vectors at {GLOVE}; runs would use random init and undershoot the reference numbers")
    runnable = [d for d in BENCHMARK_DATASETS if have(d)]
    if not runnable:
        sys.exit(1)
    for dataset in runnable:
        for model in ("asgcn-dg", "asgcn-dt"):
            args = [
                "--data-root", str(DATA),
                "train", "--dataset", dataset, "--model", model, "--seeds", "1,2,3",
                "--out", str(REPO / "runs" / dataset / model),
            ]
            if GLOVE.exists():
                args += ["--embeddings", str(GLOVE)]
            code = main(args)
            if code != 0:
                sys.exit(code)
