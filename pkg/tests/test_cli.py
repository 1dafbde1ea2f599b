"""Command-line behavior: exit codes, artifacts, determinism."""

import json
from html.parser import HTMLParser

import numpy as np
import pytest

from aspect_gcn.cli import main, render_heatmap, sentence_group_sizes
from aspect_gcn.data import Example

from conftest import DATA_ROOT

FAST = [
    "--hidden", "6",
    "--embed-dim", "6",
    "--batch-size", "32",
    "--epochs", "2",
    "--patience", "5",
]


def run(*argv) -> int:
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("trained")
    code = run("--data-root", DATA_ROOT, "train", "--dataset", "demo", "--seeds", "1", "--out", out, *FAST)
    assert code == 0
    return out


class TestTrain:
    def test_artifacts_written(self, trained):
        names = {p.name for p in trained.iterdir()}
        assert {"checkpoint_seed1.bin", "history_seed1.jsonl", "report_seed1.json", "aggregate.json", "manifest.json"} <= names

    def test_manifest_covers_artifacts_with_hashes(self, trained):
        manifest = json.loads((trained / "manifest.json").read_text())
        listed = {a["path"] for a in manifest["artifacts"]}
        on_disk = {str(p.relative_to(trained)) for p in trained.rglob("*") if p.is_file() and p.name != "manifest.json"}
        assert listed == on_disk
        for artifact in manifest["artifacts"]:
            assert len(artifact["sha256"]) == 64

    def test_multiple_seeds_aggregate(self, tmp_path):
        out = tmp_path / "multi"
        assert run("--data-root", DATA_ROOT, "train", "--dataset", "demo", "--seeds", "1,2", "--out", out, *FAST, "--epochs", "1") == 0
        aggregate = json.loads((out / "aggregate.json").read_text())
        assert len(aggregate["accuracies"]) == 2
        assert aggregate["mean_accuracy"] == pytest.approx(float(np.mean(aggregate["accuracies"])))

    def test_unknown_dataset_usage_error(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            run("--data-root", DATA_ROOT, "train", "--dataset", "nope", "--out", "/tmp/x")
        assert excinfo.value.code == 2

    def test_unknown_flag_rejected(self):
        with pytest.raises(SystemExit) as excinfo:
            run("train", "--dataset", "demo", "--out", "/tmp/x", "--bogus-flag")
        assert excinfo.value.code == 2

    def test_missing_dataset_files_runtime_error(self, tmp_path, capsys):
        # rest14 is a known name, but no files exist under this root.
        assert run("--data-root", tmp_path, "train", "--dataset", "rest14", "--out", tmp_path / "o") == 1
        assert "train.jsonl" in capsys.readouterr().err

    def test_ablation_flags_accepted(self, tmp_path):
        out = tmp_path / "ablation"
        code = run(
            "--data-root", DATA_ROOT, "train", "--dataset", "demo", "--seeds", "1", "--out", out,
            *FAST, "--epochs", "1", "--no-gcn",
        )
        assert code == 0
        report = json.loads((out / "report_seed1.json").read_text())
        assert report["config"]["use_gcn"] is False

    def test_deterministic_payloads(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert run("--data-root", DATA_ROOT, "train", "--dataset", "demo", "--seeds", "3", "--out", out, *FAST, "--epochs", "1") == 0
            outs.append(out)
        for filename in ("checkpoint_seed3.bin", "report_seed3.json", "aggregate.json"):
            assert (outs[0] / filename).read_bytes() == (outs[1] / filename).read_bytes()


class TestEval:
    def test_eval_reproduces_training_metrics(self, trained, tmp_path, capsys):
        report_at_train = json.loads((trained / "report_seed1.json").read_text())["report"]
        out = tmp_path / "eval"
        code = run(
            "--data-root", DATA_ROOT, "eval",
            "--checkpoint", trained / "checkpoint_seed1.bin",
            "--dataset", "demo", "--out", out,
        )
        assert code == 0
        evaluated = json.loads((out / "report.json").read_text())["report"]
        assert evaluated == report_at_train

    def test_compare_runs_t_test(self, trained, tmp_path, capsys):
        out = tmp_path / "e1"
        assert run("--data-root", DATA_ROOT, "eval", "--checkpoint", trained / "checkpoint_seed1.bin", "--dataset", "demo", "--out", out) == 0
        correctness = out / "correctness.json"
        flipped = json.loads(correctness.read_text())
        flipped["correct"] = [1 - int(c) for c in flipped["correct"]]
        other = tmp_path / "other.json"
        other.write_text(json.dumps(flipped))
        capsys.readouterr()
        assert run("--data-root", DATA_ROOT, "eval", "--checkpoint", trained / "checkpoint_seed1.bin", "--dataset", "demo", "--compare", other) == 0
        assert "paired t-test" in capsys.readouterr().out

    def test_corrupt_checkpoint_magic(self, tmp_path, capsys):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"JUNKJUNK" + b"\x00" * 64)
        assert run("--data-root", DATA_ROOT, "eval", "--checkpoint", bad, "--dataset", "demo") == 1
        assert "magic" in capsys.readouterr().err

    def test_missing_checkpoint(self, tmp_path, capsys):
        assert run("--data-root", DATA_ROOT, "eval", "--checkpoint", tmp_path / "none.bin", "--dataset", "demo") == 1
        assert "train one first" in capsys.readouterr().err


class TestSweep:
    def test_single_layer_degenerate_table(self, tmp_path):
        out = tmp_path / "sweep"
        code = run(
            "--data-root", DATA_ROOT, "sweep-layers", "--dataset", "demo", "--seeds", "1",
            "--out", out, *FAST, "--epochs", "1", "--layers", "1",
        )
        assert code == 0
        lines = (out / "sweep.tsv").read_text().strip().splitlines()
        assert lines[0] == "layers\tmean_accuracy\tmean_macro_f1"
        assert len(lines) == 2 and lines[1].startswith("1\t")

    def test_multi_layer_rows(self, tmp_path):
        out = tmp_path / "sweep2"
        code = run(
            "--data-root", DATA_ROOT, "sweep-layers", "--dataset", "demo", "--seeds", "1",
            "--out", out, *FAST, "--epochs", "1", "--layers", "1,2",
        )
        assert code == 0
        rows = json.loads((out / "sweep.json").read_text())
        assert [r["layers"] for r in rows] == [1, 2]


class TestAnalyzeAspects:
    def test_sentence_group_sizes(self):
        shared = ["the", "food", "was", "great", "but", "the", "menu", "was", "bad", "."]
        examples = [
            Example(tokens=shared, heads=[1, 2, -1, 2, 2, 6, 7, 2, 7, 2], aspect_from=1, aspect_to=2, label=2),
            Example(tokens=shared, heads=[1, 2, -1, 2, 2, 6, 7, 2, 7, 2], aspect_from=6, aspect_to=7, label=0),
            Example(tokens=["ok", "."], heads=[-1, 0], aspect_from=0, aspect_to=1, label=1),
        ]
        sizes = sentence_group_sizes(examples)
        assert sizes[tuple(shared)] == 2
        assert sizes[("ok", ".")] == 1

    def test_groups_partition_retained_samples(self, trained, tmp_path, demo_splits):
        out = tmp_path / "groups"
        code = run(
            "--data-root", DATA_ROOT, "analyze-aspects", "--dataset", "demo",
            "--checkpoint", trained / "checkpoint_seed1.bin", "--split", "train", "--out", out,
        )
        assert code == 0
        rows = json.loads((out / "aspect_groups.json").read_text())
        train_set, _, _ = demo_splits
        sizes = sentence_group_sizes(train_set)
        retained = sum(1 for e in train_set if sizes[tuple(e.tokens)] <= 7)
        assert sum(r["samples"] for r in rows) == retained
        assert all(r["aspect_count"] <= 7 for r in rows)


class _TokenCollector(HTMLParser):
    def __init__(self):
        super().__init__()
        self.spans = []
        self._in_span = False
        self._style = ""

    def handle_starttag(self, tag, attrs):
        if tag == "span":
            self._in_span = True
            self._style = dict(attrs).get("style", "")

    def handle_data(self, data):
        if self._in_span:
            self.spans.append((data, self._style))

    def handle_endtag(self, tag):
        if tag == "span":
            self._in_span = False


class TestVisualize:
    def test_render_normalizes_to_max(self):
        page = render_heatmap(["a", "b", "c"], [1.0, 0.0, 0.0], (1, 2), "positive", "negative")
        parser = _TokenCollector()
        parser.feed(page)
        assert [s[0] for s in parser.spans] == ["a", "b", "c"]
        assert "rgba(255, 140, 0, 1.0000)" in parser.spans[0][1]
        assert "rgba(255, 140, 0, 0.0000)" in parser.spans[1][1]
        assert "http" not in page  # self-contained, no network fetches

    def test_cli_writes_valid_heatmap(self, trained, tmp_path, demo_splits):
        out = tmp_path / "viz"
        code = run(
            "--data-root", DATA_ROOT, "visualize", "--dataset", "demo",
            "--checkpoint", trained / "checkpoint_seed1.bin", "--index", "0", "--out", out,
        )
        assert code == 0
        page = (out / "heatmap_0.html").read_text()
        parser = _TokenCollector()
        parser.feed(page)
        _, test_set, _ = demo_splits
        assert [s[0] for s in parser.spans] == test_set[0].tokens
        assert "prediction:" in page and "gold:" in page

    def test_index_out_of_range(self, trained, tmp_path, capsys):
        code = run(
            "--data-root", DATA_ROOT, "visualize", "--dataset", "demo",
            "--checkpoint", trained / "checkpoint_seed1.bin", "--index", "99999", "--out", tmp_path / "v",
        )
        assert code == 1
        assert "out of range" in capsys.readouterr().err
