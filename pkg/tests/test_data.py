"""Ingestion formats, vocabulary, adjacency laws, embeddings, batching."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aspect_gcn import data as dp
from aspect_gcn.layers import position_weights

from conftest import DATA_ROOT


def example(tokens, heads, frm, to, label=2):
    return dp.Example(tokens=tokens, heads=heads, aspect_from=frm, aspect_to=to, label=label)


@st.composite
def head_arrays(draw, max_n=12):
    n = draw(st.integers(min_value=1, max_value=max_n))
    heads = []
    for i in range(n):
        candidates = [-1] + [j for j in range(n) if j != i]
        heads.append(draw(st.sampled_from(candidates)))
    return heads


class TestRawFormat:
    def test_parse_and_polarity_mapping(self, tmp_path):
        raw = tmp_path / "x.raw"
        raw.write_text(
            "great $T$ but the service was dreadful !\nfood\n1\n"
            "great food but the $T$ was dreadful !\nservice\n-1\n"
            "the $T$ was there .\nmenu\n0\n",
            encoding="utf-8",
        )
        records = dp.load_raw_dataset(raw)
        assert records == [
            ("great $T$ but the service was dreadful !", "food", "positive"),
            ("great food but the $T$ was dreadful !", "service", "negative"),
            ("the $T$ was there .", "menu", "neutral"),
        ]

    def test_bad_polarity_names_line(self, tmp_path):
        raw = tmp_path / "bad.raw"
        raw.write_text("the $T$ was fine .\nfood\n2\n", encoding="utf-8")
        with pytest.raises(dp.DataError, match="line 3"):
            dp.load_raw_dataset(raw)

    def test_missing_marker(self, tmp_path):
        raw = tmp_path / "bad.raw"
        raw.write_text("the food was fine .\nfood\n1\n", encoding="utf-8")
        with pytest.raises(dp.DataError, match=r"\$T\$"):
            dp.load_raw_dataset(raw)

    def test_truncated_record(self, tmp_path):
        raw = tmp_path / "bad.raw"
        raw.write_text("the $T$ was fine .\nfood\n", encoding="utf-8")
        with pytest.raises(dp.DataError, match="multiple of 3"):
            dp.load_raw_dataset(raw)


class TestParsedFormat:
    def test_round_trip(self, tmp_path):
        examples = [
            example(["a", "b"], [-1, 0], 0, 1, 0),
            example(["x", "y", "z"], [1, -1, 1], 1, 3, 2),
        ]
        path = tmp_path / "out.jsonl"
        dp.write_parsed_dataset(path, examples)
        loaded = dp.load_parsed_dataset(path)
        assert [e.tokens for e in loaded] == [e.tokens for e in examples]
        assert [e.heads for e in loaded] == [e.heads for e in examples]
        assert [(e.aspect_from, e.aspect_to, e.label) for e in loaded] == [(0, 1, 0), (1, 3, 2)]

    def test_empty_aspect_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps({"tokens": ["a"], "heads": [-1], "aspect_from": 0, "aspect_to": 0, "label": "neutral"}) + "\n")
        with pytest.raises(dp.DataError, match="record 0.*aspect"):
            dp.load_parsed_dataset(path)

    def test_self_head_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps({"tokens": ["a", "b"], "heads": [-1, 1], "aspect_from": 0, "aspect_to": 1, "label": "neutral"}) + "\n")
        with pytest.raises(dp.DataError, match="record 0.*own head"):
            dp.load_parsed_dataset(path)

    def test_unknown_label_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps({"tokens": ["a"], "heads": [-1], "aspect_from": 0, "aspect_to": 1, "label": "mixed"}) + "\n")
        with pytest.raises(dp.DataError, match="label"):
            dp.load_parsed_dataset(path)

    def test_missing_field_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps({"tokens": ["a"], "heads": [-1], "aspect_from": 0, "label": "neutral"}) + "\n")
        with pytest.raises(dp.DataError, match="aspect_to"):
            dp.load_parsed_dataset(path)


class TestVocabulary:
    def test_reserved_indices(self):
        vocab = dp.Vocabulary()
        assert vocab.token_to_index[dp.PAD_TOKEN] == 0
        assert vocab.token_to_index[dp.UNK_TOKEN] == 1

    def test_deterministic_first_appearance_order(self):
        corpus = [example(["b", "a"], [-1, 0], 0, 1), example(["a", "c"], [-1, 0], 0, 1)]
        vocab = dp.Vocabulary.build([corpus])
        assert vocab.index_to_token[2:] == ["b", "a", "c"]
        again = dp.Vocabulary.build([corpus])
        assert again.index_to_token == vocab.index_to_token

    def test_encode_unknown(self):
        vocab = dp.Vocabulary.build([[example(["a"], [-1], 0, 1)]])
        np.testing.assert_array_equal(vocab.encode(["a", "zzz"]), [2, 1])

    def test_bijection_above_reserved(self):
        corpus = [example(list("abcdef"), [-1, 0, 0, 0, 0, 0], 0, 1)]
        vocab = dp.Vocabulary.build([corpus])
        for token, index in vocab.token_to_index.items():
            assert vocab.index_to_token[index] == token


class TestAdjacency:
    def test_single_token_both_flavors(self):
        for flavor in ("dg", "dt"):
            np.testing.assert_array_equal(dp.build_adjacency([-1], 1, flavor).matrix, [[1.0]])

    def test_two_token_hand_case(self):
        np.testing.assert_array_equal(dp.build_adjacency([-1, 0], 2, "dg").matrix, [[1, 1], [1, 1]])
        np.testing.assert_array_equal(dp.build_adjacency([-1, 0], 2, "dt").matrix, [[1, 1], [0, 1]])

    def test_chain_nonzero_counts(self):
        heads = [-1, 0, 1]
        assert np.count_nonzero(dp.build_adjacency(heads, 3, "dg").matrix) == 7
        assert np.count_nonzero(dp.build_adjacency(heads, 3, "dt").matrix) == 5

    def test_head_out_of_range(self):
        with pytest.raises(dp.DataError, match="out of range"):
            dp.build_adjacency([-1, 5], 2, "dg")

    def test_unknown_flavor(self):
        with pytest.raises(ValueError, match="flavor"):
            dp.build_adjacency([-1], 1, "xx")

    @given(head_arrays())
    @settings(max_examples=200, deadline=None)
    def test_structural_laws(self, heads):
        n = len(heads)
        dg = dp.build_adjacency(heads, n, "dg").matrix
        dt = dp.build_adjacency(heads, n, "dt").matrix
        # unit diagonals and binary entries
        np.testing.assert_array_equal(np.diag(dg), np.ones(n))
        np.testing.assert_array_equal(np.diag(dt), np.ones(n))
        assert set(np.unique(dg)) <= {0.0, 1.0}
        assert set(np.unique(dt)) <= {0.0, 1.0}
        # undirected flavor is symmetric and at least as dense
        np.testing.assert_array_equal(dg, dg.T)
        assert np.count_nonzero(dt) <= np.count_nonzero(dg)
        # mirroring the directed flavor recovers the undirected one
        np.testing.assert_array_equal(dg, np.minimum(1.0, dt + dt.T))
        # row sums: undirected degree + 1; directed distinct children + 1
        neighbors = [set() for _ in range(n)]
        for child, head in enumerate(heads):
            if head != -1:
                neighbors[child].add(head)
                neighbors[head].add(child)
        degree = np.array([len(s) for s in neighbors])
        np.testing.assert_array_equal(dg.sum(axis=1), degree + 1)
        children = np.array([len({c for c, h in enumerate(heads) if h == i and c != i}) for i in range(n)])
        np.testing.assert_array_equal(dt.sum(axis=1), children + 1)


class TestEmbeddingsLoader:
    def _vocab(self):
        return dp.Vocabulary.build([[example(["alpha", "beta", "gamma"], [-1, 0, 0], 0, 1)]])

    def test_matched_rows_verbatim(self, tmp_path):
        path = tmp_path / "vec.txt"
        path.write_text("alpha 1.0 2.0\ngamma 3.0 -4.0\n", encoding="utf-8")
        vocab = self._vocab()
        table, coverage = dp.load_embeddings(path, vocab, 2)
        np.testing.assert_array_equal(table.weights.data[vocab.token_to_index["alpha"]], [1.0, 2.0])
        np.testing.assert_array_equal(table.weights.data[vocab.token_to_index["gamma"]], [3.0, -4.0])
        assert coverage == pytest.approx(2 / 3, abs=1e-4)

    def test_pad_row_zero_regardless(self, tmp_path):
        path = tmp_path / "vec.txt"
        path.write_text("<pad> 9.0 9.0\nalpha 1.0 2.0\n", encoding="utf-8")
        table, _ = dp.load_embeddings(path, self._vocab(), 2)
        np.testing.assert_array_equal(table.weights.data[0], [0.0, 0.0])

    def test_oov_rows_bounded_uniform(self, tmp_path):
        path = tmp_path / "vec.txt"
        path.write_text("alpha 1.0 2.0\n", encoding="utf-8")
        vocab = self._vocab()
        table, _ = dp.load_embeddings(path, vocab, 2)
        beta_row = table.weights.data[vocab.token_to_index["beta"]]
        assert (np.abs(beta_row) <= 0.25).all()
        again, _ = dp.load_embeddings(path, vocab, 2)
        np.testing.assert_array_equal(table.weights.data, again.weights.data)

    def test_dimension_mismatch(self, tmp_path):
        path = tmp_path / "vec.txt"
        path.write_text("alpha 1.0\n", encoding="utf-8")
        with pytest.raises(dp.DataError, match="expected a word plus 2"):
            dp.load_embeddings(path, self._vocab(), 2)

    def test_multiword_keys_parse(self, tmp_path):
        # Real vector files contain keys with spaces; the trailing dim
        # fields are the numbers, everything before is the key.
        path = tmp_path / "vec.txt"
        path.write_text(". . 1.0 2.0\nalpha 3.0 4.0\n", encoding="utf-8")
        vocab = self._vocab()
        table, coverage = dp.load_embeddings(path, vocab, 2)
        np.testing.assert_array_equal(table.weights.data[vocab.token_to_index["alpha"]], [3.0, 4.0])
        assert coverage == pytest.approx(1 / 3, abs=1e-4)


class TestBatching:
    def _examples(self, count=70):
        rng = np.random.default_rng(0)
        examples = []
        for i in range(count):
            n = int(rng.integers(2, 9))
            heads = [-1] + [int(rng.integers(0, j)) for j in range(1, n)]
            frm = int(rng.integers(0, n))
            to = int(rng.integers(frm + 1, n + 1))
            examples.append(example([f"w{i}_{j}" for j in range(n)], heads, frm, to, int(rng.integers(0, 3))))
        vocab = dp.Vocabulary.build([examples])
        dp.attach_token_ids(examples, vocab)
        return examples

    def test_batch_sizes(self):
        batches = dp.make_batches(self._examples(70), 32, shuffle_seed=1)
        assert [b.size for b in batches] == [32, 32, 6]

    def test_same_seed_same_composition(self):
        examples = self._examples(50)
        first = dp.make_batches(examples, 16, shuffle_seed=9)
        second = dp.make_batches(examples, 16, shuffle_seed=9)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.token_ids, b.token_ids)
            np.testing.assert_array_equal(a.labels, b.labels)

    def test_padding_q_and_adjacency_zero(self):
        examples = self._examples(20)
        for batch in dp.make_batches(examples, 8, shuffle_seed=3, flavor="dg"):
            for b in range(batch.size):
                n = batch.lengths[b]
                np.testing.assert_array_equal(batch.q[b, n:], np.zeros(batch.n_max - n))
                np.testing.assert_array_equal(batch.adjacency[b, n:, :], np.zeros((batch.n_max - n, batch.n_max)))
                np.testing.assert_array_equal(batch.adjacency[b, :, n:], np.zeros((batch.n_max, batch.n_max - n)))

    def test_unbatching_recovers_examples(self):
        examples = self._examples(25)
        batches = dp.make_batches(examples, 7, shuffle_seed=5, flavor="dt")
        seen = []
        for batch in batches:
            for b, ex in enumerate(batch.examples):
                n = batch.lengths[b]
                assert n == ex.n
                np.testing.assert_array_equal(batch.token_ids[b, :n], ex.token_ids)
                assert batch.spans[b] == ex.span
                assert batch.labels[b] == ex.label
                np.testing.assert_array_equal(batch.q[b, :n], position_weights(n, *ex.span))
                np.testing.assert_array_equal(batch.adjacency[b, :n, :n], dp.build_adjacency(ex.heads, n, "dt").matrix)
                seen.append(id(ex))
        assert sorted(seen) == sorted(id(e) for e in examples)

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            dp.make_batches([], 4)


class TestDemoCorpus:
    def test_demo_splits_load_and_validate(self):
        train_set, test_set = dp.load_dataset_splits(DATA_ROOT, "demo")
        assert len(train_set) > 500 and len(test_set) > 100
        for e in train_set + test_set:
            e.validate()

    def test_demo_raw_files_align_with_parsed(self):
        records = dp.load_raw_dataset(DATA_ROOT / "demo" / "train.raw")
        parsed = dp.load_parsed_dataset(DATA_ROOT / "demo" / "train.jsonl")
        assert len(records) == len(parsed)
        for (sentence, aspect, label), e in zip(records, parsed):
            assert label == dp.CLASS_NAMES[e.label]
            assert aspect == " ".join(e.tokens[e.aspect_from : e.aspect_to])
            assert sentence.replace("$T$", aspect) == " ".join(e.tokens)
