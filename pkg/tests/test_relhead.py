"""Pairwise output layer, training loop, prediction, and checkpointing."""

import math

import numpy as np
import pytest

from argrel import encoder as enc
from argrel import relhead as rh
from argrel.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from argrel.corpus import Corpus
from argrel.errors import (
    CheckpointIntegrityError,
    CheckpointVersionError,
    EmptyTrainingError,
    IncompatibleCheckpointError,
)
from argrel.windows import WindowConfig, build_examples

from conftest import SMALL_ENCODER, SMALL_WINDOW, make_doc


def hand_distribution(hj, hi, w1, b1, w2, b2):
    """Independent arithmetic evaluation of the pair scorer (pure python)."""
    cat = list(hj) + list(hi)
    hidden = []
    for col in range(len(b1)):
        acc = b1[col]
        for row, x in enumerate(cat):
            acc += x * w1[row][col]
        hidden.append(math.tanh(acc))
    logits = []
    for col in range(len(b2)):
        acc = b2[col]
        for row, z in enumerate(hidden):
            acc += z * w2[row][col]
        logits.append(acc)
    mx = max(logits)
    exps = [math.exp(l - mx) for l in logits]
    total = sum(exps)
    return [e / total for e in exps]


class TestPredictPair:
    def test_zero_parameters_give_uniform(self):
        hp = {"w1": np.zeros((4, 2)), "b1": np.zeros(2),
              "w2": np.zeros((2, 3)), "b2": np.zeros(3)}
        dist = rh.predict_pair(np.array([0.3, -0.2]), np.array([1.0, 0.5]), hp)
        np.testing.assert_array_equal(dist, np.full(3, 1.0 / 3.0))

    def test_matches_hand_arithmetic(self):
        w1 = [[0.2, -0.1], [0.5, 0.3], [-0.4, 0.8], [0.1, -0.6]]
        b1 = [0.05, -0.02]
        w2 = [[1.2, -0.7, 0.3], [-0.5, 0.9, 0.4]]
        b2 = [0.01, 0.0, -0.03]
        hj = [0.7, -1.1]
        hi = [0.2, 0.9]
        hp = {"w1": np.array(w1), "b1": np.array(b1),
              "w2": np.array(w2), "b2": np.array(b2)}
        got = rh.predict_pair(np.array(hj), np.array(hi), hp)
        expected = hand_distribution(hj, hi, w1, b1, w2, b2)
        np.testing.assert_allclose(got, expected, atol=1e-12, rtol=0)

    def test_logit_shift_invariance(self):
        hp = {"w1": np.random.default_rng(0).normal(size=(4, 2)),
              "b1": np.zeros(2),
              "w2": np.random.default_rng(1).normal(size=(2, 3)),
              "b2": np.array([0.1, -0.2, 0.3])}
        base = rh.predict_pair(np.array([0.5, 0.1]), np.array([-0.3, 0.8]), hp)
        hp["b2"] = hp["b2"] + 7.5
        shifted = rh.predict_pair(np.array([0.5, 0.1]), np.array([-0.3, 0.8]), hp)
        np.testing.assert_allclose(base, shifted, atol=1e-12)

    def test_width_mismatch(self):
        hp = {"w1": np.zeros((4, 2)), "b1": np.zeros(2),
              "w2": np.zeros((2, 3)), "b2": np.zeros(3)}
        with pytest.raises(ValueError):
            rh.predict_pair(np.zeros(3), np.zeros(3), hp)

    def test_valid_distribution_for_random_inputs(self):
        rng = np.random.default_rng(4)
        hp = rh.init_head_params(6, seed=2)
        for _ in range(50):
            dist = rh.predict_pair(rng.normal(size=6) * 10,
                                   rng.normal(size=6) * 10, hp)
            assert np.all(dist >= 0)
            assert abs(dist.sum() - 1.0) < 1e-9


class TestCrossEntropy:
    def test_matches_hand_arithmetic_on_five_examples(self):
        logits = np.array([
            [2.0, 1.0, 0.1], [0.0, 0.0, 0.0], [-1.0, 3.0, 0.5],
            [0.2, 0.2, 5.0], [1.5, -2.0, 0.3],
        ])
        gold = np.array([0, 1, 1, 2, 0])
        expected = 0.0
        for row, g in zip(logits, gold):
            mx = max(row)
            lse = mx + math.log(sum(math.exp(v - mx) for v in row))
            expected += lse - row[g]
        expected /= len(gold)
        ls, ws, _ = rh.cross_entropy(logits, gold)
        assert ls / ws == pytest.approx(expected, abs=1e-12)
        assert ls / ws >= 0.0


def toy_corpus():
    """Marker-determined labels, linearly separable; 20 pairs over 5 docs."""
    docs = []
    for d in range(5):
        texts = [
            f"anchor claim {d} stands firm",
            f"because reason {d} holds",
            f"however counter {d} bites",
            f"filler text {d} alpha",
            f"filler text {d} beta",
        ]
        rels = [(0, 1, "support"), (0, 2, "attack")]
        docs.append(make_doc(f"toy-{d}", texts, relations=rels))
    return Corpus(documents=tuple(docs))


class TestTrain:
    def test_overfits_toy_set(self):
        corpus = toy_corpus()
        cfg = WindowConfig(window=4, max_tokens=128, mode="head_given")
        tcfg = rh.TrainConfig(learning_rate=5e-3, warmup_steps=10, epochs=40,
                              batch_size=16, seed=0)
        ckpt = rh.train(corpus, cfg, tcfg, encoder_cfg=SMALL_ENCODER)
        docs_by_id = {d.doc_id: d for d in corpus.documents}
        examples = [ex for d in corpus.documents for ex in build_examples(d, cfg)]
        items = rh.group_examples(examples, docs_by_id, ckpt.vocab)
        assert len(examples) == 20
        assert rh.items_accuracy(items, ckpt) >= 0.99

    def test_zero_epochs_identity(self, small_checkpoint, small_synth_corpus):
        tcfg = rh.TrainConfig(learning_rate=1e-3, epochs=0, seed=9)
        out = rh.train(small_synth_corpus, SMALL_WINDOW, tcfg, init=small_checkpoint)
        for k, v in small_checkpoint.encoder_params.items():
            np.testing.assert_array_equal(out.encoder_params[k], v)
        for k, v in small_checkpoint.head_params.items():
            np.testing.assert_array_equal(out.head_params[k], v)

    def test_deterministic(self, small_synth_corpus):
        tcfg = rh.TrainConfig(learning_rate=2e-3, warmup_steps=2, epochs=2,
                              batch_size=8, seed=5)
        a = rh.train(small_synth_corpus, SMALL_WINDOW, tcfg, encoder_cfg=SMALL_ENCODER)
        b = rh.train(small_synth_corpus, SMALL_WINDOW, tcfg, encoder_cfg=SMALL_ENCODER)
        assert a.metadata["epochs"][-1]["loss"] == b.metadata["epochs"][-1]["loss"]
        for k in a.encoder_params:
            np.testing.assert_array_equal(a.encoder_params[k], b.encoder_params[k])

    def test_no_examples_is_an_error(self):
        doc = make_doc("empty", ["lone proposition"])  # no relations, head_given
        corpus = Corpus(documents=(doc,))
        with pytest.raises(EmptyTrainingError):
            rh.train(corpus, SMALL_WINDOW, rh.TrainConfig(epochs=1),
                     encoder_cfg=SMALL_ENCODER)

    def test_zero_learning_rate_step_leaves_params_unchanged(self):
        params = {"w": np.array([1.0, -2.0, 3.0])}
        opt = rh.Adam(params)
        opt.step(params, {"w": np.array([0.5, 0.5, 0.5])}, lr=0.0)
        np.testing.assert_array_equal(params["w"], [1.0, -2.0, 3.0])

    def test_config_mismatch_with_init(self, small_checkpoint, small_synth_corpus):
        other = enc.EncoderConfig(dim=32, layers=1, heads=2, ffn_mult=2,
                                  dropout_p=0.1, max_positions=128, seed=0)
        with pytest.raises(IncompatibleCheckpointError):
            rh.train(small_synth_corpus, SMALL_WINDOW, rh.TrainConfig(epochs=1),
                     encoder_cfg=other, init=small_checkpoint)


class TestPredictDocument:
    def test_pair_count_end_to_end(self, five_prop_doc, small_checkpoint):
        cfg = WindowConfig(window=2, max_tokens=128, mode="end_to_end")
        records = rh.predict_document(five_prop_doc, small_checkpoint, cfg)
        assert len(records) == 14

    def test_head_given_window_bound(self, small_checkpoint):
        doc = make_doc("hg", [f"prop number {i}" for i in range(6)],
                       relations=[(3, 2, "support")])
        cfg = WindowConfig(window=1, max_tokens=128, mode="head_given")
        records = rh.predict_document(doc, small_checkpoint, cfg)
        assert {r.head for r in records} == {3}
        assert len(records) <= 2

    def test_deterministic(self, five_prop_doc, small_checkpoint):
        cfg = WindowConfig(window=2, max_tokens=128, mode="end_to_end")
        a = rh.predict_document(five_prop_doc, small_checkpoint, cfg)
        b = rh.predict_document(five_prop_doc, small_checkpoint, cfg)
        assert a == b

    def test_head_given_pairs_subset_of_end_to_end(self, five_prop_doc,
                                                   small_checkpoint):
        hg = rh.predict_document(five_prop_doc, small_checkpoint,
                                 WindowConfig(window=2, max_tokens=128,
                                              mode="head_given"))
        e2e = rh.predict_document(five_prop_doc, small_checkpoint,
                                  WindowConfig(window=2, max_tokens=128,
                                               mode="end_to_end"))
        assert {(r.head, r.tail) for r in hg} <= {(r.head, r.tail) for r in e2e}


class TestCheckpointIO:
    def test_round_trip_bit_exact(self, small_checkpoint, tmp_path):
        path = tmp_path / "ckpt.npz"
        save_checkpoint(small_checkpoint, path)
        loaded = load_checkpoint(path)
        assert loaded.encoder_config == small_checkpoint.encoder_config
        assert loaded.vocab.id_to_token == small_checkpoint.vocab.id_to_token
        for k, v in small_checkpoint.encoder_params.items():
            np.testing.assert_array_equal(loaded.encoder_params[k], v)
        for k, v in small_checkpoint.head_params.items():
            np.testing.assert_array_equal(loaded.head_params[k], v)

    def test_corrupted_file_is_integrity_error(self, small_checkpoint, tmp_path):
        path = tmp_path / "ckpt.npz"
        save_checkpoint(small_checkpoint, path)
        blob = bytearray(path.read_bytes())
        blob[len(blob) // 2] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointIntegrityError):
            load_checkpoint(path)

    def test_version_mismatch(self, small_checkpoint, tmp_path, monkeypatch):
        import argrel.checkpoint as ck
        path = tmp_path / "ckpt.npz"
        monkeypatch.setattr(ck, "CHECKPOINT_VERSION", 99)
        save_checkpoint(small_checkpoint, path)
        monkeypatch.undo()
        with pytest.raises(CheckpointVersionError):
            load_checkpoint(path)

    def test_load_into_mismatched_config(self, small_checkpoint, tmp_path,
                                         small_synth_corpus):
        path = tmp_path / "ckpt.npz"
        save_checkpoint(small_checkpoint, path)
        loaded = load_checkpoint(path)
        other = enc.EncoderConfig(dim=8, layers=1, heads=1, ffn_mult=2,
                                  dropout_p=0.0, max_positions=64, seed=0)
        with pytest.raises(IncompatibleCheckpointError):
            rh.train(small_synth_corpus, SMALL_WINDOW, rh.TrainConfig(epochs=1),
                     encoder_cfg=other, init=loaded)
