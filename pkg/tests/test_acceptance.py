"""Acceptance suite: one test per criterion, at the stated tolerances.

Each test prints a PASS line on success (run with -s or -rA to see them);
pytest -v also gives one pass/fail line per criterion.  The heavy
experiments (active learning end-to-end, warm start) take several minutes
combined; the whole module is budgeted well under the stated runtime caps.
"""

import json
import math
import time

import numpy as np
import pytest

from argrel import encoder as enc
from argrel import relhead as rh
from argrel.acquire import bald_score, entropy, k_center_greedy, novelty_score
from argrel.alloop import ALConfig, compare_strategies
from argrel.cli import main as cli_main
from argrel.corpus import Corpus, SynthConfig, generate_synthetic, save_corpus, window_coverage
from argrel.metrics import ConfusionMatrix, evaluate, fleiss_kappa, macro_f1
from argrel.pretrain import pretrain
from argrel.relhead import TrainConfig, train
from argrel.windows import WindowConfig, build_examples, window_for_head

from conftest import make_doc


def report(line):
    print(f"\nACCEPTANCE PASS: {line}")


# ---------------------------------------------------------------------------
# Criterion 1: gradient correctness

class TestGradientCorrectness:
    def test_every_parameter_matches_central_finite_differences(self):
        start = time.time()
        cfg = enc.EncoderConfig(dim=8, layers=1, heads=1, ffn_mult=2,
                                dropout_p=0.1, max_positions=48, seed=3)
        vocab_size = 12
        params = enc.init_encoder_params(cfg, vocab_size)
        head_params = rh.init_head_params(cfg.dim, seed=5)
        prop_ids = [[4, 5, 6], [7, 8], [9, 10, 11, 4]]
        labels = np.array([0, 2])
        item = rh.WindowItem(doc_id="d", head=1, context=(0, 1, 2),
                             prop_ids=prop_ids, head_pos=1,
                             tail_positions=[0, 2], tail_ids=[0, 2],
                             labels=labels)

        def loss():
            logits, caches = rh.window_forward(item, params, head_params, cfg,
                                               "train", seed=99)
            ls, ws, d_logits = rh.cross_entropy(logits, labels)
            return ls / ws, d_logits / ws, caches

        _, d_logits, caches = loss()
        enc_grads, head_grads = rh.window_backward(d_logits, caches, item,
                                                   params, head_params)
        step = 1e-5
        worst = 0.0
        checked = 0
        for tree, grads in ((params, enc_grads), (head_params, head_grads)):
            for key, arr in tree.items():
                flat = arr.reshape(-1)
                gflat = grads[key].reshape(-1)
                for j in range(flat.size):
                    orig = flat[j]
                    flat[j] = orig + step
                    lp = loss()[0]
                    flat[j] = orig - step
                    lm = loss()[0]
                    flat[j] = orig
                    numeric = (lp - lm) / (2 * step)
                    err = abs(gflat[j] - numeric) / max(abs(gflat[j]),
                                                        abs(numeric), 1e-6)
                    worst = max(worst, err)
                    checked += 1
        elapsed = time.time() - start
        assert worst < 1e-4, f"worst relative error {worst}"
        assert elapsed < 30.0, f"gradient check took {elapsed:.1f}s"
        report(f"gradient correctness ({checked} parameters, worst rel err "
               f"{worst:.2e}, {elapsed:.1f}s)")


# ---------------------------------------------------------------------------
# Criterion 2: pair scorer oracle

class TestPairScorerOracle:
    def test_hand_instance_and_uniform_zero_case(self):
        w1 = [[0.2, -0.1], [0.5, 0.3], [-0.4, 0.8], [0.1, -0.6]]
        b1 = [0.05, -0.02]
        w2 = [[1.2, -0.7, 0.3], [-0.5, 0.9, 0.4]]
        b2 = [0.01, 0.0, -0.03]
        hj = [0.7, -1.1]
        hi = [0.2, 0.9]
        cat = hj + hi
        hidden = [math.tanh(b1[c] + sum(cat[r] * w1[r][c] for r in range(4)))
                  for c in range(2)]
        logits = [b2[c] + sum(hidden[r] * w2[r][c] for r in range(2))
                  for c in range(3)]
        mx = max(logits)
        exps = [math.exp(l - mx) for l in logits]
        expected = [e / sum(exps) for e in exps]
        hp = {"w1": np.array(w1), "b1": np.array(b1),
              "w2": np.array(w2), "b2": np.array(b2)}
        got = rh.predict_pair(np.array(hj), np.array(hi), hp)
        np.testing.assert_allclose(got, expected, atol=1e-12, rtol=0)

        zero = {"w1": np.zeros((4, 2)), "b1": np.zeros(2),
                "w2": np.zeros((2, 3)), "b2": np.zeros(3)}
        uniform = rh.predict_pair(np.array(hj), np.array(hi), zero)
        assert uniform.tolist() == [1 / 3, 1 / 3, 1 / 3]
        report("pair scorer matches arithmetic oracle to 1e-12; "
               "zero parameters give exactly uniform")


# ---------------------------------------------------------------------------
# Criterion 3: acquisition math

class TestAcquisitionMath:
    def test_entropy_bald_novelty_coreset(self):
        assert abs(entropy([1 / 3, 1 / 3, 1 / 3]) - math.log(3)) < 1e-9
        assert bald_score([[0.4, 0.35, 0.25]] * 5) == 0.0
        assert abs(bald_score([[1, 0, 0], [0, 1, 0]]) - math.log(2)) < 1e-9

        rng = np.random.default_rng(17)
        for _ in range(1000):
            k = int(rng.integers(2, 9))
            raw = rng.random((k, 3)) + 1e-12
            passes = raw / raw.sum(axis=1, keepdims=True)
            assert bald_score(passes) >= 0.0

        vocab = [f"w{i}" for i in range(25)]
        for _ in range(100):
            tokens = [vocab[int(i)]
                      for i in rng.integers(0, 25, size=rng.integers(0, 12))]
            counts = {vocab[int(i)]: int(rng.integers(0, 5))
                      for i in rng.integers(0, 25, size=8)}
            brute = sum(
                sum(1 for t in tokens if t == w) / (1.0 + counts.get(w, 0))
                for w in set(tokens))
            assert abs(novelty_score(tokens, counts) - brute) < 1e-12

        for _ in range(50):
            n = int(rng.integers(2, 101))
            dim = int(rng.integers(1, 5))
            b = int(rng.integers(1, min(n, 12) + 1))
            cands = rng.normal(size=(n, dim))
            centers = rng.normal(size=(int(rng.integers(1, 4)), dim))
            got = k_center_greedy(cands, centers, b)
            ctr = list(centers)
            avail = list(range(n))
            want = []
            for _ in range(b):
                best, best_d = None, -1.0
                for i in avail:
                    d = min(np.linalg.norm(cands[i] - c) for c in ctr)
                    if d > best_d:
                        best, best_d = i, d
                want.append(best)
                avail.remove(best)
                ctr.append(cands[best])
            assert got == want
        report("acquisition math: entropy/BALD constants, BALD >= 0 on 1000 "
               "pass-sets, novelty and coreset match brute force")


# ---------------------------------------------------------------------------
# Criterion 4: windowing

class TestWindowing:
    def test_coverage_counts_and_truncation(self):
        for seed in (0, 1, 2):
            corpus = generate_synthetic(SynthConfig(
                n_docs=20, props_per_doc=45, relation_rate=0.6,
                distance_skew=0.6, vocab_size=80, seed=seed))
            assert window_coverage(corpus, 20) == 1.0

        cfg = WindowConfig(window=3, max_tokens=512, mode="end_to_end")
        corpus = generate_synthetic(SynthConfig(
            n_docs=10, props_per_doc=12, relation_rate=0.5, seed=5))
        for doc in corpus.documents:
            n = len(doc.propositions)
            assert len(build_examples(doc, cfg)) <= n * 2 * cfg.window

        rng = np.random.default_rng(9)
        doc = make_doc("t", [" ".join(["tok"] * int(rng.integers(1, 12)))
                             for _ in range(25)])
        for _ in range(1000):
            head = int(rng.integers(0, 25))
            budget = int(rng.integers(16, 140))
            wcfg = WindowConfig(window=6, max_tokens=budget, mode="end_to_end")
            retained = window_for_head(doc, head, wcfg)
            if not retained:
                continue
            assert head in retained
            # contiguous run around the head = farthest-first dropping, so a
            # kept proposition is never farther out than a dropped one
            assert list(retained) == list(range(retained[0], retained[-1] + 1))
        report("windowing: coverage(L=20)=1.0 exactly, O(n*2L) bound, head "
               "kept and proximity order preserved on 1000 budgets")


# ---------------------------------------------------------------------------
# Criterion 5: metrics

class TestMetricsCriterion:
    def test_macro_f1_fixtures_fallback_and_kappa(self):
        def cm(rows):
            m = ConfusionMatrix()
            m.counts = np.array(rows, dtype=np.int64)
            return m

        fixtures = [
            (cm([[5, 0, 0], [0, 3, 0], [0, 0, 7]]), True, 1.0),
            (cm([[0, 0, 2], [0, 0, 0], [0, 0, 2]]), False, 1 / 3),
            (cm([[3, 0, 0], [0, 0, 0], [0, 0, 3]]), True, 2 / 3),
            (cm([[2, 0, 2], [0, 1, 1], [1, 0, 4]]), True,
             (4 / 7 + 2 / 3 + 2 / 3) / 3),
            (cm([[1, 1, 0], [1, 1, 0], [0, 0, 4]]), True,
             (0.5 + 0.5 + 1.0) / 3),
        ]
        for matrix, has_attack, expected in fixtures:
            assert abs(macro_f1(matrix, corpus_has_attack=has_attack)
                       - expected) < 1e-9

        # fallback engaged exactly when the corpus has zero attack relations
        with_attack = Corpus(documents=(make_doc(
            "a", ["one two", "three four", "five six"],
            relations=[(0, 1, "attack")]),), split="test")
        without_attack = Corpus(documents=(make_doc(
            "s", ["one two", "three four", "five six"],
            relations=[(0, 1, "support")]),), split="test")
        wcfg = WindowConfig(window=2, max_tokens=64, mode="head_given")
        for corpus, expect_fallback in ((with_attack, False),
                                        (without_attack, True)):
            preds = [rh.PredictionRecord(doc_id=ex.doc_id, head=ex.head,
                                         tail=ex.tail, label=ex.label)
                     for d in corpus.documents
                     for ex in build_examples(d, wcfg)]
            result = evaluate(preds, corpus, wcfg)
            assert result["two_class_fallback"] == expect_fallback

        unanimous = np.array([[4, 0], [0, 4], [4, 0], [4, 0], [0, 4]])
        assert fleiss_kappa(unanimous) == 1.0
        assert abs(fleiss_kappa(np.array([[1, 1], [2, 0]])) - (-1 / 3)) < 1e-9
        report("metrics: 5 macro-F1 fixtures to 1e-9, two-class fallback "
               "engaged exactly on attack-free corpora, kappa fixtures")


# ---------------------------------------------------------------------------
# Criterion 6: learnability

LEARN_ENC = enc.EncoderConfig(dim=16, layers=1, heads=2, ffn_mult=2,
                              dropout_p=0.1, max_positions=128, seed=0)


class TestLearnability:
    def test_overfit_toy_and_pretraining_losses(self):
        start = time.time()
        docs = []
        for d in range(5):
            texts = [
                f"anchor claim {d} stands firm",
                f"because reason {d} holds",
                f"however counter {d} bites",
                f"filler text {d} alpha",
                f"filler text {d} beta",
            ]
            docs.append(make_doc(f"toy-{d}", texts,
                                 relations=[(0, 1, "support"),
                                            (0, 2, "attack")]))
        corpus = Corpus(documents=tuple(docs))
        wcfg = WindowConfig(window=4, max_tokens=128, mode="head_given")
        tcfg = TrainConfig(learning_rate=5e-3, warmup_steps=10, epochs=40,
                           batch_size=16, seed=0)
        ckpt = train(corpus, wcfg, tcfg, encoder_cfg=LEARN_ENC)
        steps = ckpt.metadata["steps"]
        assert steps <= 500
        examples = [ex for d in corpus.documents
                    for ex in build_examples(d, wcfg)]
        assert len(examples) == 20
        items = rh.group_examples(examples,
                                  {d.doc_id: d for d in corpus.documents},
                                  ckpt.vocab)
        accuracy = rh.items_accuracy(items, ckpt)
        assert accuracy >= 0.99

        base = generate_synthetic(SynthConfig(
            n_docs=200, props_per_doc=6, relation_rate=0.0, vocab_size=80,
            seed=55))
        unlabeled = Corpus(documents=base.documents, split="unlabeled")
        for objective in ("mlm", "context_pert"):
            first, third = [], []
            for seed in (0, 1, 2):
                ckpt = pretrain(unlabeled, objective, LEARN_ENC,
                                TrainConfig(learning_rate=3e-3, warmup_steps=5,
                                            epochs=3, batch_size=8, seed=seed))
                log = ckpt.metadata["epochs"]
                first.append(log[0]["loss"])
                third.append(log[2]["loss"])
            assert np.mean(third) < np.mean(first), objective
        elapsed = time.time() - start
        assert elapsed < 300.0
        report(f"learnability: toy 20-pair accuracy {accuracy:.3f} within "
               f"{steps} steps; MLM and Context-Pert epoch-3 < epoch-1 over "
               f"3 seeds ({elapsed:.0f}s)")


# ---------------------------------------------------------------------------
# Criteria 7 and 8: active learning end-to-end and warm start

AL_ENC = enc.EncoderConfig(dim=32, layers=1, heads=2, ffn_mult=2,
                           dropout_p=0.1, max_positions=128, seed=0)
AL_WINDOW = WindowConfig(window=4, max_tokens=96, mode="head_given")
AL_TRAIN = TrainConfig(learning_rate=3e-3, warmup_steps=10, epochs=8,
                       batch_size=16, seed=0, class_weighting=True)
AL_SEEDS = [0, 1, 2, 3, 4]


def al_synth(n_docs, seed):
    return generate_synthetic(SynthConfig(
        n_docs=n_docs, props_per_doc=3, relation_rate=0.3, distance_skew=0.7,
        marker_plant_prob=1.0, vocab_size=120, attack_rate=0.0, seed=seed))


class TestActiveLearningEndToEnd:
    def test_disc_marker_beats_random_and_max_entropy_catches_up(self):
        start = time.time()
        pool = al_synth(500, seed=101)
        test = al_synth(60, seed=108)
        cfg = ALConfig(iterations=3, budget=500, strategy="random_prop",
                       window=AL_WINDOW, train=AL_TRAIN, encoder=AL_ENC,
                       seed=0)
        report_data = compare_strategies(
            pool, test, cfg, ["random_prop", "disc_marker", "max_entropy"],
            seeds=AL_SEEDS)
        means = {(r["strategy"], r["iteration"]): r["mean_macro_f1"]
                 for r in report_data["means"]}
        disc_gap = means[("disc_marker", 1)] - means[("random_prop", 1)]
        maxent_gap = means[("max_entropy", 3)] - means[("random_prop", 3)]
        elapsed = time.time() - start
        assert disc_gap > 0.0, f"disc_marker - random_prop @1 = {disc_gap}"
        assert maxent_gap >= 0.0, f"max_entropy - random_prop @3 = {maxent_gap}"
        assert elapsed < 1200.0
        report(f"AL end-to-end: disc_marker beats random_prop at iteration 1 "
               f"by {disc_gap:.4f}; max_entropy >= random_prop at iteration 3 "
               f"({maxent_gap:+.4f}); {elapsed:.0f}s over 5 seeds")


class TestWarmStart:
    def test_warm_start_helps_early_and_gap_shrinks(self):
        start = time.time()
        source = al_synth(300, seed=900)
        target = al_synth(100, seed=101)
        test = al_synth(60, seed=108)
        source_ckpt = train(source, AL_WINDOW, AL_TRAIN, encoder_cfg=AL_ENC)
        cfg = ALConfig(iterations=10, budget=30, strategy="random_prop",
                       window=AL_WINDOW, train=AL_TRAIN, encoder=AL_ENC,
                       seed=0)
        report_data = compare_strategies(target, test, cfg, ["random_prop"],
                                         seeds=AL_SEEDS,
                                         warm_start=source_ckpt)
        means = {(r["warm_start"], r["iteration"]): r["mean_macro_f1"]
                 for r in report_data["means"]}
        gap1 = means[(True, 1)] - means[(False, 1)]
        gap10 = means[(True, 10)] - means[(False, 10)]
        elapsed = time.time() - start
        assert means[(True, 1)] >= means[(False, 1)]
        assert gap10 <= gap1 + 1e-9
        report(f"warm start: iteration-1 mean F1 {means[(True, 1)]:.3f} vs "
               f"cold {means[(False, 1)]:.3f}; gap {gap1:.3f} -> {gap10:.3f} "
               f"by iteration 10 ({elapsed:.0f}s)")


# ---------------------------------------------------------------------------
# Criterion 9: reproducibility

class TestReproducibility:
    def test_manifest_rerun_is_byte_identical(self, tmp_path):
        pool = al_synth(16, seed=3)
        test = al_synth(6, seed=4)
        pool_path = tmp_path / "pool.jsonl"
        test_path = tmp_path / "test.jsonl"
        save_corpus(pool, pool_path)
        save_corpus(test, test_path)
        run_a = tmp_path / "a"
        args = ["al-run", "--pool", str(pool_path), "--test", str(test_path),
                "--strategy", "disc_marker", "--iterations", "2",
                "--budget", "8", "--seed", "11", "--dim", "16", "--layers",
                "1", "--heads", "2", "--ffn-mult", "2", "--max-positions",
                "128", "--epochs", "2", "--learning-rate", "0.003",
                "--warmup-steps", "5", "--window", "4", "--max-tokens", "96",
                "--run-dir", str(run_a)]
        assert cli_main(args) == 0
        run_b = tmp_path / "b"
        assert cli_main(["rerun", str(run_a / "manifest.json"),
                         "--run-dir", str(run_b)]) == 0
        for name in ("table.tsv", "trace.json"):
            assert (run_a / name).read_bytes() == (run_b / name).read_bytes()
        manifest = json.loads((run_a / "manifest.json").read_text())
        assert manifest["inputs"]
        report("reproducibility: manifest rerun reproduced metrics tables "
               "byte-identically")
