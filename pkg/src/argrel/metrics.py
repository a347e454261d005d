"""Evaluation metrics: per-class P/R/F1, macro-F1 with the two-class
fallback for corpora without attack relations, and Fleiss' kappa for
inter-annotator agreement."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus
from .errors import ConfigurationError, UndefinedInputError
from .windows import WindowConfig, build_examples

CLASSES = ("support", "attack", "no_rel")
_INDEX = {c: i for i, c in enumerate(CLASSES)}


@dataclass
class ConfusionMatrix:
    counts: np.ndarray = field(
        default_factory=lambda: np.zeros((3, 3), dtype=np.int64))

    def add(self, gold: str, predicted: str, n: int = 1) -> None:
        self.counts[_INDEX[gold], _INDEX[predicted]] += n

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def per_class_prf(cm: ConfusionMatrix) -> dict[str, dict[str, float]]:
    """Precision/recall/F1 per class, with the 0/0 := 0 convention."""
    out = {}
    counts = cm.counts
    for i, cls in enumerate(CLASSES):
        tp = counts[i, i]
        pred = counts[:, i].sum()
        gold = counts[i, :].sum()
        precision = tp / pred if pred else 0.0
        recall = tp / gold if gold else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        out[cls] = {"precision": float(precision), "recall": float(recall),
                    "f1": float(f1), "support": int(gold)}
    return out


def macro_f1(cm: ConfusionMatrix, corpus_has_attack: bool = True) -> float:
    """Unweighted mean of per-class F1.

    When the corpus carries no attack relations, the macro average is over
    support and no_rel only; otherwise over all three classes.
    """
    if cm.total == 0:
        raise UndefinedInputError("macro_f1 over an empty confusion matrix")
    prf = per_class_prf(cm)
    classes = CLASSES if corpus_has_attack else ("support", "no_rel")
    return float(np.mean([prf[c]["f1"] for c in classes]))


def fleiss_kappa(ratings: np.ndarray) -> float:
    """Chance-corrected multi-rater agreement over an items x categories
    count table; every row must sum to the same number of raters (>= 2)."""
    table = np.asarray(ratings, dtype=np.float64)
    if table.ndim != 2 or table.shape[0] < 1:
        raise UndefinedInputError("ratings must be a non-empty 2-D table")
    row_sums = table.sum(axis=1)
    n = row_sums[0]
    if n < 2 or not np.all(row_sums == n):
        raise UndefinedInputError("every item needs the same rater count >= 2")
    p_i = ((table ** 2).sum(axis=1) - n) / (n * (n - 1))
    p_bar = float(p_i.mean())
    p_j = table.sum(axis=0) / (table.shape[0] * n)
    p_e = float((p_j ** 2).sum())
    if p_e >= 1.0 - 1e-12:
        if p_bar >= 1.0 - 1e-12:
            return 1.0
        raise UndefinedInputError("expected agreement is 1 but observed is not")
    return (p_bar - p_e) / (1.0 - p_e)


def evaluate(predictions, corpus: Corpus, window_cfg: WindowConfig) -> dict:
    """Score predictions against gold over the windowed pair set.

    The prediction set must cover exactly the pairs the windowing config
    induces on the gold corpus; anything else means the two sides were built
    with different configs.
    """
    expected: dict[tuple[str, int, int], str] = {}
    for doc in corpus.documents:
        for ex in build_examples(doc, window_cfg):
            expected[(ex.doc_id, ex.head, ex.tail)] = ex.label
    got = {(p.doc_id, p.head, p.tail): p.label for p in predictions}
    if set(got) != set(expected):
        missing = len(set(expected) - set(got))
        extra = len(set(got) - set(expected))
        raise ConfigurationError(
            f"prediction pair set does not match the windowing config "
            f"({missing} missing, {extra} unexpected)")
    cm = ConfusionMatrix()
    for key, gold in expected.items():
        cm.add(gold, got[key])
    has_attack = corpus.has_attack
    prf = per_class_prf(cm)
    return {
        "macro_f1": macro_f1(cm, corpus_has_attack=has_attack),
        "per_class": prf,
        "n_pairs": cm.total,
        "two_class_fallback": not has_attack,
        "confusion": cm.counts.tolist(),
    }
