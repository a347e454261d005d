"""Feature-based comparison system: hand-crafted pair features and a linear
max-margin classifier trained with stochastic subgradient descent.

Feature groups per (head, tail) pair: binary stemmed unigrams of each side
against a top-500 lexicon, structural counts and order flags, discourse
indicator classes (causal/contrast/elaboration) in head/tail/between, and
shared-content token overlap.  Part-of-speech features are behind a
pluggable tagger hook and disabled by default (no tagger is bundled).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .corpus import Corpus, Document
from .encoder import tokenize
from .errors import DegenerateTrainingError
from .markers import MARKER_CLASSES, match_markers
from .rand import substream
from .relhead import CLASSES, PredictionRecord
from .windows import WindowConfig, build_examples

LEXICON_SIZE = 500

# Compact embedded stopword list; overridable via load_stopwords.
DEFAULT_STOPWORDS = frozenset("""
a an the and or not but if then than that this these those it its is are was
were be been being am do does did doing have has had having i you he she we
they them his her their our your my me him us of in on at by for with about
into to from as so such no nor only own same too very can will just should
could would may might must there here when where why how what which who whom
all any both each few more most other some s t d ll m o re ve y
""".split())


def load_stopwords(path=None) -> frozenset[str]:
    if path is None:
        return DEFAULT_STOPWORDS
    with open(path, encoding="utf-8") as fh:
        return frozenset(line.strip().lower() for line in fh if line.strip())


def stem(token: str) -> str:
    """Lowercase plus fixed suffix stripping; not a linguistic stemmer."""
    t = token.lower()
    if t.endswith("ies") and len(t) >= 4:
        return t[:-3] + "y"
    if t.endswith("sses") and len(t) >= 5:
        return t[:-2]
    if t.endswith("ing") and len(t) >= 6:
        return t[:-3]
    if t.endswith("ed") and len(t) >= 5:
        return t[:-2]
    if t.endswith("s") and not t.endswith("ss") and len(t) >= 4:
        return t[:-1]
    return t


def build_lexicon(corpus: Corpus, size: int = LEXICON_SIZE) -> tuple[str, ...]:
    """Top stemmed unigrams by (frequency desc, token asc)."""
    counts: Counter[str] = Counter()
    for doc in corpus.documents:
        for prop in doc.propositions:
            counts.update(stem(t) for t in tokenize(prop.text))
    ranked = sorted(counts, key=lambda t: (-counts[t], t))
    return tuple(ranked[:size])


def extract_features(doc: Document, head: int, tail: int,
                     lexicon: tuple[str, ...],
                     stopwords: frozenset[str] = DEFAULT_STOPWORDS,
                     tagger: Callable[[list[str]], list[str]] | None = None,
                     ) -> dict[str, float]:
    """Sparse feature map for one pair; pure and order-stable."""
    head_tokens = tokenize(doc.propositions[head].text)
    tail_tokens = tokenize(doc.propositions[tail].text)
    lex = set(lexicon)
    features: dict[str, float] = {}
    for t in head_tokens:
        s = stem(t)
        if s in lex:
            features[f"hu={s}"] = 1.0
    for t in tail_tokens:
        s = stem(t)
        if s in lex:
            features[f"tu={s}"] = 1.0

    features["head_len"] = float(len(head_tokens))
    features["tail_len"] = float(len(tail_tokens))
    features["props_between"] = float(abs(head - tail) - 1)
    features["tail_before_head"] = 1.0 if tail < head else 0.0
    features["head_before_tail"] = 1.0 if head < tail else 0.0

    lo, hi = min(head, tail), max(head, tail)
    between_text = " ".join(doc.propositions[i].text for i in range(lo + 1, hi))
    for location, text in (("head", doc.propositions[head].text),
                           ("tail", doc.propositions[tail].text),
                           ("between", between_text)):
        matched = match_markers(text) if text else set()
        for cls, members in MARKER_CLASSES.items():
            if any(m in matched for m in members):
                features[f"{cls}_in_{location}"] = 1.0

    content_head = {t for t in head_tokens if len(t) >= 4 and t not in stopwords}
    content_tail = {t for t in tail_tokens if len(t) >= 4 and t not in stopwords}
    shared = content_head & content_tail
    features["shared_count"] = float(len(shared))
    features["shared_any"] = 1.0 if shared else 0.0

    if tagger is not None:
        for tag in tagger(head_tokens):
            features[f"hpos={tag}"] = 1.0
        for tag in tagger(tail_tokens):
            features[f"tpos={tag}"] = 1.0
    return features


# ---------------------------------------------------------------------------
# Linear one-vs-rest hinge classifier

@dataclass
class LinearModel:
    feature_index: dict[str, int]
    weights: np.ndarray  # (n_classes, n_features)
    bias: np.ndarray     # (n_classes,)
    reg: float

    def vectorize(self, features: dict[str, float]) -> np.ndarray:
        x = np.zeros(len(self.feature_index))
        for name, value in features.items():
            col = self.feature_index.get(name)
            if col is not None:
                x[col] = value
        return x

    def scores(self, features: dict[str, float]) -> np.ndarray:
        x = self.vectorize(features)
        return self.weights @ x + self.bias


def train_linear(feature_maps: list[dict[str, float]], labels: list[str],
                 reg: float = 0.01, epochs: int = 10, seed: int = 0,
                 lr: float = 0.1) -> LinearModel:
    """One-vs-rest hinge loss with L2 regularization, SGD over shuffled
    samples; deterministic per seed."""
    if len(set(labels)) < 2:
        raise DegenerateTrainingError("training data contains a single class")
    names = sorted({name for f in feature_maps for name in f})
    index = {name: i for i, name in enumerate(names)}
    x_rows = np.zeros((len(feature_maps), len(names)))
    for r, fmap in enumerate(feature_maps):
        for name, value in fmap.items():
            x_rows[r, index[name]] = value
    y = np.array([CLASSES.index(l) for l in labels])

    weights = np.zeros((len(CLASSES), len(names)))
    bias = np.zeros(len(CLASSES))
    rng = substream(seed, "svm-shuffle")
    for epoch in range(epochs):
        step_lr = lr / (1.0 + epoch)
        shrink = max(0.0, 1.0 - step_lr * reg)
        for r in rng.permutation(len(x_rows)):
            x = x_rows[r]
            margins = weights @ x + bias
            for c in range(len(CLASSES)):
                sign = 1.0 if y[r] == c else -1.0
                weights[c] *= shrink
                if sign * margins[c] < 1.0:
                    weights[c] += step_lr * sign * x
                    bias[c] += step_lr * sign
    return LinearModel(feature_index=index, weights=weights, bias=bias, reg=reg)


def hinge_loss(model: LinearModel, feature_maps: list[dict[str, float]],
               labels: list[str]) -> float:
    """Mean one-vs-rest hinge loss plus the L2 penalty (diagnostic)."""
    total = 0.0
    for fmap, label in zip(feature_maps, labels):
        scores = model.scores(fmap)
        for c in range(len(CLASSES)):
            sign = 1.0 if CLASSES.index(label) == c else -1.0
            total += max(0.0, 1.0 - sign * scores[c])
    penalty = 0.5 * model.reg * float((model.weights ** 2).sum())
    return total / max(len(feature_maps), 1) + penalty


def predict_linear(model: LinearModel, features: dict[str, float]) -> str:
    """Argmax class; exact ties go to the earliest class in CLASSES order."""
    return CLASSES[int(np.argmax(model.scores(features)))]


# ---------------------------------------------------------------------------
# Corpus-level wrappers

def train_baseline(corpus: Corpus, window_cfg: WindowConfig, reg: float = 0.01,
                   epochs: int = 10, seed: int = 0,
                   lexicon: tuple[str, ...] | None = None,
                   stopwords: frozenset[str] = DEFAULT_STOPWORDS,
                   ) -> tuple[LinearModel, tuple[str, ...]]:
    lexicon = lexicon or build_lexicon(corpus)
    feature_maps = []
    labels = []
    for doc in corpus.documents:
        for ex in build_examples(doc, window_cfg):
            feature_maps.append(extract_features(doc, ex.head, ex.tail, lexicon,
                                                 stopwords))
            labels.append(ex.label)
    model = train_linear(feature_maps, labels, reg=reg, epochs=epochs, seed=seed)
    return model, lexicon


def predict_baseline(corpus: Corpus, model: LinearModel,
                     lexicon: tuple[str, ...], window_cfg: WindowConfig,
                     stopwords: frozenset[str] = DEFAULT_STOPWORDS,
                     ) -> list[PredictionRecord]:
    records = []
    for doc in corpus.documents:
        for ex in build_examples(doc, window_cfg):
            features = extract_features(doc, ex.head, ex.tail, lexicon, stopwords)
            records.append(PredictionRecord(
                doc_id=doc.doc_id, head=ex.head, tail=ex.tail,
                label=predict_linear(model, features), probs=None))
    return records
