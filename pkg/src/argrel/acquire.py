"""Acquisition strategies for pool-based active learning.

Eight strategies score or sample unlabeled propositions: two random
baselines (proposition- and context-level), two model-uncertainty methods
(max pair entropy, dropout disagreement), a diversity method (greedy
k-center over proposition representations), and three model-independent
heuristics (unseen-vocabulary score, discourse-marker match, and its
complement).  Every strategy returns exactly b distinct members of the
unlabeled pool, deterministically for a given seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import encoder as enc
from .checkpoint import Checkpoint
from .corpus import Corpus
from .errors import BudgetError, ConfigurationError
from .markers import DEFAULT_MARKERS, match_markers
from .rand import derive_seed, substream
from .relhead import _head_forward, _softmax
from .windows import WindowConfig, window_for_head

STRATEGIES = ("random_prop", "random_ctx", "max_entropy", "bald", "coreset",
              "novel_vocab", "disc_marker", "no_disc_marker")
MODEL_BASED = ("max_entropy", "bald", "coreset")

PropKey = tuple[str, int]


@dataclass(frozen=True)
class PoolState:
    """Labeled (D) and unlabeled (U) proposition identities; always disjoint."""
    labeled: frozenset[PropKey] = frozenset()
    unlabeled: frozenset[PropKey] = frozenset()

    def __post_init__(self):
        if self.labeled & self.unlabeled:
            raise ValueError("labeled and unlabeled pools overlap")

    @classmethod
    def from_corpus(cls, corpus: Corpus) -> "PoolState":
        unlabeled = frozenset(
            (doc.doc_id, p.id) for doc in corpus.documents for p in doc.propositions)
        return cls(labeled=frozenset(), unlabeled=unlabeled)

    def acquire(self, selected) -> "PoolState":
        selected = frozenset(selected)
        if not selected <= self.unlabeled:
            raise ValueError("selected propositions must come from the unlabeled pool")
        return PoolState(labeled=self.labeled | selected,
                         unlabeled=self.unlabeled - selected)


@dataclass
class SelectionContext:
    """Everything a strategy may need beyond the pools."""
    seed: int = 0
    checkpoint: Checkpoint | None = None
    window_cfg: WindowConfig = field(default_factory=WindowConfig)
    mc_passes: int = 5
    markers: tuple[str, ...] = DEFAULT_MARKERS


# ---------------------------------------------------------------------------
# Scoring primitives

def entropy(dist) -> float:
    """Shannon entropy in nats, with 0 log 0 := 0."""
    p = np.asarray(dist, dtype=np.float64)
    nz = p[p > 0.0]
    return float(-(nz * np.log(nz)).sum())


def bald_score(passes) -> float:
    """Entropy of the mean prediction minus the mean per-pass entropy.

    Non-negative by concavity of entropy; tiny negative float round-off is
    clamped to zero so the invariant holds exactly.
    """
    p = np.atleast_2d(np.asarray(passes, dtype=np.float64))
    if p.shape[0] < 2:
        raise ValueError("bald_score needs at least 2 stochastic passes")
    if np.all(p == p[0]):
        return 0.0  # no disagreement; avoids mean-rounding residue
    disagreement = entropy(p.mean(axis=0)) - float(
        np.mean([entropy(row) for row in p]))
    return max(0.0, disagreement)


def novelty_score(tokens: list[str], pool_counts: dict[str, int]) -> float:
    """Sum over unique word types of in-proposition frequency over
    (1 + labeled-pool frequency)."""
    freq: dict[str, int] = {}
    for t in tokens:
        freq[t] = freq.get(t, 0) + 1
    return float(sum(f / (1.0 + pool_counts.get(w, 0))
                     for w, f in freq.items()))


def build_vocab_counts(texts) -> dict[str, int]:
    counts: dict[str, int] = {}
    for text in texts:
        for t in enc.tokenize(text):
            counts[t] = counts.get(t, 0) + 1
    return counts


def update_vocab_counts(counts: dict[str, int], new_texts) -> dict[str, int]:
    """Counts plus the token frequencies of newly labeled propositions."""
    merged = dict(counts)
    for text in new_texts:
        for t in enc.tokenize(text):
            merged[t] = merged.get(t, 0) + 1
    return merged


def k_center_greedy(candidates: np.ndarray, centers: np.ndarray,
                    b: int) -> list[int]:
    """Greedy k-center: b times pick the candidate farthest (L2) from its
    nearest center, then promote it to a center.  Ties go to the lowest
    index."""
    if len(centers) == 0:
        raise ValueError("k_center_greedy needs at least one initial center")
    diffs = candidates[:, None, :] - centers[None, :, :]
    min_d = np.sqrt((diffs ** 2).sum(axis=2)).min(axis=1)
    chosen: list[int] = []
    available = np.ones(len(candidates), dtype=bool)
    for _ in range(b):
        masked = np.where(available, min_d, -np.inf)
        pick = int(np.argmax(masked))
        chosen.append(pick)
        available[pick] = False
        d_new = np.sqrt(((candidates - candidates[pick]) ** 2).sum(axis=1))
        min_d = np.minimum(min_d, d_new)
    return chosen


# ---------------------------------------------------------------------------
# Model-based helpers

def proposition_representations(corpus: Corpus, ckpt: Checkpoint,
                                window_cfg: WindowConfig) -> dict[PropKey, np.ndarray]:
    """Eval-mode representation per proposition.

    Documents are packed into budget-limited chunks of consecutive
    propositions; each chunk is one encoder window.
    """
    budget = min(window_cfg.max_tokens, ckpt.encoder_config.max_positions)
    reps: dict[PropKey, np.ndarray] = {}
    for doc in corpus.documents:
        chunk: list[list[int]] = []
        chunk_ids: list[int] = []
        total = 0

        def flush():
            if not chunk:
                return
            out, _ = enc.encode_window(chunk, ckpt.encoder_params,
                                       ckpt.encoder_config, "eval")
            for k, pid in enumerate(chunk_ids):
                reps[(doc.doc_id, pid)] = out[k]

        for prop in doc.propositions:
            ids = ckpt.vocab.encode_text(prop.text)[:budget - 1]
            cost = len(ids) + 1
            if total + cost > budget and chunk:
                flush()
                chunk, chunk_ids, total = [], [], 0
            chunk.append(ids)
            chunk_ids.append(prop.id)
            total += cost
        flush()
    return reps


def _pair_uncertainty_scores(corpus: Corpus, unlabeled: frozenset[PropKey],
                             ctx: SelectionContext,
                             use_bald: bool) -> dict[PropKey, float]:
    """Max pair-level uncertainty per unlabeled proposition as candidate
    tail, with every in-window proposition treated as a potential head."""
    ckpt = ctx.checkpoint
    scores: dict[PropKey, float] = {}
    for doc in corpus.documents:
        doc_unlabeled = {pid for (d, pid) in unlabeled if d == doc.doc_id}
        if not doc_unlabeled:
            continue
        for head in range(len(doc.propositions)):
            context = window_for_head(doc, head, ctx.window_cfg)
            tails = [i for i in context if i != head and i in doc_unlabeled]
            if not tails:
                continue
            prop_ids = [ckpt.vocab.encode_text(doc.propositions[i].text)
                        for i in context]
            pos = {pid: k for k, pid in enumerate(context)}
            if use_bald:
                pass_probs = []
                for k in range(ctx.mc_passes):
                    seed = derive_seed(ctx.seed, "mc", doc.doc_id, head, k)
                    reps, _ = enc.encode_window(prop_ids, ckpt.encoder_params,
                                                ckpt.encoder_config,
                                                "mc_dropout", seed)
                    pass_probs.append(_window_pair_probs(reps, pos[head],
                                                         [pos[t] for t in tails],
                                                         ckpt.head_params))
                stacked = np.stack(pass_probs)  # (K, n_tails, 3)
                for col, tail in enumerate(tails):
                    s = bald_score(stacked[:, col, :])
                    key = (doc.doc_id, tail)
                    scores[key] = max(scores.get(key, 0.0), s)
            else:
                reps, _ = enc.encode_window(prop_ids, ckpt.encoder_params,
                                            ckpt.encoder_config, "eval")
                probs = _window_pair_probs(reps, pos[head],
                                           [pos[t] for t in tails],
                                           ckpt.head_params)
                for col, tail in enumerate(tails):
                    s = entropy(probs[col])
                    key = (doc.doc_id, tail)
                    scores[key] = max(scores.get(key, 0.0), s)
    return scores


def _window_pair_probs(reps, head_pos, tail_positions, head_params):
    hj = reps[head_pos]
    ht = reps[tail_positions]
    cat = np.concatenate([np.broadcast_to(hj, ht.shape), ht], axis=1)
    logits, _ = _head_forward(cat, head_params)
    return _softmax(logits)


# ---------------------------------------------------------------------------
# Selection

def _top_b(scored: dict[PropKey, float], candidates: list[PropKey],
           b: int) -> list[PropKey]:
    return sorted(candidates,
                  key=lambda k: (-scored.get(k, 0.0), k))[:b]


def select(strategy: str, corpus: Corpus, pools: PoolState, b: int,
           ctx: SelectionContext) -> list[PropKey]:
    """Select b unlabeled propositions with the given strategy."""
    if strategy not in STRATEGIES:
        raise ConfigurationError(f"unknown strategy: {strategy!r}")
    if b > len(pools.unlabeled):
        raise BudgetError(
            f"budget {b} exceeds unlabeled pool size {len(pools.unlabeled)}")
    if strategy in MODEL_BASED and ctx.checkpoint is None:
        raise ConfigurationError(f"{strategy} requires a model checkpoint")
    pool_sorted = sorted(pools.unlabeled)
    rng = substream(ctx.seed, "select", strategy)
    texts = {(doc.doc_id, p.id): p.text
             for doc in corpus.documents for p in doc.propositions}

    if strategy == "random_prop":
        picks = rng.choice(len(pool_sorted), size=b, replace=False)
        return [pool_sorted[int(i)] for i in picks]

    if strategy == "random_ctx":
        return _select_random_ctx(corpus, pool_sorted, b, ctx, rng)

    if strategy in ("max_entropy", "bald"):
        scores = _pair_uncertainty_scores(corpus, pools.unlabeled, ctx,
                                          use_bald=(strategy == "bald"))
        return _top_b(scores, pool_sorted, b)

    if strategy == "coreset":
        reps = proposition_representations(corpus, ctx.checkpoint, ctx.window_cfg)
        cand_vecs = np.stack([reps[k] for k in pool_sorted])
        labeled_sorted = sorted(pools.labeled)
        if labeled_sorted:
            centers = np.stack([reps[k] for k in labeled_sorted])
            idx = k_center_greedy(cand_vecs, centers, b)
        else:
            first = int(rng.integers(0, len(pool_sorted)))
            others = [i for i in range(len(pool_sorted)) if i != first]
            idx = [first]
            if b > 1:
                sub = k_center_greedy(cand_vecs[others],
                                      cand_vecs[first:first + 1], b - 1)
                idx += [others[i] for i in sub]
        return [pool_sorted[i] for i in idx]

    if strategy == "novel_vocab":
        counts = build_vocab_counts(texts[k] for k in sorted(pools.labeled))
        scores = {k: novelty_score(enc.tokenize(texts[k]), counts)
                  for k in pool_sorted}
        return _top_b(scores, pool_sorted, b)

    if strategy in ("disc_marker", "no_disc_marker"):
        want_marker = strategy == "disc_marker"
        matched = [k for k in pool_sorted
                   if bool(match_markers(texts[k], ctx.markers)) == want_marker]
        rest = [k for k in pool_sorted
                if bool(match_markers(texts[k], ctx.markers)) != want_marker]
        if len(matched) >= b:
            picks = rng.choice(len(matched), size=b, replace=False)
            return [matched[int(i)] for i in picks]
        fill = rng.choice(len(rest), size=b - len(matched), replace=False)
        return matched + [rest[int(i)] for i in fill]

    raise AssertionError("unreachable")


def _select_random_ctx(corpus: Corpus, pool_sorted: list[PropKey], b: int,
                       ctx: SelectionContext, rng) -> list[PropKey]:
    """Draw (proposition, direction) anchors; each brings its whole one-sided
    L-block.  The final block is trimmed last-added-first to exactly b."""
    docs = {doc.doc_id: doc for doc in corpus.documents}
    pool_set = set(pool_sorted)
    selected: list[PropKey] = []
    selected_set: set[PropKey] = set()
    remaining = list(pool_sorted)
    while len(selected) < b:
        anchor = remaining[int(rng.integers(0, len(remaining)))]
        forward = rng.random() < 0.5
        doc = docs[anchor[0]]
        pid = anchor[1]
        n = len(doc.propositions)
        if forward:
            block_ids = list(range(pid, min(n - 1, pid + ctx.window_cfg.window) + 1))
        else:
            block_ids = [pid] + list(range(pid - 1,
                                           max(0, pid - ctx.window_cfg.window) - 1, -1))
        for i in block_ids:
            key = (anchor[0], i)
            if key in selected_set or key not in pool_set:
                continue
            selected.append(key)
            selected_set.add(key)
            if len(selected) == b:
                return selected
        remaining = [k for k in remaining if k not in selected_set]
    return selected
