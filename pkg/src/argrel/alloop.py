"""Pool-based active learning driver.

Each of T iterations selects b propositions with the configured strategy,
obtains their labels (simulated oracle: gold pairs between labeled
propositions within the window are revealed), trains a model on the labeled
pool - from scratch, or fine-tuned from a warm-start checkpoint - and
evaluates on the test corpus.  Runs are deterministic per seed in simulated
mode.

The external oracle is driven by the annotation service (see server module);
it uses the same engine and persists resumable state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from . import encoder as enc
from .acquire import MODEL_BASED, PoolState, SelectionContext, select
from .checkpoint import Checkpoint
from .corpus import Corpus
from .errors import ConfigurationError
from .markers import load_markers
from .metrics import evaluate
from .rand import derive_seed
from .relhead import (
    CLASS_INDEX,
    TrainConfig,
    WindowItem,
    init_head_params,
    predict_document,
    train_on_items,
)
from .windows import WindowConfig, window_for_head

import numpy as np


@dataclass(frozen=True)
class ALConfig:
    iterations: int = 10
    budget: int | None = None  # None: ceil(|U| / iterations)
    strategy: str = "random_prop"
    window: WindowConfig = field(default_factory=WindowConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    encoder: enc.EncoderConfig = field(default_factory=enc.EncoderConfig)
    oracle: str = "simulated"
    seed: int = 0
    mc_passes: int = 5
    marker_file: str | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.budget is not None and self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.oracle not in ("simulated", "external"):
            raise ValueError(f"unknown oracle: {self.oracle!r}")


@dataclass
class ALTrace:
    strategy: str
    seed: int
    warm_start: bool
    records: list[dict] = field(default_factory=list)
    truncated: bool = False
    suspended: bool = False

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy, "seed": self.seed,
            "warm_start": self.warm_start, "records": self.records,
            "truncated": self.truncated, "suspended": self.suspended,
        }

    def rows(self) -> list[dict]:
        return [
            {"strategy": self.strategy, "warm_start": self.warm_start,
             "seed": self.seed, "iteration": r["iteration"],
             "labeled_size": r["labeled_size"], "macro_f1": r["macro_f1"],
             "support_f1": r["per_class"]["support"]["f1"],
             "attack_f1": r["per_class"]["attack"]["f1"],
             "no_rel_f1": r["per_class"]["no_rel"]["f1"]}
            for r in self.records
        ]


def reveal_gold(pool_corpus: Corpus, labeled: frozenset, window: int) -> dict:
    """All gold pairs whose head and tail are both labeled and in-window."""
    revealed = {}
    for doc in pool_corpus.documents:
        for rel in doc.relations:
            if abs(rel.tail - rel.head) > window:
                continue
            if (doc.doc_id, rel.head) in labeled and (doc.doc_id, rel.tail) in labeled:
                revealed[(doc.doc_id, rel.head, rel.tail)] = rel.label
    return revealed


def training_items(pool_corpus: Corpus, labeled: frozenset, revealed: dict,
                   window_cfg: WindowConfig, vocab: enc.Vocab) -> list[WindowItem]:
    """Window items over labeled propositions only.

    Every labeled proposition acts as a head; candidate tails are the other
    labeled propositions in its retained window.  Context text may include
    unlabeled propositions (their text is visible, only labels are hidden).
    """
    items = []
    for doc in pool_corpus.documents:
        lab = sorted(pid for (d, pid) in labeled if d == doc.doc_id)
        if not lab:
            continue
        lab_set = set(lab)
        for head in lab:
            context = window_for_head(doc, head, window_cfg)
            tail_ids = [i for i in context if i != head and i in lab_set]
            if not tail_ids:
                continue
            prop_ids = [vocab.encode_text(doc.propositions[i].text)
                        for i in context]
            pos = {pid: k for k, pid in enumerate(context)}
            labels = np.array(
                [CLASS_INDEX[revealed.get((doc.doc_id, head, i), "no_rel")]
                 for i in tail_ids], dtype=np.int64)
            items.append(WindowItem(
                doc_id=doc.doc_id, head=head, context=context,
                prop_ids=prop_ids, head_pos=pos[head],
                tail_positions=[pos[i] for i in tail_ids],
                tail_ids=tail_ids, labels=labels))
    return items


class ActiveLearningRun:
    """Shared engine: the simulated loop runs it start to finish; the
    annotation service advances it one labeled batch at a time."""

    def __init__(self, pool_corpus: Corpus, test_corpus: Corpus, cfg: ALConfig,
                 warm_start: Checkpoint | None = None):
        self.pool_corpus = pool_corpus
        self.test_corpus = test_corpus
        self.cfg = cfg
        self.warm_start = warm_start
        self.pools = PoolState.from_corpus(pool_corpus)
        n_unlabeled = len(self.pools.unlabeled)
        self.budget = cfg.budget or math.ceil(n_unlabeled / cfg.iterations)
        if cfg.iterations * self.budget > n_unlabeled:
            raise ConfigurationError(
                f"iterations*budget = {cfg.iterations * self.budget} exceeds "
                f"pool size {n_unlabeled}")
        self.vocab = warm_start.vocab if warm_start else enc.build_vocab(pool_corpus)
        self.model: Checkpoint | None = warm_start
        self.revealed: dict = {}
        self.iteration = 0
        self.trace = ALTrace(strategy=cfg.strategy, seed=cfg.seed,
                             warm_start=warm_start is not None)

    @property
    def done(self) -> bool:
        return self.iteration >= self.cfg.iterations

    def select_batch(self) -> list:
        t = self.iteration + 1
        strategy = self.cfg.strategy
        if strategy in MODEL_BASED and self.model is None:
            strategy = "random_prop"  # nothing to score with at iteration 1
        ctx = SelectionContext(
            seed=derive_seed(self.cfg.seed, "select", t),
            checkpoint=self.model, window_cfg=self.cfg.window,
            mc_passes=self.cfg.mc_passes,
            markers=load_markers(self.cfg.marker_file))
        b = min(self.budget, len(self.pools.unlabeled))
        if b < self.budget:
            self.trace.truncated = True
        return select(strategy, self.pool_corpus, self.pools, b, ctx)

    def ingest_batch(self, batch: list, revealed: dict) -> None:
        self.pools = self.pools.acquire(batch)
        self.revealed.update(revealed)

    def _fit_current(self, t: int) -> tuple[Checkpoint, bool]:
        """Train M_t on the current labeled pool; deterministic in (seed, t).

        Returns (checkpoint, trained_flag); the flag is False when no pair
        examples were derivable yet.
        """
        train_cfg = replace(self.cfg.train,
                            seed=derive_seed(self.cfg.seed, "train", t))
        items = training_items(self.pool_corpus, self.pools.labeled,
                               self.revealed, self.cfg.window, self.vocab)
        if not items:
            return self._untrained_checkpoint(train_cfg, t), False
        if self.warm_start is not None:
            return train_on_items(
                items, self.vocab, self.warm_start.encoder_config, train_cfg,
                enc_params=self.warm_start.encoder_params,
                head_params=self.warm_start.head_params,
                source_tag=f"warm-iter{t}"), True
        enc_cfg = replace(self.cfg.encoder,
                          seed=derive_seed(self.cfg.seed, "enc-init", t))
        return train_on_items(items, self.vocab, enc_cfg, train_cfg,
                              source_tag=f"scratch-iter{t}"), True

    def rebuild_model(self) -> None:
        """Recreate the current model after a restart (training is
        deterministic, so this reproduces it exactly)."""
        self.model, _ = self._fit_current(self.iteration)

    def train_and_evaluate(self, batch: list) -> dict:
        t = self.iteration + 1
        ckpt, trained = self._fit_current(t)
        empty = not trained
        self.model = ckpt
        predictions = [rec for doc in self.test_corpus.documents
                       for rec in predict_document(doc, ckpt, self.cfg.window)]
        metrics = evaluate(predictions, self.test_corpus, self.cfg.window)
        record = {
            "iteration": t,
            "selected": [list(k) for k in batch],
            "labeled_size": len(self.pools.labeled),
            "macro_f1": metrics["macro_f1"],
            "per_class": metrics["per_class"],
            "empty_training": empty,
        }
        self.trace.records.append(record)
        self.iteration = t
        return record

    def _untrained_checkpoint(self, train_cfg: TrainConfig, t: int) -> Checkpoint:
        if self.warm_start is not None:
            return self.warm_start
        enc_cfg = replace(self.cfg.encoder,
                          seed=derive_seed(self.cfg.seed, "enc-init", t))
        return Checkpoint(
            encoder_config=enc_cfg, vocab=self.vocab,
            encoder_params=enc.init_encoder_params(enc_cfg, self.vocab.size),
            head_params=init_head_params(enc_cfg.dim, train_cfg.seed),
            metadata={"steps": 0, "kind": "untrained"})


def run_al(pool_corpus: Corpus, test_corpus: Corpus, cfg: ALConfig,
           warm_start: Checkpoint | None = None) -> ALTrace:
    """Run the full simulated-oracle loop.  External-oracle runs are hosted
    by the annotation service, which drives the same engine."""
    if cfg.oracle != "simulated":
        raise ConfigurationError(
            "external-oracle runs are driven by the annotation service; "
            "use serve (CLI) or server.AnnotationService")
    engine = ActiveLearningRun(pool_corpus, test_corpus, cfg, warm_start)
    while not engine.done:
        if not engine.pools.unlabeled:
            engine.trace.truncated = True
            break
        batch = engine.select_batch()
        labeled_after = engine.pools.labeled | frozenset(batch)
        revealed = reveal_gold(pool_corpus, labeled_after, cfg.window.window)
        engine.ingest_batch(batch, revealed)
        engine.train_and_evaluate(batch)
    return engine.trace


def compare_strategies(pool_corpus: Corpus, test_corpus: Corpus,
                       base_cfg: ALConfig, strategies: list[str],
                       seeds: list[int],
                       warm_start: Checkpoint | None = None) -> dict:
    """Macro-F1 per strategy and iteration, averaged over seeds.

    With a warm-start checkpoint, every strategy runs both cold and warm and
    the report carries per-cell deltas (warm minus cold).
    """
    if not strategies:
        raise ConfigurationError("need at least one strategy")
    variants = [(s, False) for s in strategies]
    if warm_start is not None:
        variants += [(s, True) for s in strategies]
    rows = []
    for strategy, warm in variants:
        for seed in seeds:
            cfg = replace(base_cfg, strategy=strategy, seed=seed)
            trace = run_al(pool_corpus, test_corpus, cfg,
                           warm_start=warm_start if warm else None)
            rows.extend(trace.rows())
    means: dict[tuple, dict] = {}
    for row in rows:
        key = (row["strategy"], row["warm_start"], row["iteration"])
        means.setdefault(key, []).append(row["macro_f1"])
    mean_rows = [
        {"strategy": s, "warm_start": w, "iteration": it,
         "mean_macro_f1": float(np.mean(v)), "n_seeds": len(v)}
        for (s, w, it), v in sorted(means.items())
    ]
    deltas = []
    if warm_start is not None:
        cold = {(r["strategy"], r["iteration"]): r["mean_macro_f1"]
                for r in mean_rows if not r["warm_start"]}
        for r in mean_rows:
            if r["warm_start"]:
                key = (r["strategy"], r["iteration"])
                deltas.append({"strategy": key[0], "iteration": key[1],
                               "delta": r["mean_macro_f1"] - cold[key]})
    return {"cells": rows, "means": mean_rows, "deltas": deltas}
