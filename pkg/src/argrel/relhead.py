"""Pairwise output layer, supervised training loop, and document prediction.

A pair (head j, tail i) is scored from the concatenated proposition
representations: softmax(tanh([H_j; H_i] W1 + b1) W2 + b2) over
(support, attack, no_rel).  Training minimizes cross-entropy over all pair
examples in a window, with adaptive-moment gradient descent over encoder
and head parameters jointly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import encoder as enc
from .checkpoint import Checkpoint
from .corpus import Corpus, Document
from .errors import ConfigurationError, EmptyTrainingError, IncompatibleCheckpointError
from .rand import derive_seed, substream
from .windows import PairExample, WindowConfig, build_examples

CLASSES = ("support", "attack", "no_rel")
CLASS_INDEX = {c: i for i, c in enumerate(CLASSES)}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    warmup_steps: int = 100
    schedule: str = "constant"
    epochs: int = 15
    batch_size: int = 16
    seed: int = 0
    class_weighting: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.schedule not in ("constant", "linear"):
            raise ValueError(f"unknown schedule: {self.schedule!r}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size >= 1, epochs >= 0")


def init_head_params(dim: int, seed: int, hidden: int | None = None) -> dict[str, np.ndarray]:
    hidden = hidden or dim
    rng = substream(seed, "head-init")
    return {
        "w1": rng.normal(0.0, 0.02, (2 * dim, hidden)),
        "b1": np.zeros(hidden),
        "w2": rng.normal(0.0, 0.02, (hidden, len(CLASSES))),
        "b2": np.zeros(len(CLASSES)),
    }


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict_pair(h_head: np.ndarray, h_tail: np.ndarray,
                 head_params: dict[str, np.ndarray]) -> np.ndarray:
    """Probability distribution over (support, attack, no_rel) for one pair."""
    cat = np.concatenate([h_head, h_tail])
    if cat.shape[0] != head_params["w1"].shape[0]:
        raise ValueError(
            f"width mismatch: got {cat.shape[0]}, head expects "
            f"{head_params['w1'].shape[0]}")
    z = np.tanh(cat @ head_params["w1"] + head_params["b1"])
    logits = z @ head_params["w2"] + head_params["b2"]
    return _softmax(logits)


def _head_forward(cat: np.ndarray, hp: dict, mask=None):
    catd = cat if mask is None else cat * mask
    z = np.tanh(catd @ hp["w1"] + hp["b1"])
    logits = z @ hp["w2"] + hp["b2"]
    return logits, (catd, z, mask)


def _head_backward(d_logits: np.ndarray, fwd_cache, hp: dict):
    catd, z, mask = fwd_cache
    grads = {
        "w2": z.T @ d_logits,
        "b2": d_logits.sum(axis=0),
    }
    dz = d_logits @ hp["w2"].T
    dpre = dz * (1.0 - z ** 2)
    grads["w1"] = catd.T @ dpre
    grads["b1"] = dpre.sum(axis=0)
    d_cat = dpre @ hp["w1"].T
    if mask is not None:
        d_cat = d_cat * mask
    return grads, d_cat


# ---------------------------------------------------------------------------
# Window grouping

@dataclass
class WindowItem:
    """One head with its retained context and the labeled tail candidates."""
    doc_id: str
    head: int
    context: tuple[int, ...]
    prop_ids: list[list[int]]
    head_pos: int
    tail_positions: list[int]
    tail_ids: list[int]
    labels: np.ndarray  # int class indices, aligned with tail_positions


def group_examples(examples: list[PairExample], docs_by_id: dict[str, Document],
                   vocab: enc.Vocab) -> list[WindowItem]:
    grouped: dict[tuple[str, int, tuple[int, ...]], list[PairExample]] = {}
    for ex in examples:
        grouped.setdefault((ex.doc_id, ex.head, ex.context), []).append(ex)
    items = []
    for (doc_id, head, context), group in sorted(
            grouped.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        doc = docs_by_id[doc_id]
        prop_ids = [vocab.encode_text(doc.propositions[i].text) for i in context]
        pos = {pid: k for k, pid in enumerate(context)}
        items.append(WindowItem(
            doc_id=doc_id, head=head, context=context, prop_ids=prop_ids,
            head_pos=pos[head],
            tail_positions=[pos[ex.tail] for ex in group],
            tail_ids=[ex.tail for ex in group],
            labels=np.array([CLASS_INDEX[ex.label] for ex in group], dtype=np.int64),
        ))
    return items


# ---------------------------------------------------------------------------
# Loss / gradients for one window

def window_forward(item: WindowItem, enc_params: dict, head_params: dict,
                   cfg: enc.EncoderConfig, mode: str = "eval", seed: int = 0):
    """Logits for the window's pairs; train mode also returns caches."""
    reps, cache = enc.encode_window(item.prop_ids, enc_params, cfg, mode, seed)
    hj = reps[item.head_pos]
    ht = reps[item.tail_positions]
    cat = np.concatenate([np.broadcast_to(hj, ht.shape), ht], axis=1)
    mask = None
    if mode in ("train", "mc_dropout") and cfg.dropout_p > 0.0:
        rng = substream(seed, "head-dropout")
        mask = (rng.random(cat.shape) >= cfg.dropout_p) / (1.0 - cfg.dropout_p)
    logits, head_cache = _head_forward(cat, head_params, mask)
    return logits, (cache, head_cache)


def window_backward(d_logits: np.ndarray, caches, item: WindowItem,
                    enc_params: dict, head_params: dict):
    enc_cache, head_cache = caches
    head_grads, d_cat = _head_backward(d_logits, head_cache, head_params)
    dim = d_cat.shape[1] // 2
    d_reps = np.zeros((len(item.prop_ids), dim))
    d_reps[item.head_pos] = d_cat[:, :dim].sum(axis=0)
    np.add.at(d_reps, item.tail_positions, d_cat[:, dim:])
    enc_grads = enc.encode_window_backward(d_reps, enc_cache, enc_params)
    return enc_grads, head_grads


def cross_entropy(logits: np.ndarray, gold: np.ndarray,
                  weights: np.ndarray | None = None):
    """Weighted mean cross-entropy and d(loss)/d(logits) before the mean scale.

    Returns (sum of weighted per-pair losses, sum of weights, d_logits for
    the *sum*); callers divide by the batch weight total.
    """
    z = logits - logits.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    w = np.ones(len(gold)) if weights is None else weights[gold]
    losses = -logp[np.arange(len(gold)), gold]
    probs = np.exp(logp)
    d_logits = probs.copy()
    d_logits[np.arange(len(gold)), gold] -= 1.0
    d_logits *= w[:, None]
    return float((losses * w).sum()), float(w.sum()), d_logits


# ---------------------------------------------------------------------------
# Optimizer

class Adam:
    def __init__(self, params: dict[str, np.ndarray], beta1=0.9, beta2=0.999,
                 eps=1e-8):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0

    def step(self, params: dict, grads: dict, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, g in grads.items():
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            params[k] -= lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    lr = cfg.learning_rate
    if cfg.warmup_steps > 0 and step < cfg.warmup_steps:
        return lr * (step + 1) / cfg.warmup_steps
    if cfg.schedule == "linear" and total_steps > cfg.warmup_steps:
        remaining = (total_steps - step) / (total_steps - cfg.warmup_steps)
        return lr * max(0.0, remaining)
    return lr


# ---------------------------------------------------------------------------
# Training

def class_weights_from(items: list[WindowItem]) -> np.ndarray:
    counts = np.zeros(len(CLASSES))
    for item in items:
        for c in item.labels:
            counts[c] += 1
    total = counts.sum()
    weights = np.where(counts > 0, total / (len(CLASSES) * np.maximum(counts, 1)), 0.0)
    return weights


def train_on_items(items: list[WindowItem], vocab: enc.Vocab,
                   encoder_cfg: enc.EncoderConfig, train_cfg: TrainConfig,
                   enc_params: dict | None = None, head_params: dict | None = None,
                   source_tag: str = "") -> Checkpoint:
    """Core loop shared by supervised training and the AL driver."""
    if not items:
        raise EmptyTrainingError("no pair examples to train on")
    enc_params = ({k: v.copy() for k, v in enc_params.items()} if enc_params
                  else enc.init_encoder_params(encoder_cfg, vocab.size))
    head_params = ({k: v.copy() for k, v in head_params.items()} if head_params
                   else init_head_params(encoder_cfg.dim, train_cfg.seed))
    weights = class_weights_from(items) if train_cfg.class_weighting else None

    opt_enc = Adam(enc_params)
    opt_head = Adam(head_params)
    n_batches = math.ceil(len(items) / train_cfg.batch_size)
    total_steps = train_cfg.epochs * n_batches
    epoch_log = []
    step = 0
    for epoch in range(train_cfg.epochs):
        order = substream(train_cfg.seed, "shuffle", epoch).permutation(len(items))
        epoch_loss = 0.0
        n_correct = 0
        n_pairs = 0
        for b in range(n_batches):
            batch = [items[i] for i in order[b * train_cfg.batch_size:
                                             (b + 1) * train_cfg.batch_size]]
            enc_grads = enc.zeros_like_params(enc_params)
            head_grads = {k: np.zeros_like(v) for k, v in head_params.items()}
            loss_sum = 0.0
            weight_sum = 0.0
            for wi, item in enumerate(batch):
                seed = derive_seed(train_cfg.seed, "drop", step, wi)
                logits, caches = window_forward(
                    item, enc_params, head_params, encoder_cfg, "train", seed)
                ls, ws, d_logits = cross_entropy(logits, item.labels, weights)
                loss_sum += ls
                weight_sum += ws
                n_correct += int((logits.argmax(axis=1) == item.labels).sum())
                n_pairs += len(item.labels)
                eg, hg = window_backward(d_logits, caches, item,
                                         enc_params, head_params)
                enc.add_grads(enc_grads, eg)
                for k in head_grads:
                    head_grads[k] += hg[k]
            inv = 1.0 / max(weight_sum, 1e-12)
            for k in enc_grads:
                enc_grads[k] *= inv
            for k in head_grads:
                head_grads[k] *= inv
            lr = lr_at(step, total_steps, train_cfg)
            opt_enc.step(enc_params, enc_grads, lr)
            opt_head.step(head_params, head_grads, lr)
            epoch_loss += loss_sum * inv
            step += 1
        epoch_log.append({
            "epoch": epoch + 1,
            "loss": epoch_loss / n_batches,
            "train_accuracy": n_correct / max(n_pairs, 1),
        })
    return Checkpoint(
        encoder_config=encoder_cfg, vocab=vocab, encoder_params=enc_params,
        head_params=head_params,
        metadata={"steps": step, "source_tag": source_tag, "epochs": epoch_log,
                  "kind": "supervised"},
    )


def _check_window_fits(window_cfg: WindowConfig, encoder_cfg: enc.EncoderConfig):
    if window_cfg.max_tokens > encoder_cfg.max_positions:
        raise ConfigurationError(
            f"window max_tokens {window_cfg.max_tokens} exceeds encoder "
            f"max_positions {encoder_cfg.max_positions}")


def train(corpus: Corpus, window_cfg: WindowConfig, train_cfg: TrainConfig,
          encoder_cfg: enc.EncoderConfig | None = None,
          init: Checkpoint | None = None, source_tag: str = "") -> Checkpoint:
    """Supervised training over a corpus; optionally warm-started from init."""
    if init is not None:
        if encoder_cfg is not None and encoder_cfg != init.encoder_config:
            raise IncompatibleCheckpointError(
                "requested encoder config differs from the checkpoint's")
        encoder_cfg = init.encoder_config
        vocab = init.vocab
    else:
        encoder_cfg = encoder_cfg or enc.EncoderConfig()
        vocab = build_train_vocab(corpus)
    _check_window_fits(window_cfg, encoder_cfg)
    docs_by_id = {d.doc_id: d for d in corpus.documents}
    examples = [ex for doc in corpus.documents
                for ex in build_examples(doc, window_cfg)]
    items = group_examples(examples, docs_by_id, vocab)
    return train_on_items(
        items, vocab, encoder_cfg, train_cfg,
        enc_params=init.encoder_params if init else None,
        head_params=init.head_params if init else None,
        source_tag=source_tag or corpus.split)


def build_train_vocab(corpus: Corpus, min_count: int = 1) -> enc.Vocab:
    return enc.build_vocab(corpus, min_count)


# ---------------------------------------------------------------------------
# Prediction / evaluation helpers

@dataclass(frozen=True)
class PredictionRecord:
    doc_id: str
    head: int
    tail: int
    label: str
    probs: tuple[float, ...] | None = None


def predict_document(doc: Document, ckpt: Checkpoint,
                     window_cfg: WindowConfig) -> list[PredictionRecord]:
    """Score every in-window pair of the document in eval mode."""
    _check_window_fits(window_cfg, ckpt.encoder_config)
    if ckpt.head_params is None:
        raise ConfigurationError("checkpoint has no relation head")
    examples = build_examples(doc, window_cfg)
    items = group_examples(examples, {doc.doc_id: doc}, ckpt.vocab)
    records = []
    for item in items:
        logits, _ = window_forward(item, ckpt.encoder_params, ckpt.head_params,
                                   ckpt.encoder_config, "eval")
        probs = _softmax(logits)
        preds = logits.argmax(axis=1)
        for row, tail in enumerate(item.tail_ids):
            records.append(PredictionRecord(
                doc_id=doc.doc_id, head=item.head, tail=tail,
                label=CLASSES[preds[row]],
                probs=tuple(float(p) for p in probs[row])))
    return records


def items_accuracy(items: list[WindowItem], ckpt: Checkpoint) -> float:
    """Eval-mode accuracy over the given window items."""
    correct = 0
    total = 0
    for item in items:
        logits, _ = window_forward(item, ckpt.encoder_params, ckpt.head_params,
                                   ckpt.encoder_config, "eval")
        correct += int((logits.argmax(axis=1) == item.labels).sum())
        total += len(item.labels)
    return correct / max(total, 1)
