"""Self-supervised objectives on unlabeled corpora.

Two objectives produce encoder checkpoints for warm-starting:

* masked-token prediction: 15% of non-special positions are selected
  (80% masked / 10% random token / 10% kept) and the original ids are
  predicted from the final states through a vocabulary projection;
* context perturbation: 20% of a document's propositions are replaced by
  random propositions from other documents, a disjoint 20% are shuffled
  within the document, and a 3-way classifier over each proposition's
  separator state predicts what happened to it.

The auxiliary projection heads are trained jointly but not part of the
returned checkpoint; downstream use initializes a fresh relation head.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import encoder as enc
from .checkpoint import Checkpoint
from .corpus import Corpus, Document
from .errors import ConfigurationError, EmptyTrainingError
from .rand import derive_seed, substream
from .relhead import Adam, TrainConfig, lr_at

PERTURBATION_LABELS = ("replaced", "shuffled", "unchanged")
_PERT_INDEX = {c: i for i, c in enumerate(PERTURBATION_LABELS)}

MASK_FRACTION = 0.15
MASK_ACTION_SPLIT = (0.8, 0.1)  # mask, random; remainder kept
PERTURB_FRACTION = 0.2


@dataclass(frozen=True)
class MaskPlan:
    positions: tuple[int, ...]
    actions: tuple[str, ...]      # mask | random | keep, aligned with positions
    original_ids: tuple[int, ...]
    replacement_ids: tuple[int, ...]


def make_mask_plan(token_ids: np.ndarray, vocab_size: int, seed: int) -> MaskPlan:
    """Select ~15% of maskable positions (ceil, at least 1) with 80/10/10
    actions; separator and other special positions are never selected."""
    ids = np.asarray(token_ids)
    maskable = np.flatnonzero(ids >= enc.N_SPECIALS)
    if maskable.size == 0:
        return MaskPlan((), (), (), ())
    rng = substream(seed, "mask-plan")
    n_sel = max(1, math.ceil(MASK_FRACTION * maskable.size))
    chosen = np.sort(rng.choice(maskable, size=n_sel, replace=False))
    actions = []
    replacements = []
    for _ in chosen:
        u = rng.random()
        if u < MASK_ACTION_SPLIT[0]:
            actions.append("mask")
            replacements.append(enc.MASK_ID)
        elif u < MASK_ACTION_SPLIT[0] + MASK_ACTION_SPLIT[1]:
            actions.append("random")
            replacements.append(int(rng.integers(enc.N_SPECIALS, vocab_size)))
        else:
            actions.append("keep")
            replacements.append(-1)
    return MaskPlan(
        positions=tuple(int(p) for p in chosen),
        actions=tuple(actions),
        original_ids=tuple(int(ids[p]) for p in chosen),
        replacement_ids=tuple(replacements),
    )


def apply_mask_plan(token_ids: np.ndarray, plan: MaskPlan) -> np.ndarray:
    out = np.asarray(token_ids).copy()
    for pos, action, rep in zip(plan.positions, plan.actions, plan.replacement_ids):
        if action != "keep":
            out[pos] = rep
    return out


def perturb_document(doc: Document, pool: list[Document],
                     seed: int) -> tuple[list[str], list[str]]:
    """Perturbed proposition texts and a label per final position.

    20% (rounded to nearest, at least 1) of the propositions are replaced by
    uniform draws from other documents, a disjoint 20% are permuted among
    themselves (fixed points allowed, labeled shuffled regardless), the rest
    are unchanged.
    """
    n = len(doc.propositions)
    if n < 5:
        raise ValueError("perturbation needs at least 5 propositions")
    donors = [p.text for d in pool if d.doc_id != doc.doc_id for p in d.propositions]
    if not donors:
        raise ConfigurationError("replacement pool has no other documents")
    rng = substream(seed, "perturb", doc.doc_id)
    k = max(1, round(PERTURB_FRACTION * n))
    order = rng.permutation(n)
    replace_pos = sorted(int(i) for i in order[:k])
    shuffle_pos = sorted(int(i) for i in order[k:2 * k])

    texts = [p.text for p in doc.propositions]
    labels = ["unchanged"] * n
    for i in replace_pos:
        texts[i] = donors[int(rng.integers(0, len(donors)))]
        labels[i] = "replaced"
    perm = rng.permutation(len(shuffle_pos))
    originals = [texts[i] for i in shuffle_pos]
    for slot, src in zip(shuffle_pos, perm):
        texts[slot] = originals[int(src)]
        labels[slot] = "shuffled"
    return texts, labels


# ---------------------------------------------------------------------------
# Pretraining loop

def _pack_sequences(prop_texts: list[str], vocab: enc.Vocab,
                    max_positions: int) -> list[list[int]]:
    """Greedy front-truncation: keep whole propositions while they fit.

    A proposition longer than the whole budget is clipped so every document
    contributes at least one sequence element.
    """
    packed = []
    total = 0
    for text in prop_texts:
        ids = vocab.encode_text(text)[:max_positions - 1]
        cost = len(ids) + 1
        if total + cost > max_positions:
            break
        packed.append(ids)
        total += cost
    return packed


def pretrain(unlabeled: Corpus, objective: str, encoder_cfg: enc.EncoderConfig,
             train_cfg: TrainConfig) -> Checkpoint:
    """Run one self-supervised objective and return an encoder checkpoint."""
    ckpt, _ = pretrain_with_aux(unlabeled, objective, encoder_cfg, train_cfg)
    return ckpt


def pretrain_with_aux(unlabeled: Corpus, objective: str,
                      encoder_cfg: enc.EncoderConfig,
                      train_cfg: TrainConfig) -> tuple[Checkpoint, dict]:
    """Like pretrain, but also returns the trained auxiliary projection so
    the objective itself can be evaluated on held-out documents."""
    if objective not in ("mlm", "context_pert"):
        raise ValueError(f"unknown objective: {objective!r}")
    if len(unlabeled.documents) == 0:
        raise EmptyTrainingError("pretraining corpus is empty")
    vocab = enc.build_vocab(unlabeled)
    params = enc.init_encoder_params(encoder_cfg, vocab.size)
    rng_proj = substream(train_cfg.seed, "pretrain-proj")
    d = encoder_cfg.dim
    if objective == "mlm":
        aux = {"proj_w": rng_proj.normal(0.0, 0.02, (d, vocab.size)),
               "proj_b": np.zeros(vocab.size)}
    else:
        aux = {"proj_w": rng_proj.normal(0.0, 0.02, (d, len(PERTURBATION_LABELS))),
               "proj_b": np.zeros(len(PERTURBATION_LABELS))}

    docs = list(unlabeled.documents)
    usable = [doc for doc in docs
              if objective == "mlm" or len(doc.propositions) >= 5]
    if not usable:
        raise EmptyTrainingError("no documents usable for this objective")

    opt_enc = Adam(params)
    opt_aux = Adam(aux)
    n_batches = math.ceil(len(usable) / train_cfg.batch_size)
    total_steps = train_cfg.epochs * n_batches
    epoch_log = []
    step = 0
    for epoch in range(train_cfg.epochs):
        order = substream(train_cfg.seed, "pretrain-shuffle", epoch).permutation(len(usable))
        epoch_loss = 0.0
        epoch_items = 0
        for b in range(n_batches):
            batch = [usable[i] for i in order[b * train_cfg.batch_size:
                                              (b + 1) * train_cfg.batch_size]]
            enc_grads = enc.zeros_like_params(params)
            aux_grads = {k: np.zeros_like(v) for k, v in aux.items()}
            loss_sum = 0.0
            count = 0
            for doc in batch:
                seed = derive_seed(train_cfg.seed, "pretrain", epoch, doc.doc_id)
                if objective == "mlm":
                    out = _mlm_doc_loss(doc, vocab, params, aux, encoder_cfg, seed)
                else:
                    out = _pert_doc_loss(doc, docs, vocab, params, aux,
                                         encoder_cfg, seed)
                if out is None:
                    continue
                ls, n, eg, ag = out
                loss_sum += ls
                count += n
                enc.add_grads(enc_grads, eg)
                for k in aux_grads:
                    aux_grads[k] += ag[k]
            if count:
                inv = 1.0 / count
                for k in enc_grads:
                    enc_grads[k] *= inv
                for k in aux_grads:
                    aux_grads[k] *= inv
                lr = lr_at(step, total_steps, train_cfg)
                opt_enc.step(params, enc_grads, lr)
                opt_aux.step(aux, aux_grads, lr)
                epoch_loss += loss_sum
                epoch_items += count
            step += 1
        epoch_log.append({"epoch": epoch + 1,
                          "loss": epoch_loss / max(epoch_items, 1)})
    ckpt = Checkpoint(
        encoder_config=encoder_cfg, vocab=vocab, encoder_params=params,
        head_params=None,
        metadata={"steps": step, "kind": objective, "epochs": epoch_log,
                  "source_tag": unlabeled.split},
    )
    return ckpt, aux


def perturbation_accuracy(ckpt: Checkpoint, aux: dict, docs: list[Document],
                          all_docs: list[Document], seed: int) -> float:
    """Eval-mode perturbation-type classification accuracy over documents."""
    correct = 0
    total = 0
    for doc in docs:
        texts, labels = perturb_document(doc, all_docs, seed)
        packed = _pack_sequences(texts, ckpt.vocab,
                                 ckpt.encoder_config.max_positions)
        if not packed:
            continue
        ids, sep_positions = enc.sequence_from_props(packed)
        states, _ = enc.forward_sequence(ids, ckpt.encoder_params,
                                         ckpt.encoder_config, "eval")
        pool = enc.prop_pool_matrix(sep_positions, len(ids))
        logits = (pool @ states) @ aux["proj_w"] + aux["proj_b"]
        gold = np.array([_PERT_INDEX[l] for l in labels[:len(packed)]])
        correct += int((logits.argmax(axis=1) == gold).sum())
        total += len(gold)
    return correct / max(total, 1)


def _project_loss(states_sel: np.ndarray, gold: np.ndarray, aux: dict):
    """Cross-entropy through the projection; returns loss sum and gradients."""
    logits = states_sel @ aux["proj_w"] + aux["proj_b"]
    z = logits - logits.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    losses = -logp[np.arange(len(gold)), gold]
    d_logits = np.exp(logp)
    d_logits[np.arange(len(gold)), gold] -= 1.0
    ag = {"proj_w": states_sel.T @ d_logits, "proj_b": d_logits.sum(axis=0)}
    d_states_sel = d_logits @ aux["proj_w"].T
    return float(losses.sum()), d_states_sel, ag


def _mlm_doc_loss(doc, vocab, params, aux, cfg, seed):
    packed = _pack_sequences([p.text for p in doc.propositions], vocab,
                             cfg.max_positions)
    if not packed:
        return None
    ids, _ = enc.sequence_from_props(packed)
    plan = make_mask_plan(ids, vocab.size, seed)
    if not plan.positions:
        return None
    corrupted = apply_mask_plan(ids, plan)
    rng = substream(seed, "dropout")
    states, cache = enc.forward_sequence(corrupted, params, cfg, "train", rng)
    sel = list(plan.positions)
    gold = np.array(plan.original_ids, dtype=np.int64)
    loss, d_sel, ag = _project_loss(states[sel], gold, aux)
    d_states = np.zeros_like(states)
    d_states[sel] = d_sel
    eg = enc.backward_sequence(d_states, cache, params)
    return loss, len(sel), eg, ag


def _pert_doc_loss(doc, all_docs, vocab, params, aux, cfg, seed):
    # classifies plain pooled proposition states: the linear projection has
    # no use for the window-centering the pair scorer needs
    texts, labels = perturb_document(doc, all_docs, seed)
    packed = _pack_sequences(texts, vocab, cfg.max_positions)
    if not packed:
        return None
    ids, sep_positions = enc.sequence_from_props(packed)
    rng = substream(seed, "dropout")
    states, cache = enc.forward_sequence(ids, params, cfg, "train", rng)
    pool = enc.prop_pool_matrix(sep_positions, len(ids))
    gold = np.array([_PERT_INDEX[l] for l in labels[:len(packed)]], dtype=np.int64)
    loss, d_pooled, ag = _project_loss(pool @ states, gold, aux)
    eg = enc.backward_sequence(pool.T @ d_pooled, cache, params)
    return loss, len(gold), eg, ag
