"""Tokenizer, vocabulary, and a small trainable sequence encoder.

The encoder reads one window of propositions, each prefixed by a separator
token, through stacked self-attention blocks (post-layer-norm residuals,
tanh-approximation GELU, learned positional embeddings) and returns the last
layer's state at each separator position as that proposition's
representation.

Everything is float64 numpy with hand-written backprop; `encode_window` in
train mode returns a cache from which `encode_window_backward` produces
exact analytic gradients, verifiable against central finite differences.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .rand import substream

SEP_ID, PAD_ID, UNK_ID, MASK_ID = 0, 1, 2, 3
SPECIAL_TOKENS = ("[SEP]", "[PAD]", "[UNK]", "[MASK]")
N_SPECIALS = len(SPECIAL_TOKENS)

_TOKEN_RE = re.compile(r"[a-z0-9]+|[^a-z0-9\s]")

_LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, punctuation as separate tokens."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Vocab:
    id_to_token: tuple[str, ...]

    def __post_init__(self):
        if self.id_to_token[:N_SPECIALS] != SPECIAL_TOKENS:
            raise ValueError("vocab must start with the special tokens")
        object.__setattr__(self, "_token_to_id",
                           {t: i for i, t in enumerate(self.id_to_token)})

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def encode(self, tokens: list[str]) -> list[int]:
        t2i = self._token_to_id
        return [t2i.get(t, UNK_ID) for t in tokens]

    def encode_text(self, text: str) -> list[int]:
        return self.encode(tokenize(text))

    def token_len(self, text: str) -> int:
        return len(tokenize(text))


def build_vocab(corpus, min_count: int = 1) -> Vocab:
    """Vocabulary over a corpus; ids ordered by (-frequency, token)."""
    counts: Counter[str] = Counter()
    for doc in corpus.documents:
        for prop in doc.propositions:
            counts.update(tokenize(prop.text))
    kept = sorted(
        (t for t, c in counts.items() if c >= min_count),
        key=lambda t: (-counts[t], t),
    )
    return Vocab(id_to_token=SPECIAL_TOKENS + tuple(kept))


@dataclass(frozen=True)
class EncoderConfig:
    dim: int = 64
    layers: int = 2
    heads: int = 2
    ffn_mult: int = 4
    dropout_p: float = 0.1
    max_positions: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.dim % self.heads != 0:
            raise ValueError("dim must be divisible by heads")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0,1)")

    def to_dict(self) -> dict:
        return {
            "dim": self.dim, "layers": self.layers, "heads": self.heads,
            "ffn_mult": self.ffn_mult, "dropout_p": self.dropout_p,
            "max_positions": self.max_positions, "seed": self.seed,
        }


def init_encoder_params(cfg: EncoderConfig, vocab_size: int) -> dict[str, np.ndarray]:
    rng = substream(cfg.seed, "encoder-init")
    d, m = cfg.dim, cfg.dim * cfg.ffn_mult

    def glorot(fan_in, fan_out):
        # scaled init keeps attention logits and their gradients at a usable
        # magnitude for small dims, unlike a fixed tiny std
        std = math.sqrt(2.0 / (fan_in + fan_out))
        return rng.normal(0.0, std, (fan_in, fan_out))

    params = {
        "tok_emb": rng.normal(0.0, 0.1, (vocab_size, d)),
        "pos_emb": rng.normal(0.0, 0.1, (cfg.max_positions, d)),
    }
    for i in range(cfg.layers):
        p = f"l{i}."
        for name in ("wq", "wk", "wv", "wo"):
            params[p + "attn." + name] = glorot(d, d)
        for name in ("bq", "bk", "bv", "bo"):
            params[p + "attn." + name] = np.zeros(d)
        params[p + "ln1.g"] = np.ones(d)
        params[p + "ln1.b"] = np.zeros(d)
        params[p + "ffn.w1"] = glorot(d, m)
        params[p + "ffn.b1"] = np.zeros(m)
        params[p + "ffn.w2"] = glorot(m, d)
        params[p + "ffn.b2"] = np.zeros(d)
        params[p + "ln2.g"] = np.ones(d)
        params[p + "ln2.b"] = np.zeros(d)
    return params


def zeros_like_params(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


def add_grads(into: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
    for k, g in grads.items():
        into[k] += g


# ---------------------------------------------------------------------------
# Primitive forward/backward pieces

def _gelu(x):
    u = _GELU_C * (x + _GELU_A * x ** 3)
    return 0.5 * x * (1.0 + np.tanh(u))


def _gelu_grad(x):
    u = _GELU_C * (x + _GELU_A * x ** 3)
    t = np.tanh(u)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * _GELU_C * (1.0 + 3.0 * _GELU_A * x ** 2)


def _layernorm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv, g)


def _layernorm_backward(dy, cache):
    xhat, inv, g = cache
    dg = (dy * xhat).sum(axis=0)
    db = dy.sum(axis=0)
    dxhat = dy * g
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def _dropout_mask(rng, shape, p):
    if p <= 0.0:
        return None
    return (rng.random(shape) >= p) / (1.0 - p)


def _apply_mask(x, mask):
    return x if mask is None else x * mask


def _split_heads(x, heads):
    t, d = x.shape
    return x.reshape(t, heads, d // heads).transpose(1, 0, 2)


def _merge_heads(x):
    h, t, dh = x.shape
    return x.transpose(1, 0, 2).reshape(t, h * dh)


# ---------------------------------------------------------------------------
# Sequence forward / backward

def sequence_from_props(prop_token_ids: list[list[int]]) -> tuple[np.ndarray, list[int]]:
    """Token id sequence [SEP p1... SEP p2...] and the separator positions."""
    ids: list[int] = []
    sep_positions: list[int] = []
    for prop in prop_token_ids:
        sep_positions.append(len(ids))
        ids.append(SEP_ID)
        ids.extend(prop)
    return np.asarray(ids, dtype=np.int64), sep_positions


def prop_pool_matrix(sep_positions: list[int], t_len: int) -> np.ndarray:
    """(n_props, T) averaging matrix: row k means over proposition k's span
    (its separator plus its tokens)."""
    bounds = list(sep_positions) + [t_len]
    pool = np.zeros((len(sep_positions), t_len))
    for k in range(len(sep_positions)):
        span = slice(bounds[k], bounds[k + 1])
        pool[k, span] = 1.0 / (bounds[k + 1] - bounds[k])
    return pool


def forward_sequence(ids: np.ndarray, params: dict, cfg: EncoderConfig,
                     mode: str = "eval", rng=None) -> tuple[np.ndarray, dict]:
    """Run the encoder over one token sequence.

    mode "eval" disables dropout; "train" and "mc_dropout" draw masks from
    rng.  Returns (states (T,dim), cache); the cache carries everything
    backward_sequence needs.
    """
    if mode not in ("train", "eval", "mc_dropout"):
        raise ValueError(f"unknown mode: {mode!r}")
    t_len = len(ids)
    if t_len > cfg.max_positions:
        raise ValueError(
            f"sequence length {t_len} exceeds max_positions {cfg.max_positions}")
    p = cfg.dropout_p if mode in ("train", "mc_dropout") else 0.0
    heads, d = cfg.heads, cfg.dim
    scale = 1.0 / math.sqrt(d // heads)

    emb = params["tok_emb"][ids] + params["pos_emb"][:t_len]
    mask_e = _dropout_mask(rng, emb.shape, p)
    x = _apply_mask(emb, mask_e)

    layer_caches = []
    for i in range(cfg.layers):
        pr = f"l{i}."
        a = params
        q = x @ a[pr + "attn.wq"] + a[pr + "attn.bq"]
        k = x @ a[pr + "attn.wk"] + a[pr + "attn.bk"]
        v = x @ a[pr + "attn.wv"] + a[pr + "attn.bv"]
        qh, kh, vh = (_split_heads(z, heads) for z in (q, k, v))
        scores = qh @ kh.transpose(0, 2, 1) * scale
        scores -= scores.max(axis=-1, keepdims=True)
        exp = np.exp(scores)
        probs = exp / exp.sum(axis=-1, keepdims=True)
        ctx = probs @ vh
        merged = _merge_heads(ctx)
        attn = merged @ a[pr + "attn.wo"] + a[pr + "attn.bo"]
        mask_a = _dropout_mask(rng, attn.shape, p)
        r1 = x + _apply_mask(attn, mask_a)
        x1, ln1_cache = _layernorm(r1, a[pr + "ln1.g"], a[pr + "ln1.b"])
        ff1 = x1 @ a[pr + "ffn.w1"] + a[pr + "ffn.b1"]
        act = _gelu(ff1)
        ff2 = act @ a[pr + "ffn.w2"] + a[pr + "ffn.b2"]
        mask_f = _dropout_mask(rng, ff2.shape, p)
        r2 = x1 + _apply_mask(ff2, mask_f)
        x2, ln2_cache = _layernorm(r2, a[pr + "ln2.g"], a[pr + "ln2.b"])
        layer_caches.append({
            "x_in": x, "qh": qh, "kh": kh, "vh": vh, "probs": probs,
            "merged": merged, "mask_a": mask_a, "ln1": ln1_cache, "x1": x1,
            "ff1": ff1, "act": act, "mask_f": mask_f, "ln2": ln2_cache,
        })
        x = x2

    cache = {"ids": ids, "mask_e": mask_e, "layers": layer_caches,
             "scale": scale, "cfg": cfg}
    return x, cache


def backward_sequence(d_states: np.ndarray, cache: dict,
                      params: dict) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every parameter, given d(loss)/d(states)."""
    cfg: EncoderConfig = cache["cfg"]
    heads = cfg.heads
    scale = cache["scale"]
    ids = cache["ids"]
    grads = zeros_like_params(params)

    dx = d_states
    for i in reversed(range(cfg.layers)):
        pr = f"l{i}."
        lc = cache["layers"][i]
        d_r2, dg2, db2 = _layernorm_backward(dx, lc["ln2"])
        grads[pr + "ln2.g"] += dg2
        grads[pr + "ln2.b"] += db2
        d_x1 = d_r2.copy()
        d_ff2 = _apply_mask(d_r2, lc["mask_f"])
        grads[pr + "ffn.w2"] += lc["act"].T @ d_ff2
        grads[pr + "ffn.b2"] += d_ff2.sum(axis=0)
        d_act = d_ff2 @ params[pr + "ffn.w2"].T
        d_ff1 = d_act * _gelu_grad(lc["ff1"])
        grads[pr + "ffn.w1"] += lc["x1"].T @ d_ff1
        grads[pr + "ffn.b1"] += d_ff1.sum(axis=0)
        d_x1 += d_ff1 @ params[pr + "ffn.w1"].T

        d_r1, dg1, db1 = _layernorm_backward(d_x1, lc["ln1"])
        grads[pr + "ln1.g"] += dg1
        grads[pr + "ln1.b"] += db1
        dx = d_r1.copy()
        d_attn = _apply_mask(d_r1, lc["mask_a"])
        grads[pr + "attn.wo"] += lc["merged"].T @ d_attn
        grads[pr + "attn.bo"] += d_attn.sum(axis=0)
        d_merged = d_attn @ params[pr + "attn.wo"].T
        d_ctx = _split_heads(d_merged, heads)
        probs, vh, qh, kh = lc["probs"], lc["vh"], lc["qh"], lc["kh"]
        d_probs = d_ctx @ vh.transpose(0, 2, 1)
        d_vh = probs.transpose(0, 2, 1) @ d_ctx
        d_scores = probs * (d_probs - (d_probs * probs).sum(axis=-1, keepdims=True))
        d_qh = (d_scores @ kh) * scale
        d_kh = (d_scores.transpose(0, 2, 1) @ qh) * scale
        x_in = lc["x_in"]
        for name, dzh in (("wq", d_qh), ("wk", d_kh), ("wv", d_vh)):
            dz = _merge_heads(dzh)
            grads[pr + "attn." + name] += x_in.T @ dz
            grads[pr + "attn.b" + name[1]] += dz.sum(axis=0)
            dx += dz @ params[pr + "attn." + name].T

    d_emb = _apply_mask(dx, cache["mask_e"])
    np.add.at(grads["tok_emb"], ids, d_emb)
    grads["pos_emb"][:len(ids)] += d_emb
    return grads


# ---------------------------------------------------------------------------
# Window-level API

def encode_window(prop_token_ids: list[list[int]], params: dict,
                  cfg: EncoderConfig, mode: str = "eval",
                  seed: int = 0) -> tuple[np.ndarray, dict | None]:
    """Encode a window of propositions; one representation per proposition.

    A proposition's representation is the mean of the last layer's states
    over its span (separator token included).  eval mode is deterministic;
    mc_dropout applies dropout masks seeded by `seed`; train mode
    additionally returns a cache for the backward pass.
    """
    ids, sep_positions = sequence_from_props(prop_token_ids)
    rng = substream(seed, "dropout") if mode in ("train", "mc_dropout") else None
    states, cache = forward_sequence(ids, params, cfg, mode, rng)
    pool = prop_pool_matrix(sep_positions, len(ids))
    pooled = pool @ states
    # Window-centering removes the large shared component of the pooled
    # states; without it the pair scorer's tanh saturates along that
    # direction and gradients die before any pair signal is picked up.
    reps = pooled - pooled.mean(axis=0, keepdims=True)
    if mode != "train":
        return reps, None
    cache["pool"] = pool
    return reps, cache


def encode_window_backward(d_reps: np.ndarray, cache: dict,
                           params: dict) -> dict[str, np.ndarray]:
    """Backward through encode_window given d(loss)/d(representations)."""
    if cache is None or "pool" not in cache:
        raise RuntimeError("backward requires the cache from a train-mode forward")
    d_pooled = d_reps - d_reps.mean(axis=0, keepdims=True)
    d_states = cache["pool"].T @ d_pooled
    return backward_sequence(d_states, cache, params)
