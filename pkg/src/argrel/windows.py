"""Windowed head-tail pair construction.

For a head proposition j, the propositions within `window` positions on each
side are candidate tails.  The whole block (head included) is the encoder
input; when its token length (one separator per proposition included)
exceeds the budget, the farthest proposition is dropped from the left end,
then the right end, alternating, until it fits.  The head itself is never
dropped, so nearby candidates - where most gold relations live - survive
truncation first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .corpus import Document
from .errors import UndefinedInputError

PAIR_LABELS = ("support", "attack", "no_rel")
MODES = ("head_given", "end_to_end")


@dataclass(frozen=True)
class WindowConfig:
    window: int = 20
    max_tokens: int = 512
    mode: str = "head_given"

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.max_tokens < 16:
            raise ValueError("max_tokens must be >= 16")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode: {self.mode!r}")


@dataclass(frozen=True)
class PairExample:
    doc_id: str
    head: int
    tail: int
    label: str
    context: tuple[int, ...]


def default_token_len(text: str) -> int:
    from .encoder import tokenize
    return len(tokenize(text))


def window_for_head(doc: Document, head: int, cfg: WindowConfig,
                    token_len: Callable[[str], int] | None = None) -> tuple[int, ...]:
    """Retained proposition ids (document order) around a head, post-truncation."""
    token_len = token_len or default_token_len
    n = len(doc.propositions)
    lo = max(0, head - cfg.window)
    hi = min(n - 1, head + cfg.window)
    ids = list(range(lo, hi + 1))
    costs = {i: token_len(doc.propositions[i].text) + 1 for i in ids}
    total = sum(costs.values())
    drop_left = True
    while total > cfg.max_tokens and len(ids) > 1:
        if drop_left:
            victim = ids[0] if ids[0] != head else ids[-1]
        else:
            victim = ids[-1] if ids[-1] != head else ids[0]
        ids.remove(victim)
        total -= costs[victim]
        drop_left = not drop_left
    if len(ids) == 1 and total > cfg.max_tokens:
        # even the head alone is over budget: nothing usable remains
        return ()
    return tuple(ids)


def heads_for_mode(doc: Document, mode: str) -> list[int]:
    if mode == "end_to_end":
        return list(range(len(doc.propositions)))
    return sorted({rel.head for rel in doc.relations})


def build_examples(doc: Document, cfg: WindowConfig,
                   token_len: Callable[[str], int] | None = None) -> list[PairExample]:
    """One PairExample per (head, retained in-window candidate) pair.

    head_given mode takes heads from the document's gold relations;
    end_to_end treats every proposition as a head.  The label is the gold
    relation label for (head, tail) or no_rel.
    """
    gold = {(r.head, r.tail): r.label for r in doc.relations}
    examples = []
    for head in heads_for_mode(doc, cfg.mode):
        context = window_for_head(doc, head, cfg, token_len)
        for tail in context:
            if tail == head:
                continue
            examples.append(PairExample(
                doc_id=doc.doc_id, head=head, tail=tail,
                label=gold.get((head, tail), "no_rel"), context=context))
    return examples


def positive_ratio(examples: list[PairExample]) -> float:
    """Fraction of examples labeled support or attack."""
    if not examples:
        raise UndefinedInputError("positive_ratio of an empty example list")
    positives = sum(1 for ex in examples if ex.label in ("support", "attack"))
    return positives / len(examples)
