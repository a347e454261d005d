"""Corpus data model: documents of typed propositions with directed relations.

The canonical on-disk format is JSON lines, one document per line:

    {"doc_id": "...",
     "propositions": [{"id": 0, "text": "...", "type": "evaluation"}, ...],
     "relations": [{"head": 0, "tail": 2, "label": "support"}, ...]}

Unknown fields are ignored with a warning.  A relation points from the tail
proposition (the one doing the supporting/attacking) to the head proposition
(the one being supported/attacked).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

from .errors import (
    CorpusFormatError,
    DuplicateDocumentError,
    UndefinedInputError,
)
from .markers import DEFAULT_MARKERS
from .rand import substream

logger = logging.getLogger(__name__)

PROPOSITION_TYPES = frozenset({
    "evaluation", "request", "fact", "reference", "quote", "non-arg",
    "claim", "premise", "major-claim", "policy", "value", "testimony",
    "unknown",
})
FACTUAL_TYPES = frozenset({"fact", "reference", "quote"})
SUBJECTIVE_TYPES = frozenset({"evaluation", "request"})
RELATION_LABELS = ("support", "attack")
SPLITS = ("train", "validation", "test", "unlabeled")

# Planted relations never span more than this many propositions.
MAX_PLANT_DISTANCE = 20


@dataclass(frozen=True)
class Proposition:
    id: int
    text: str
    ptype: str = "unknown"

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("proposition text must be non-empty after trimming")
        if self.ptype not in PROPOSITION_TYPES:
            raise ValueError(f"unknown proposition type: {self.ptype!r}")


@dataclass(frozen=True)
class Relation:
    head: int
    tail: int
    label: str

    def __post_init__(self):
        if self.head == self.tail:
            raise ValueError("relation head and tail must differ")
        if self.label not in RELATION_LABELS:
            raise ValueError(f"unknown relation label: {self.label!r}")


@dataclass(frozen=True)
class Document:
    doc_id: str
    propositions: tuple[Proposition, ...]
    relations: tuple[Relation, ...] = ()

    def __post_init__(self):
        n = len(self.propositions)
        for i, prop in enumerate(self.propositions):
            if prop.id != i:
                raise ValueError(
                    f"doc {self.doc_id}: proposition id {prop.id} at position {i}"
                )
        for rel in self.relations:
            if not (0 <= rel.head < n and 0 <= rel.tail < n):
                raise ValueError(
                    f"doc {self.doc_id}: relation ({rel.head},{rel.tail}) out of range"
                )

    def gold_label(self, head: int, tail: int) -> str | None:
        for rel in self.relations:
            if rel.head == head and rel.tail == tail:
                return rel.label
        return None


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...]
    split: str = "train"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"unknown split: {self.split!r}")
        seen = set()
        for doc in self.documents:
            if doc.doc_id in seen:
                raise DuplicateDocumentError(f"duplicate doc_id {doc.doc_id!r}")
            seen.add(doc.doc_id)

    def __iter__(self):
        return iter(self.documents)

    def __len__(self):
        return len(self.documents)

    def document(self, doc_id: str) -> Document:
        for doc in self.documents:
            if doc.doc_id == doc_id:
                return doc
        raise KeyError(doc_id)

    @property
    def n_propositions(self) -> int:
        return sum(len(d.propositions) for d in self.documents)

    @property
    def n_relations(self) -> int:
        return sum(len(d.relations) for d in self.documents)

    @property
    def has_attack(self) -> bool:
        return any(r.label == "attack" for d in self.documents for r in d.relations)


@dataclass
class ValidationReport:
    errors: list[tuple[str, str, str]] = field(default_factory=list)
    warnings: list[tuple[str, str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


# ---------------------------------------------------------------------------
# Parsing / serialization

_KNOWN_DOC_FIELDS = {"doc_id", "propositions", "relations"}
_KNOWN_PROP_FIELDS = {"id", "text", "type"}
_KNOWN_REL_FIELDS = {"head", "tail", "label"}


def _parse_document(record: dict, line_no: int) -> Document:
    if not isinstance(record, dict):
        raise CorpusFormatError(line_no, "document record must be an object")
    unknown = set(record) - _KNOWN_DOC_FIELDS
    if unknown:
        logger.warning("line %d: ignoring unknown fields %s", line_no, sorted(unknown))
    try:
        doc_id = record["doc_id"]
        raw_props = record["propositions"]
    except KeyError as exc:
        raise CorpusFormatError(line_no, f"missing field {exc.args[0]!r}") from exc
    if not isinstance(doc_id, str) or not doc_id:
        raise CorpusFormatError(line_no, "doc_id must be a non-empty string")

    props = []
    for pos, raw in enumerate(raw_props):
        unknown = set(raw) - _KNOWN_PROP_FIELDS
        if unknown:
            logger.warning("line %d: ignoring unknown proposition fields %s",
                           line_no, sorted(unknown))
        try:
            # ids are normalized to positional order regardless of input value
            props.append(Proposition(id=pos, text=raw["text"],
                                     ptype=raw.get("type", "unknown")))
        except (KeyError, ValueError, TypeError) as exc:
            raise CorpusFormatError(line_no, f"bad proposition at index {pos}: {exc}") from exc

    rels = []
    for raw in record.get("relations", []):
        unknown = set(raw) - _KNOWN_REL_FIELDS
        if unknown:
            logger.warning("line %d: ignoring unknown relation fields %s",
                           line_no, sorted(unknown))
        try:
            rels.append(Relation(head=int(raw["head"]), tail=int(raw["tail"]),
                                 label=raw["label"]))
        except (KeyError, ValueError, TypeError) as exc:
            raise CorpusFormatError(line_no, f"bad relation: {exc}") from exc

    try:
        return Document(doc_id=doc_id, propositions=tuple(props), relations=tuple(rels))
    except ValueError as exc:
        raise CorpusFormatError(line_no, str(exc)) from exc


def load_corpus(path, split: str = "train") -> Corpus:
    """Parse a JSON-lines corpus file.

    Raises CorpusFormatError naming the line on malformed records and
    DuplicateDocumentError on repeated doc_ids.
    """
    documents = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(line_no, f"invalid JSON: {exc.msg}") from exc
            documents.append(_parse_document(record, line_no))
    return Corpus(documents=tuple(documents), split=split)


def document_to_record(doc: Document) -> dict:
    return {
        "doc_id": doc.doc_id,
        "propositions": [
            {"id": p.id, "text": p.text, "type": p.ptype} for p in doc.propositions
        ],
        "relations": [
            {"head": r.head, "tail": r.tail, "label": r.label} for r in doc.relations
        ],
    }


def save_corpus(corpus: Corpus, path) -> None:
    """Write the canonical JSON-lines form; load(save(x)) is the identity."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in corpus.documents:
            fh.write(json.dumps(document_to_record(doc), sort_keys=True,
                                separators=(",", ":")))
            fh.write("\n")


# ---------------------------------------------------------------------------
# Validation

RULE_RANGE = "range"
RULE_SELF_LOOP = "self-loop"
RULE_SINGLE_OUTGOING = "single-outgoing"
RULE_FACTUAL_HEAD = "factual-head"


def validate(corpus: Corpus, profile: str = "basic") -> ValidationReport:
    """Check annotation constraints.

    basic: structural rules only (ranges, self-loops).  ampere: additionally
    each proposition may be the tail of at most one relation, and a factual
    head (fact/reference/quote) must not have a subjective tail
    (evaluation/request).
    """
    if profile not in ("basic", "ampere"):
        raise ValueError(f"unknown validation profile: {profile!r}")
    report = ValidationReport()
    for doc in corpus.documents:
        n = len(doc.propositions)
        tail_counts: dict[int, int] = {}
        for rel in doc.relations:
            if not (0 <= rel.head < n and 0 <= rel.tail < n):
                report.errors.append(
                    (doc.doc_id, RULE_RANGE,
                     f"relation ({rel.head},{rel.tail}) out of range"))
                continue
            if rel.head == rel.tail:
                report.errors.append(
                    (doc.doc_id, RULE_SELF_LOOP, f"self loop at {rel.head}"))
                continue
            tail_counts[rel.tail] = tail_counts.get(rel.tail, 0) + 1
            if profile == "ampere":
                head_t = doc.propositions[rel.head].ptype
                tail_t = doc.propositions[rel.tail].ptype
                if head_t in FACTUAL_TYPES and tail_t in SUBJECTIVE_TYPES:
                    report.errors.append(
                        (doc.doc_id, RULE_FACTUAL_HEAD,
                         f"factual head {rel.head} ({head_t}) has subjective "
                         f"tail {rel.tail} ({tail_t})"))
        if profile == "ampere":
            for tail, count in sorted(tail_counts.items()):
                if count > 1:
                    report.errors.append(
                        (doc.doc_id, RULE_SINGLE_OUTGOING,
                         f"proposition {tail} is tail of {count} relations"))
    return report


# ---------------------------------------------------------------------------
# Corpus statistics

def relation_density(corpus: Corpus) -> float:
    """Fraction of propositions that are head of at least one relation."""
    total = corpus.n_propositions
    if total == 0:
        raise UndefinedInputError("relation_density over zero propositions")
    heads = sum(len({r.head for r in d.relations}) for d in corpus.documents)
    return heads / total


def distance_histogram(corpus: Corpus) -> dict[int, int]:
    """Histogram of signed relation distances (tail id minus head id)."""
    hist: dict[int, int] = {}
    for doc in corpus.documents:
        for rel in doc.relations:
            d = rel.tail - rel.head
            hist[d] = hist.get(d, 0) + 1
    return hist


def window_coverage(corpus: Corpus, window: int) -> float:
    """Fraction of relations whose |distance| fits inside the window."""
    if window < 1:
        raise ValueError("window must be >= 1")
    total = corpus.n_relations
    if total == 0:
        return 1.0
    covered = sum(
        1 for doc in corpus.documents for rel in doc.relations
        if abs(rel.tail - rel.head) <= window
    )
    return covered / total


# ---------------------------------------------------------------------------
# Synthetic corpus generation

@dataclass(frozen=True)
class SynthConfig:
    n_docs: int = 100
    props_per_doc: int = 8
    relation_rate: float = 0.35
    distance_skew: float = 0.7
    marker_plant_prob: float = 0.5
    vocab_size: int = 200
    seed: int = 0
    attack_rate: float = 0.1

    def __post_init__(self):
        if self.n_docs < 1 or self.props_per_doc < 1 or self.vocab_size < 1:
            raise ValueError("counts must be >= 1")
        for name in ("relation_rate", "distance_skew", "marker_plant_prob",
                     "attack_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0,1]")


def generate_synthetic(config: SynthConfig) -> Corpus:
    """Deterministic synthetic corpus for desk-scale experiments.

    Each proposition is the tail of at most one relation, planted relations
    span at most MAX_PLANT_DISTANCE propositions, and with probability
    marker_plant_prob a relation's tail text begins with one of the 18
    discourse markers.  Synthetic vocabulary words (w0000...) never collide
    with markers, so markers appear only where planted.
    """
    rng = substream(config.seed, "synth")
    vocab = [f"w{i:04d}" for i in range(config.vocab_size)]
    documents = []
    for di in range(config.n_docs):
        n = config.props_per_doc
        texts = []
        for _ in range(n):
            k = int(rng.integers(4, 10))
            texts.append(" ".join(vocab[int(rng.integers(0, config.vocab_size))]
                                  for _ in range(k)))
        relations = []
        for tail in range(n):
            if rng.random() >= config.relation_rate:
                continue
            room_left = tail            # heads before the tail (positive distance)
            room_right = n - 1 - tail   # heads after the tail (negative distance)
            if room_left == 0 and room_right == 0:
                continue
            dist = 1 + min(int(rng.geometric(0.45)) - 1, MAX_PLANT_DISTANCE - 1)
            positive = rng.random() < config.distance_skew
            if positive and room_left == 0:
                positive = False
            elif not positive and room_right == 0:
                positive = True
            dist = min(dist, room_left if positive else room_right)
            head = tail - dist if positive else tail + dist
            label = "attack" if rng.random() < config.attack_rate else "support"
            relations.append(Relation(head=head, tail=tail, label=label))
        for rel in relations:
            if rng.random() < config.marker_plant_prob:
                marker = DEFAULT_MARKERS[int(rng.integers(0, len(DEFAULT_MARKERS)))]
                texts[rel.tail] = f"{marker} {texts[rel.tail]}"
        type_pool = ("evaluation", "request", "fact", "reference", "quote", "non-arg")
        ptypes = [type_pool[int(rng.integers(0, len(type_pool)))] for _ in range(n)]
        # Setting a conflicting tail to non-arg can never create a new
        # violation elsewhere: non-arg is neither factual nor subjective.
        for rel in relations:
            if ptypes[rel.head] in FACTUAL_TYPES and ptypes[rel.tail] in SUBJECTIVE_TYPES:
                ptypes[rel.tail] = "non-arg"
        props = tuple(
            Proposition(id=i, text=texts[i], ptype=ptypes[i]) for i in range(n)
        )
        documents.append(Document(doc_id=f"synth-{di:05d}", propositions=props,
                                  relations=tuple(relations)))
    return Corpus(documents=tuple(documents), split="train")
