"""Shared fixtures: tiny hand-built corpora and a small trained checkpoint."""

import pytest

from argrel.corpus import Corpus, Document, Proposition, Relation, SynthConfig, generate_synthetic
from argrel.encoder import EncoderConfig
from argrel.relhead import TrainConfig, train
from argrel.windows import WindowConfig


def make_doc(doc_id, texts, relations=(), types=None):
    types = types or ["unknown"] * len(texts)
    props = tuple(Proposition(id=i, text=t, ptype=ty)
                  for i, (t, ty) in enumerate(zip(texts, types)))
    rels = tuple(Relation(head=h, tail=t, label=l) for h, t, l in relations)
    return Document(doc_id=doc_id, propositions=props, relations=rels)


@pytest.fixture
def one_doc_corpus():
    """Four propositions, one support relation at distance +2."""
    doc = make_doc("d1", [
        "the method is novel",
        "results are strong on benchmark a",
        "because the gains hold across seeds",
        "please add an ablation study",
    ], relations=[(0, 2, "support")])
    return Corpus(documents=(doc,), split="train")


@pytest.fixture
def five_prop_doc():
    return make_doc("five", [
        "claim zero stands",
        "point one follows",
        "the central claim two",
        "however point three disagrees",
        "point four wraps up",
    ], relations=[(2, 1, "support"), (2, 3, "attack")])


SMALL_ENCODER = EncoderConfig(dim=16, layers=1, heads=2, ffn_mult=2,
                              dropout_p=0.1, max_positions=128, seed=0)
SMALL_WINDOW = WindowConfig(window=4, max_tokens=96, mode="head_given")


@pytest.fixture(scope="session")
def small_synth_corpus():
    return generate_synthetic(SynthConfig(
        n_docs=12, props_per_doc=5, relation_rate=0.6, distance_skew=0.7,
        marker_plant_prob=0.8, vocab_size=40, seed=11))


@pytest.fixture(scope="session")
def small_checkpoint(small_synth_corpus):
    """A quickly trained model for strategy/prediction tests."""
    return train(small_synth_corpus, SMALL_WINDOW,
                 TrainConfig(learning_rate=3e-3, warmup_steps=5, epochs=2,
                             batch_size=8, seed=1),
                 encoder_cfg=SMALL_ENCODER)
