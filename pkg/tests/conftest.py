"""Shared fixtures: a small synthetic corpus and models trained on it.

The `small_pipeline` fixture trains a baseline and a full-mechanism model
on a reduced corpus (hidden 32, ~700 pairs); it takes tens of seconds and
is shared session-wide. The full desk-scale run lives in
tests/test_acceptance.py.
"""

import pytest

from ecm import corpus as cp
from ecm.classifier import LexiconClassifier
from ecm.model import EcmConfig, EcmModel
from ecm.training import TrainConfig, init_from_pretrained, train


class SmallPipeline:
    def __init__(self):
        self.lexicon = cp.default_lexicon()
        pairs, self.counts = cp.generate_synthetic_corpus(seed=31, n_pairs=700)
        self.pairs = pairs
        self.vocab = cp.build_vocab(pairs, max_size=2000, lexicon=self.lexicon)
        self.train_pairs, self.valid_pairs, self.test_pairs = cp.split_corpus(
            pairs, (0.8, 0.1, 0.1), seed=31)
        self.train_ex = cp.encode_pairs(self.train_pairs, self.vocab)
        self.valid_ex = cp.encode_pairs(self.valid_pairs, self.vocab)
        self.test_ex = cp.encode_pairs(self.test_pairs, self.vocab)
        self.oracle = LexiconClassifier(self.lexicon)

        tcfg = TrainConfig(batch_size=32, lr=0.5, max_epochs=8, patience=3, seed=5)
        self.baseline = EcmModel(self.config(), seed=5)
        self.baseline_log = train(self.baseline, self.train_ex, self.valid_ex, tcfg)
        self.model, self.copied = init_from_pretrained(
            self.config(use_category_embedding=True, use_internal_memory=True,
                        use_external_memory=True),
            self.baseline, seed=6)
        self.model_log = train(self.model, self.train_ex, self.valid_ex, tcfg)

    def config(self, **kw) -> EcmConfig:
        return EcmConfig(vocab_generic=self.vocab.n_generic,
                         vocab_emotion=self.vocab.n_emotion,
                         hidden=32, layers=1, embed_dim=24, emotion_dim=16,
                         attn_dim=32, max_decode_len=16, **kw)


@pytest.fixture(scope="session")
def small_pipeline():
    return SmallPipeline()
