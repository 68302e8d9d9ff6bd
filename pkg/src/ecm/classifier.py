"""Emotion classifiers: a lexicon hit-counter and a recurrent net.

Both are used to auto-annotate dialogue corpora and to score generated
responses. The recurrent classifier is a GRU (optionally bidirectional)
over word embeddings with a 6-way softmax on the final state(s).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import numerics as nm
from .corpus import (CATEGORIES, DialoguePair, EmotionCategory, EmotionLexicon,
                     PAD_ID, Vocab, build_vocab, split_corpus)
from .errors import CheckpointError, ConfigError, TrainingDiverged, TrainingError
from .numerics import GruParams, Tensor
from .optim import clip_global_norm, sgd_step, shuffled_batches, zero_grads

GRU_FIELDS = ["w_xr", "w_hr", "b_r", "w_xz", "w_hz", "b_z", "w_xn", "w_hn", "b_n"]


@dataclass
class LexiconClassifier:
    """Counts lexicon hits per category; argmax with a fixed tie order
    (category definition order), empty hits fall back to Other."""

    lexicon: EmotionLexicon

    def classify(self, tokens: Sequence[str]) -> EmotionCategory:
        counts = {c: 0 for c in CATEGORIES}
        for tok in tokens:
            cat = self.lexicon.category_of(tok)
            if cat is not None:
                counts[cat] += 1
        best = max((c for c in CATEGORIES if c is not EmotionCategory.OTHER),
                   key=lambda c: (counts[c], -c.index))
        return best if counts[best] > 0 else EmotionCategory.OTHER


@dataclass
class ClassifierConfig:
    vocab_size: int
    embed_dim: int = 32
    hidden: int = 32
    bidirectional: bool = True
    batch_size: int = 32
    lr: float = 0.5
    max_epochs: int = 40
    patience: int = 10
    clip_norm: float = 5.0
    seed: int = 0
    dtype: str = "f32"

    def __post_init__(self):
        if self.vocab_size <= 0 or self.embed_dim <= 0 or self.hidden <= 0:
            raise ConfigError("classifier dims must be positive")
        if self.batch_size < 1 or self.lr <= 0:
            raise ConfigError("batch_size must be >=1 and lr > 0")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "f32" else np.float64

    def to_dict(self) -> dict:
        return asdict(self)


class RecurrentClassifier:
    def __init__(self, config: ClassifierConfig, vocab: Vocab, seed: int = 0):
        if config.vocab_size != vocab.size:
            raise ConfigError("classifier config vocab_size != vocab size")
        self.config = config
        self.vocab = vocab
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng(seed)
        dt = config.np_dtype

        def u(name, shape):
            t = nm.uniform(rng, shape, scale=0.08, dtype=dt)
            self.params[name] = t
            return t

        u("embedding", (config.vocab_size, config.embed_dim))
        self.fwd = GruParams.create(rng, config.embed_dim, config.hidden, dtype=dt)
        for name, t in zip(GRU_FIELDS, self.fwd.tensors()):
            self.params[f"fwd.{name}"] = t
        self.bwd = None
        feat = config.hidden
        if config.bidirectional:
            self.bwd = GruParams.create(rng, config.embed_dim, config.hidden, dtype=dt)
            for name, t in zip(GRU_FIELDS, self.bwd.tensors()):
                self.params[f"bwd.{name}"] = t
            feat *= 2
        u("proj", (feat, len(CATEGORIES)))
        u("proj_bias", (len(CATEGORIES),))

    # ------------------------------------------------------------------

    def _features(self, ids: np.ndarray, mask: np.ndarray) -> Tensor:
        cfg = self.config
        b, t_max = ids.shape
        dt = cfg.np_dtype

        def run(gru: GruParams, order):
            h = nm.zeros((b, cfg.hidden), dtype=dt)
            for t in order:
                x = nm.embedding(self.params["embedding"], ids[:, t])
                h_new = nm.gru_cell(x, h, gru)
                m = Tensor(mask[:, t:t + 1].astype(dt))
                h = nm.add(nm.scale_rows(h_new, m),
                           nm.scale_rows(h, Tensor(1.0 - m.data)))
            return h

        feats = run(self.fwd, range(t_max))
        if self.bwd is not None:
            feats = nm.concat([feats, run(self.bwd, range(t_max - 1, -1, -1))], axis=1)
        return feats

    def _pad(self, id_seqs: Sequence[Sequence[int]]):
        b = len(id_seqs)
        t_max = max(1, max(len(s) for s in id_seqs))
        ids = np.full((b, t_max), PAD_ID, dtype=np.int64)
        mask = np.zeros((b, t_max), dtype=self.config.np_dtype)
        for i, seq in enumerate(id_seqs):
            ids[i, :len(seq)] = seq
            mask[i, :len(seq)] = 1.0
        return ids, mask

    def logits(self, id_seqs: Sequence[Sequence[int]]) -> Tensor:
        ids, mask = self._pad(id_seqs)
        feats = self._features(ids, mask)
        return nm.add(nm.matmul(feats, self.params["proj"]), self.params["proj_bias"])

    def probabilities(self, tokens: Sequence[str]) -> np.ndarray:
        """6-way distribution over categories; sums to 1."""
        return nm.softmax(self.logits([self.vocab.encode(tokens)]), axis=1).data[0]

    def classify(self, tokens: Sequence[str]) -> EmotionCategory:
        return CATEGORIES[int(np.argmax(self.probabilities(tokens)))]

    def classify_batch(self, token_seqs: Sequence[Sequence[str]]) -> list[EmotionCategory]:
        out = []
        for start in range(0, len(token_seqs), 256):
            chunk = token_seqs[start:start + 256]
            logits = self.logits([self.vocab.encode(t) for t in chunk])
            out.extend(CATEGORIES[int(i)] for i in np.argmax(logits.data, axis=1))
        return out

    # ------------------------------------------------------------------

    def loss(self, id_seqs, labels: np.ndarray) -> Tensor:
        lsm = nm.log_softmax(self.logits(id_seqs), axis=1)
        picked = nm.take_per_row(lsm, labels)
        return nm.affine(nm.reduce_sum(picked), -1.0 / len(id_seqs))

    def save(self, path) -> None:
        from .checkpoint import save_checkpoint
        save_checkpoint(path, kind="classifier", config=self.config.to_dict(),
                        tensors={k: v.data for k, v in self.params.items()},
                        vocab=self.vocab)

    @classmethod
    def load(cls, path) -> "RecurrentClassifier":
        from .checkpoint import load_checkpoint
        kind, config_dict, tensors, vocab, _ = load_checkpoint(path)
        if kind != "classifier":
            raise CheckpointError(f"expected a classifier checkpoint, found {kind!r}")
        if vocab is None:
            raise CheckpointError("classifier checkpoint is missing its vocab")
        clf = cls(ClassifierConfig(**config_dict), vocab, seed=0)
        for name, arr in tensors.items():
            if name not in clf.params or clf.params[name].data.shape != arr.shape:
                raise CheckpointError(f"tensor {name} does not match the config")
            clf.params[name].data = arr.astype(clf.config.np_dtype)
        return clf


# ---------------------------------------------------------------------------
# training and annotation


@dataclass
class ClassifierReport:
    overall_accuracy: float
    per_category: dict[str, float]
    counts: dict[str, int]
    epochs_run: int = 0
    train_accuracy: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def _accuracy(clf: RecurrentClassifier, pairs: Sequence[DialoguePair]):
    if not pairs:
        return 0.0, {}, {}
    predicted = clf.classify_batch([p.response for p in pairs])
    hits = {c: 0 for c in CATEGORIES}
    totals = {c: 0 for c in CATEGORIES}
    for pair, pred in zip(pairs, predicted):
        totals[pair.emotion] += 1
        if pred is pair.emotion:
            hits[pair.emotion] += 1
    overall = sum(hits.values()) / len(pairs)
    per_cat = {c.value: (hits[c] / totals[c]) for c in CATEGORIES if totals[c]}
    counts = {c.value: totals[c] for c in CATEGORIES}
    return overall, per_cat, counts


def train_classifier(pairs: Sequence[DialoguePair], config: ClassifierConfig | None = None,
                     vocab: Vocab | None = None, lexicon: EmotionLexicon | None = None,
                     max_vocab: int = 2000,
                     ratios=(0.8, 0.1, 0.1)) -> tuple[RecurrentClassifier, ClassifierReport]:
    """SGD cross-entropy training on labeled pairs (response -> category).
    Splits off validation/test internally, early-stops on validation
    accuracy, and reports held-out accuracy per category."""
    labeled = [p for p in pairs if p.emotion is not None]
    if len({p.emotion for p in labeled}) < 2:
        raise TrainingError("need labeled examples in at least two categories")
    if lexicon is None:
        from .corpus import default_lexicon
        lexicon = default_lexicon()
    if vocab is None:
        vocab = build_vocab(labeled, max_size=max_vocab, lexicon=lexicon)
    if config is None:
        config = ClassifierConfig(vocab_size=vocab.size)

    train, valid, test = split_corpus(labeled, ratios, seed=config.seed)
    if not train:
        raise TrainingError("training split is empty")
    clf = RecurrentClassifier(config, vocab, seed=config.seed)
    tensors = list(clf.params.values())
    encoded = [vocab.encode(p.response) for p in train]
    labels_all = np.array([p.emotion.index for p in train], dtype=np.int64)

    rng = np.random.default_rng(config.seed)
    best_val, best_state, stale, epochs_run = -1.0, None, 0, 0
    for epoch in range(config.max_epochs):
        epochs_run = epoch + 1
        for idx in shuffled_batches(len(train), config.batch_size, rng):
            seqs = [encoded[i] for i in idx]
            labels = labels_all[idx]
            zero_grads(tensors)
            with nm.Tape() as tape:
                loss = clf.loss(seqs, labels)
                if not np.isfinite(loss.data):
                    raise TrainingDiverged("classifier loss is not finite",
                                           epoch=epoch, batch_ids=idx.tolist(),
                                           lr=config.lr)
                tape.backward(loss)
            clip_global_norm(tensors, config.clip_norm)
            sgd_step(tensors, config.lr)
        val_acc, _, _ = _accuracy(clf, valid) if valid else _accuracy(clf, train)
        if val_acc > best_val:
            best_val = val_acc
            best_state = {k: v.data.copy() for k, v in clf.params.items()}
            stale = 0
        else:
            stale += 1
        if stale > config.patience or best_val >= 1.0:
            break
    if best_state is not None:
        for k, v in best_state.items():
            clf.params[k].data = v

    test_pairs = test if test else valid if valid else train
    overall, per_cat, counts = _accuracy(clf, test_pairs)
    train_acc, _, _ = _accuracy(clf, train)
    report = ClassifierReport(overall_accuracy=overall, per_category=per_cat,
                              counts=counts, epochs_run=epochs_run,
                              train_accuracy=train_acc)
    return clf, report


def annotate_corpus(pairs: Sequence[DialoguePair], classifier):
    """Label every pair's response with the classifier's prediction.
    Re-annotating with the same classifier is a no-op. Returns the labeled
    pairs and a category count table."""
    stats = {c.value: 0 for c in CATEGORIES}
    labeled = []
    for pair in pairs:
        cat = classifier.classify(pair.response)
        stats[cat.value] += 1
        labeled.append(DialoguePair(post=pair.post, response=pair.response, emotion=cat))
    return labeled, stats
