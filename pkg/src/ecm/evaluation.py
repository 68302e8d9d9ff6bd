"""Objective metrics: perplexity, emotion accuracy against a classifier,
ablation comparisons, and the emotion-interaction-pattern matrix."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .corpus import CATEGORIES, DialogueExample, DialoguePair, EmotionCategory, Vocab
from .errors import ConfigError, ContractError
from .inference import generate_all_emotions
from .model import EcmConfig, EcmModel
from .training import TrainConfig, corpus_nll, init_from_pretrained, train


def perplexity(model: EcmModel, examples: Sequence[DialogueExample],
               batch_size: int = 32) -> float:
    """exp(total teacher-forced NLL in nats / total non-pad target tokens)."""
    if not examples:
        raise ContractError("perplexity of an empty corpus")
    nll, tokens = corpus_nll(model, examples, batch_size=batch_size)
    return math.exp(nll / tokens)


def emotion_accuracy(model: EcmModel, classifier, posts: Sequence[Sequence[str]],
                     vocab: Vocab, width: int = 4, max_len: int | None = None,
                     generate_fn: Callable | None = None):
    """For every post, request a top response in each of the six categories
    and score agreement between the requested category and the
    classifier's label for the generated response. Empty generations count
    as misses.

    Returns (overall, per_category fractions, counts, mean_alpha or None).
    """
    if not posts:
        raise ContractError("emotion accuracy needs at least one post")
    generate = generate_fn or (lambda post_ids: generate_all_emotions(
        model, vocab, post_ids, width=width, max_len=max_len))
    hits = {c: 0 for c in CATEGORIES}
    totals = {c: 0 for c in CATEGORIES}
    alphas: list[float] = []
    track_alpha = model.config.use_external_memory
    for post in posts:
        post_ids = vocab.encode(post)
        responses = generate(post_ids)
        for cat in CATEGORIES:
            totals[cat] += 1
            output = responses.get(cat)
            if output is None or not output.token_ids:
                continue
            if track_alpha:
                alphas.extend(step.alpha for step in output.trace.steps)
            predicted = classifier.classify(vocab.decode(output.token_ids))
            if predicted is cat:
                hits[cat] += 1
    overall = sum(hits.values()) / sum(totals.values())
    per_category = {c.value: hits[c] / totals[c] for c in CATEGORIES}
    counts = {c.value: totals[c] for c in CATEGORIES}
    mean_alpha = (sum(alphas) / len(alphas)) if track_alpha and alphas else (
        0.0 if track_alpha else None)
    return overall, per_category, counts, mean_alpha


@dataclass
class EvalReport:
    perplexity: float
    emotion_accuracy: float
    per_category: dict[str, float]
    counts: dict[str, int]
    mean_alpha: float | None = None

    def __post_init__(self):
        if not (0.0 <= self.emotion_accuracy <= 1.0):
            raise ContractError("accuracy out of [0, 1]")
        if self.perplexity < 1.0 - 1e-9:
            raise ContractError("perplexity below 1")

    def to_dict(self) -> dict:
        return {"perplexity": self.perplexity,
                "emotion_accuracy": self.emotion_accuracy,
                "per_category": self.per_category,
                "counts": self.counts,
                "mean_alpha": self.mean_alpha}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def render(self) -> str:
        lines = [f"perplexity        {self.perplexity:10.3f}",
                 f"emotion accuracy  {self.emotion_accuracy:10.3f}"]
        if self.mean_alpha is not None:
            lines.append(f"mean alpha        {self.mean_alpha:10.3f}")
        lines.append("per category:")
        for name, value in self.per_category.items():
            lines.append(f"  {name:<8s} {value:8.3f}   ({self.counts.get(name, 0)} generations)")
        return "\n".join(lines)


def evaluate_model(model: EcmModel, classifier, test_examples, test_posts,
                   vocab: Vocab, width: int = 4, max_len: int | None = None,
                   batch_size: int = 32) -> EvalReport:
    ppl = perplexity(model, test_examples, batch_size=batch_size)
    overall, per_cat, counts, mean_alpha = emotion_accuracy(
        model, classifier, test_posts, vocab, width=width, max_len=max_len)
    return EvalReport(perplexity=ppl, emotion_accuracy=overall,
                      per_category=per_cat, counts=counts, mean_alpha=mean_alpha)


def mean_final_memory_norm(model: EcmModel, vocab: Vocab,
                           examples: Sequence[DialogueExample],
                           max_len: int | None = None) -> float:
    """Average leftover internal-memory norm after greedily decoding each
    example's post under its own category."""
    from .inference import greedy_decode
    if not model.config.use_internal_memory:
        raise ConfigError("model has no internal memory")
    bank = model.params["memory.bank"].data
    norms = []
    for ex in examples:
        out = greedy_decode(model, vocab, ex.post_ids, ex.emotion, max_len=max_len)
        if out.trace.steps:
            norms.append(out.trace.steps[-1].memory_norm)
        else:
            row = bank[ex.emotion.index].astype(np.float64)
            norms.append(float(np.sqrt((row ** 2).sum())))
    return sum(norms) / len(norms)


def unique_posts(pairs: Sequence[DialoguePair], cap: int | None = None) -> list[list[str]]:
    seen = {}
    for p in pairs:
        seen.setdefault(tuple(p.post), None)
    posts = [list(t) for t in seen]
    return posts[:cap] if cap else posts


# ---------------------------------------------------------------------------
# ablations

ABLATION_NAMES = ["full", "wo_emb", "wo_imem", "wo_emem"]


def ablation_configs(full: EcmConfig) -> dict[str, EcmConfig]:
    """The four standard configurations: everything on, then each
    mechanism removed in turn."""
    if not (full.use_category_embedding and full.use_internal_memory
            and full.use_external_memory):
        raise ConfigError("ablations start from a config with all mechanisms on")
    base = full.to_dict()

    def variant(**off):
        d = dict(base)
        d.update(off)
        return EcmConfig.from_dict(d)

    return {
        "full": variant(),
        "wo_emb": variant(use_category_embedding=False),
        "wo_imem": variant(use_internal_memory=False),
        "wo_emem": variant(use_external_memory=False),
    }


def ablation_suite(train_examples, valid_examples, test_examples, test_posts,
                   vocab: Vocab, classifier, pretrained: EcmModel,
                   full_config: EcmConfig, train_config: TrainConfig,
                   width: int = 4, quiet: bool = True) -> dict[str, EvalReport]:
    """Train and evaluate the four ablation variants with identical seeds,
    data and warm start."""
    reports: dict[str, EvalReport] = {}
    for name, config in ablation_configs(full_config).items():
        model, _ = init_from_pretrained(config, pretrained, seed=train_config.seed)
        train(model, train_examples, valid_examples, train_config, quiet=quiet)
        reports[name] = evaluate_model(model, classifier, test_examples,
                                       test_posts, vocab, width=width)
    return reports


def render_ablation_table(reports: dict[str, EvalReport]) -> str:
    lines = [f"{'variant':<10s} {'perplexity':>10s} {'accuracy':>9s} {'alpha':>7s}"]
    for name, rep in reports.items():
        alpha = f"{rep.mean_alpha:7.3f}" if rep.mean_alpha is not None else "      -"
        lines.append(f"{name:<10s} {rep.perplexity:10.3f} {rep.emotion_accuracy:9.3f} {alpha}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# emotion interaction patterns


@dataclass
class EipMatrix:
    """Row-normalized counts of (post emotion -> response emotion) pairs.
    Rows with no support are all-zero and flagged."""

    values: np.ndarray = field(default_factory=lambda: np.zeros((6, 6)))
    supported: list[bool] = field(default_factory=lambda: [False] * 6)

    def row(self, cat: EmotionCategory) -> np.ndarray:
        return self.values[cat.index]

    def to_dict(self) -> dict:
        return {"rows": [c.value for c in CATEGORIES],
                "cols": [c.value for c in CATEGORIES],
                "values": [[float(v) for v in row] for row in self.values],
                "supported": list(self.supported)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        header = "," + ",".join(c.value for c in CATEGORIES)
        lines = [header]
        for i, cat in enumerate(CATEGORIES):
            lines.append(cat.value + "," + ",".join(f"{v:.6f}" for v in self.values[i]))
        return "\n".join(lines) + "\n"

    def render(self) -> str:
        width = 8
        header = " " * 9 + "".join(f"{c.value:>{width}s}" for c in CATEGORIES)
        lines = [header]
        for i, cat in enumerate(CATEGORIES):
            cells = "".join(f"{v:{width}.3f}" for v in self.values[i])
            mark = "" if self.supported[i] else "   (no support)"
            lines.append(f"{cat.value:<9s}{cells}{mark}")
        return "\n".join(lines)


def eip_matrix(label_pairs: Sequence[tuple[EmotionCategory, EmotionCategory]]) -> EipMatrix:
    """Conditional frequencies response-given-post from labeled pairs."""
    counts = np.zeros((6, 6), dtype=np.float64)
    for post_cat, resp_cat in label_pairs:
        counts[post_cat.index, resp_cat.index] += 1.0
    values = np.zeros_like(counts)
    supported = []
    for i in range(6):
        row_sum = counts[i].sum()
        supported.append(bool(row_sum > 0))
        if row_sum > 0:
            values[i] = counts[i] / row_sum
    return EipMatrix(values=values, supported=supported)


def eip_from_corpus(pairs: Sequence[DialoguePair], post_classifier) -> EipMatrix:
    """Label posts with the classifier and pair them with the stored
    response labels."""
    labeled = []
    for p in pairs:
        if p.emotion is None:
            raise ContractError("corpus must carry response emotion labels")
        labeled.append((post_classifier.classify(p.post), p.emotion))
    return eip_matrix(labeled)
