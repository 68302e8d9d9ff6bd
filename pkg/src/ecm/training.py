"""SGD training with the two-stage schedule: pretrain a plain seq2seq,
then warm-start the emotion-mechanism model from it and finetune.

Reference-scale settings were batch 128 / lr 0.5 / 20 epochs on millions
of pairs; desk defaults are batch 16 / lr 0.5 with early stopping on
validation perplexity (no improvement for `patience` epochs). Gradient
clipping (global norm) is always on: lr 0.5 on hand-rolled GRUs diverges
without it.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import numerics as nm
from .corpus import DialogueExample, Vocab
from .errors import ConfigError, TrainingDiverged
from .model import EcmConfig, EcmModel, make_batch
from .optim import clip_global_norm, sgd_step, shuffled_batches, zero_grads


@dataclass
class TrainConfig:
    batch_size: int = 16
    lr: float = 0.5
    max_epochs: int = 20
    patience: int = 3
    clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lr < 0:
            raise ConfigError("lr must be non-negative")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class EpochStats:
    epoch: int
    ce: float          # train cross entropy, nats per target token
    alpha_bce: float   # selector supervision, nats per target token
    mem_norm: float    # final internal-memory norm, mean per example
    val_ppl: float
    seconds: float


@dataclass
class TrainLog:
    epochs: list[EpochStats] = field(default_factory=list)

    CSV_HEADER = "epoch,ce,alpha_bce,mem_norm,val_ppl,seconds"

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        for e in self.epochs:
            lines.append(f"{e.epoch},{e.ce:.6f},{e.alpha_bce:.6f},"
                         f"{e.mem_norm:.6f},{e.val_ppl:.6f},{e.seconds:.3f}")
        return "\n".join(lines) + "\n"

    def save_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())

    def core(self) -> list[tuple]:
        """Everything except wall time, for determinism comparisons."""
        return [(e.epoch, e.ce, e.alpha_bce, e.mem_norm, e.val_ppl) for e in self.epochs]


def corpus_nll(model: EcmModel, examples: Sequence[DialogueExample],
               batch_size: int = 32) -> tuple[float, int]:
    """Teacher-forced negative log likelihood (cross-entropy term only)
    summed over the corpus, plus the non-pad target token count. Batches
    are cut in corpus order; per-batch sums are combined with fsum."""
    sums = []
    tokens = 0
    for start in range(0, len(examples), batch_size):
        chunk = examples[start:start + batch_size]
        _, comps = model.forward_loss(make_batch(chunk, dtype=model.config.np_dtype))
        sums.append(comps["ce"])
        tokens += comps["tokens"]
    return math.fsum(sums), tokens


def validation_perplexity(model: EcmModel, examples: Sequence[DialogueExample],
                          batch_size: int = 32) -> float:
    if not examples:
        return float("nan")
    nll, tokens = corpus_nll(model, examples, batch_size)
    return math.exp(nll / tokens)


def train(model: EcmModel, train_examples: Sequence[DialogueExample],
          valid_examples: Sequence[DialogueExample] | None,
          config: TrainConfig,
          checkpoint_dir: str | Path | None = None,
          vocab: Vocab | None = None,
          quiet: bool = True) -> TrainLog:
    """SGD over seeded-shuffle batches; keeps the best-validation weights.
    Aborts with a diagnostic if the loss goes non-finite."""
    if not train_examples:
        raise ConfigError("empty training corpus")
    params = list(model.params.values())
    rng = np.random.default_rng(config.seed)
    log = TrainLog()
    best_ppl = float("inf")
    best_state = None
    stale = 0
    use_val = bool(valid_examples)

    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        ce_sum, bce_sum, mem_sum, token_sum = [], [], [], 0
        for idx in shuffled_batches(len(train_examples), config.batch_size, rng):
            chunk = [train_examples[i] for i in idx]
            batch = make_batch(chunk, dtype=model.config.np_dtype,
                               example_ids=idx.tolist())
            zero_grads(params)
            with nm.Tape() as tape:
                loss, comps = model.forward_loss(batch)
                if not np.isfinite(loss.data):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch} "
                        f"(batch example ids {idx.tolist()}, lr {config.lr})",
                        epoch=epoch, batch_ids=idx.tolist(), lr=config.lr)
                tape.backward(loss)
            clip_global_norm(params, config.clip_norm)
            sgd_step(params, config.lr)
            ce_sum.append(comps["ce"])
            bce_sum.append(comps["alpha_bce"])
            mem_sum.append(comps["mem_norm"])
            token_sum += comps["tokens"]

        val_ppl = validation_perplexity(model, valid_examples) if use_val else float("nan")
        stats = EpochStats(
            epoch=epoch,
            ce=math.fsum(ce_sum) / max(token_sum, 1),
            alpha_bce=math.fsum(bce_sum) / max(token_sum, 1),
            mem_norm=math.fsum(mem_sum) / len(train_examples),
            val_ppl=val_ppl,
            seconds=time.perf_counter() - t0,
        )
        log.epochs.append(stats)
        if not quiet:
            print(f"epoch {epoch}: ce/token {stats.ce:.4f} val_ppl {val_ppl:.3f} "
                  f"({stats.seconds:.1f}s)")
        if checkpoint_dir is not None:
            Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
            model.save(Path(checkpoint_dir) / f"epoch_{epoch:03d}.ckpt", vocab=vocab)

        if use_val:
            if val_ppl < best_ppl - 1e-9:
                best_ppl = val_ppl
                best_state = {k: v.data.copy() for k, v in model.params.items()}
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    if best_state is not None:
        for k, v in best_state.items():
            model.params[k].data = v
    return log


# ---------------------------------------------------------------------------
# two-stage schedule


@dataclass
class PipelineResult:
    baseline: EcmModel
    model: EcmModel
    baseline_log: TrainLog
    model_log: TrainLog
    copied_parameters: list[str]


def _check_vocab(config: EcmConfig, vocab: Vocab, name: str) -> None:
    if config.vocab_generic != vocab.n_generic or config.vocab_emotion != vocab.n_emotion:
        raise ConfigError(
            f"{name} config vocab ({config.vocab_generic}+{config.vocab_emotion}) "
            f"does not match the shared vocab ({vocab.n_generic}+{vocab.n_emotion})")


def init_from_pretrained(config: EcmConfig, pretrained: EcmModel,
                         seed: int = 0) -> tuple[EcmModel, list[str]]:
    """Fresh model (new tensors from seeded uniform(-0.08, 0.08)) with
    every name+shape-matching parameter copied from the pretrained one."""
    model = EcmModel(config, seed=seed)
    copied = model.copy_shared_parameters(pretrained)
    return model, copied


def pretrain_then_finetune(
    stage1_examples: Sequence[DialogueExample],
    stage2_examples: Sequence[DialogueExample],
    vocab: Vocab,
    base_config: EcmConfig,
    ecm_config: EcmConfig,
    stage1_train: TrainConfig,
    stage2_train: TrainConfig,
    valid1: Sequence[DialogueExample] | None = None,
    valid2: Sequence[DialogueExample] | None = None,
    quiet: bool = True,
) -> PipelineResult:
    if (base_config.use_category_embedding or base_config.use_internal_memory
            or base_config.use_external_memory):
        raise ConfigError("stage-1 config must have all emotion mechanisms off")
    _check_vocab(base_config, vocab, "stage-1")
    _check_vocab(ecm_config, vocab, "stage-2")

    baseline = EcmModel(base_config, seed=stage1_train.seed)
    log1 = train(baseline, stage1_examples, valid1, stage1_train, quiet=quiet)
    model, copied = init_from_pretrained(ecm_config, baseline, seed=stage2_train.seed)
    log2 = train(model, stage2_examples, valid2, stage2_train, quiet=quiet)
    return PipelineResult(baseline=baseline, model=model, baseline_log=log1,
                          model_log=log2, copied_parameters=copied)
