"""Beam-search and greedy decoding with UNK filtering and rerank.

The beam expands every live hypothesis over the vocabulary, keeps the
top-`width` continuations by cumulative log probability, and moves
EOS-terminated (or length-capped) hypotheses to a completed pool. At the
end, hypotheses containing UNK are dropped and the survivors are ranked
by total sequence log probability; an optional length penalty divides the
score by len**penalty (off by default, so beam width 1 reproduces greedy
decoding exactly). Every emitted token carries a trace record: selector
weight alpha, internal-memory norm, attention weights and its vocabulary
partition.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field

import numpy as np

from .corpus import CATEGORIES, EOS_ID, GO_ID, UNK_ID, EmotionCategory, Vocab
from .errors import ConfigError
from .model import DecodeState, DecodeTrace, EcmModel, EncodedSource, TraceStep
from .numerics import Tensor

# Decoding runs in f64 regardless of the training dtype: beam scores must
# match an independent teacher-forced recompute to 1e-4, and f32 BLAS
# rounds differently for different batch row counts, which costs up to
# ~1e-3 in log space on low-probability tokens. The f64 twin is cached per
# model and rebuilt whenever any parameter buffer is rebound (as SGD does).
_F64_TWINS: "weakref.WeakKeyDictionary[EcmModel, tuple[list, EcmModel]]" = \
    weakref.WeakKeyDictionary()


def inference_model(model: EcmModel) -> EcmModel:
    if model.config.dtype == "f64":
        return model
    cached = _F64_TWINS.get(model)
    if cached is not None:
        sources, twin = cached
        if all(src is p.data for src, p in zip(sources, model.params.values())):
            return twin
    twin = model.to_dtype("f64")
    _F64_TWINS[model] = ([p.data for p in model.params.values()], twin)
    return twin


@dataclass
class BeamOutput:
    token_ids: list[int]          # response tokens, EOS stripped
    score: float                  # cumulative log prob incl. EOS if emitted
    ended_with_eos: bool
    trace: DecodeTrace

    def text(self, vocab: Vocab) -> str:
        return " ".join(vocab.decode(self.token_ids))


@dataclass
class BeamResult:
    outputs: list[BeamOutput]     # ranked best-first
    all_unk: bool = False

    @property
    def top(self) -> BeamOutput | None:
        return self.outputs[0] if self.outputs else None


@dataclass
class _Hyp:
    tokens: list[int] = field(default_factory=list)
    score: float = 0.0
    ended_with_eos: bool = False
    trace: DecodeTrace = field(default_factory=DecodeTrace)


def _tile_source(source: EncodedSource, rows: int) -> EncodedSource:
    if rows == source.batch:
        return source
    return EncodedSource(
        states_flat=Tensor(np.tile(source.states_flat.data, (rows, 1))),
        keys_flat=Tensor(np.tile(source.keys_flat.data, (rows, 1))),
        final_hidden=[Tensor(np.tile(h.data, (rows, 1))) for h in source.final_hidden],
        score_bias=None,
        n=source.n,
        batch=rows,
    )


def _gather_state(state: DecodeState, rows: list[int]) -> DecodeState:
    idx = np.asarray(rows, dtype=np.int64)
    return DecodeState(
        hidden=[Tensor(h.data[idx]) for h in state.hidden],
        memory=Tensor(state.memory.data[idx]) if state.memory is not None else None,
        category=state.category[idx],
        step=state.step,
    )


def beam_search(model: EcmModel, vocab: Vocab, post_ids: list[int],
                emotion: EmotionCategory, width: int = 4,
                max_len: int | None = None,
                length_penalty: float = 0.0) -> BeamResult:
    """Ranked responses for one post under the requested emotion."""
    if width < 1:
        raise ConfigError("beam width must be >= 1")
    model = inference_model(model)
    max_len = max_len or model.config.max_decode_len
    base = model.encode_source(np.asarray([post_ids], dtype=np.int64))

    live = [_Hyp()]
    source = _tile_source(base, 1)
    state = model.initial_state(source, np.asarray([emotion.index]))
    y_prev = np.asarray([GO_ID], dtype=np.int64)
    completed: list[_Hyp] = []
    uses_emem = model.config.use_external_memory
    uses_imem = model.config.use_internal_memory

    while live:
        n_rows = len(live)
        state, out = model.decode_step(state, y_prev, source)
        dist, alpha = model.output_distribution(out.s_top)
        with np.errstate(divide="ignore"):
            logp = np.log(dist.data)
        k = min(width + 1, logp.shape[1])
        top_tokens = np.argpartition(-logp, k - 1, axis=1)[:, :k]

        candidates = []  # (new_score, row, token)
        for row in range(n_rows):
            for tok in top_tokens[row]:
                candidates.append((live[row].score + float(logp[row, tok]), row, int(tok)))
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))

        mem_norms = None
        if uses_imem:
            mem_norms = np.sqrt((state.memory.data.astype(np.float64) ** 2).sum(axis=1))

        def extend(hyp: _Hyp, row: int, tok: int, score: float) -> _Hyp:
            new = _Hyp(tokens=hyp.tokens + [tok], score=score,
                       trace=DecodeTrace(steps=list(hyp.trace.steps)))
            if tok != EOS_ID:
                new.trace.steps.append(TraceStep(
                    token_id=tok,
                    token=vocab.tokens[tok],
                    partition="emotion" if vocab.is_emotion_id(tok) else "generic",
                    alpha=float(alpha.data[row, 0]) if uses_emem else 0.0,
                    memory_norm=float(mem_norms[row]) if uses_imem else 0.0,
                    attention=[float(w) for w in out.attention.data[row]],
                ))
            return new

        next_live: list[_Hyp] = []
        next_rows: list[int] = []
        for score, row, tok in candidates:
            if len(next_live) >= width:
                break
            if tok == EOS_ID:
                done = extend(live[row], row, tok, score)
                done.ended_with_eos = True
                completed.append(done)
                continue
            hyp = extend(live[row], row, tok, score)
            if len(hyp.tokens) >= max_len:
                completed.append(hyp)
            else:
                next_live.append(hyp)
                next_rows.append(row)

        if not next_live:
            break
        if length_penalty == 0.0 and len(completed) >= width:
            best_completed = max(h.score for h in completed)
            if next_live[0].score <= best_completed:
                break
        live = next_live
        state = _gather_state(state, next_rows)
        source = _tile_source(base, len(live))
        y_prev = np.asarray([h.tokens[-1] for h in live], dtype=np.int64)

    survivors = [h for h in completed if UNK_ID not in h.tokens]
    all_unk = bool(completed) and not survivors

    def rank_key(h: _Hyp) -> float:
        if length_penalty == 0.0:
            return h.score
        return h.score / (max(len(h.tokens), 1) ** length_penalty)

    survivors.sort(key=lambda h: (-rank_key(h), h.tokens))
    outputs = [BeamOutput(
        token_ids=[t for t in h.tokens if t != EOS_ID],
        score=h.score, ended_with_eos=h.ended_with_eos, trace=h.trace)
        for h in survivors]
    return BeamResult(outputs=outputs, all_unk=all_unk)


def greedy_decode(model: EcmModel, vocab: Vocab, post_ids: list[int],
                  emotion: EmotionCategory,
                  max_len: int | None = None) -> BeamOutput:
    """Argmax decoding until EOS or the length cap."""
    model = inference_model(model)
    max_len = max_len or model.config.max_decode_len
    source = model.encode_source(np.asarray([post_ids], dtype=np.int64))
    state = model.initial_state(source, np.asarray([emotion.index]))
    y_prev = GO_ID
    tokens: list[int] = []
    score = 0.0
    trace = DecodeTrace()
    ended = False
    uses_emem = model.config.use_external_memory
    uses_imem = model.config.use_internal_memory
    while len(tokens) < max_len:
        state, out = model.decode_step(state, np.asarray([y_prev]), source)
        dist, alpha = model.output_distribution(out.s_top)
        tok = int(np.argmax(dist.data[0]))
        with np.errstate(divide="ignore"):
            score += float(np.log(dist.data[0, tok]))
        if tok == EOS_ID:
            ended = True
            break
        mem_norm = 0.0
        if uses_imem:
            mem_norm = float(np.sqrt((state.memory.data[0].astype(np.float64) ** 2).sum()))
        trace.steps.append(TraceStep(
            token_id=tok, token=vocab.tokens[tok],
            partition="emotion" if vocab.is_emotion_id(tok) else "generic",
            alpha=float(alpha.data[0, 0]) if uses_emem else 0.0,
            memory_norm=mem_norm,
            attention=[float(w) for w in out.attention.data[0]]))
        tokens.append(tok)
        y_prev = tok
    return BeamOutput(token_ids=tokens, score=score, ended_with_eos=ended, trace=trace)


def generate_all_emotions(model: EcmModel, vocab: Vocab, post_ids: list[int],
                          width: int = 4, max_len: int | None = None
                          ) -> dict[EmotionCategory, BeamOutput | None]:
    """Top response per category; exactly six entries, None where every
    hypothesis contained UNK."""
    out: dict[EmotionCategory, BeamOutput | None] = {}
    for cat in CATEGORIES:
        result = beam_search(model, vocab, post_ids, cat, width=width, max_len=max_len)
        out[cat] = result.top
    return out
