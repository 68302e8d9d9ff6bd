"""The emotion-conditioned encoder-decoder network.

A GRU encoder reads the post; a GRU decoder with additive attention
generates the response. Three switchable mechanisms condition the response
on an emotion category:

* category embedding: a trainable per-category vector is appended to the
  decoder input at every step;
* internal memory: a trainable per-category state vector is read through a
  sigmoid read gate into the decoder input and decayed by a sigmoid write
  gate after every step, so its magnitude can only shrink; the training
  loss pushes the leftover state at the end of the response toward zero;
* external memory: the output layer splits into a generic softmax and an
  emotion-word softmax, mixed by a per-step sigmoid selector alpha, so the
  full distribution is [(1-alpha)*P_generic ; alpha*P_emotion] over the
  two disjoint vocabulary blocks.

With all three mechanisms off the model is a plain attentive seq2seq and
must reproduce the baseline path bit for bit given the same weights.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import numerics as nm
from .corpus import (EOS_ID, GO_ID, N_CATEGORIES, PAD_ID, DialogueExample,
                     EmotionCategory, Vocab)
from .errors import CheckpointError, ConfigError, ContractError
from .numerics import GruParams, Tensor

GRU_FIELDS = ["w_xr", "w_hr", "b_r", "w_xz", "w_hz", "b_z", "w_xn", "w_hn", "b_n"]
INIT_SCALE = 0.08
NORM_EPS = 1e-8
MASKED_SCORE = -1e9


@dataclass
class EcmConfig:
    """Model dimensions and mechanism switches.

    Desk defaults are one 64-unit layer with 32-dim embeddings; the
    reference-scale configuration (2 layers x 256 hidden, 100-dim word and
    category embeddings, 40k vocabulary) is recorded in configs/ for
    comparison but is far beyond desk runtime.
    """

    vocab_generic: int
    vocab_emotion: int
    hidden: int = 64
    layers: int = 1
    embed_dim: int = 32
    emotion_dim: int = 32
    attn_dim: int = 64
    use_category_embedding: bool = False
    use_internal_memory: bool = False
    use_external_memory: bool = False
    max_decode_len: int = 20
    alpha_full_bce: bool = True
    memory_loss: bool = True  # penalize leftover internal-memory norm
    dtype: str = "f32"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        dims = dict(vocab_generic=self.vocab_generic, vocab_emotion=self.vocab_emotion,
                    hidden=self.hidden, layers=self.layers, embed_dim=self.embed_dim,
                    emotion_dim=self.emotion_dim, attn_dim=self.attn_dim,
                    max_decode_len=self.max_decode_len)
        for name, value in dims.items():
            if int(value) <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.dtype not in ("f32", "f64"):
            raise ConfigError(f"dtype must be f32 or f64, got {self.dtype!r}")

    @property
    def vocab_size(self) -> int:
        return self.vocab_generic + self.vocab_emotion

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "f32" else np.float64

    @property
    def decoder_input_dim(self) -> int:
        dim = self.hidden + self.embed_dim
        if self.use_category_embedding:
            dim += self.emotion_dim
        if self.use_internal_memory:
            dim += self.hidden
        return dim

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EcmConfig":
        return cls(**d)


@dataclass
class Batch:
    """Padded id arrays plus masks for one training batch."""

    post: np.ndarray        # (B, n) int
    post_mask: np.ndarray   # (B, n) 1.0 on real tokens
    dec_input: np.ndarray   # (B, T) int, GO + response
    target: np.ndarray      # (B, T) int, response + EOS
    tgt_mask: np.ndarray    # (B, T)
    q: np.ndarray           # (B, T) emotion-word flag of target
    category: np.ndarray    # (B,) int category index
    example_ids: list[int] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.post.shape[0]

    @property
    def n_target_tokens(self) -> int:
        return int(self.tgt_mask.sum())


def make_batch(examples: Sequence[DialogueExample], dtype=np.float32,
               example_ids: Sequence[int] | None = None) -> Batch:
    if not examples:
        raise ContractError("empty batch")
    for ex in examples:
        if not ex.post_ids:
            raise ContractError("example with empty post")
        if len(ex.q) != len(ex.response_ids):
            raise ContractError("q flags do not align with the response")
    b = len(examples)
    n = max(len(ex.post_ids) for ex in examples)
    t = max(len(ex.response_ids) for ex in examples) + 1  # +1 for EOS
    post = np.full((b, n), PAD_ID, dtype=np.int64)
    post_mask = np.zeros((b, n), dtype=dtype)
    dec_input = np.full((b, t), PAD_ID, dtype=np.int64)
    target = np.full((b, t), PAD_ID, dtype=np.int64)
    tgt_mask = np.zeros((b, t), dtype=dtype)
    q = np.zeros((b, t), dtype=dtype)
    category = np.zeros(b, dtype=np.int64)
    for i, ex in enumerate(examples):
        post[i, :len(ex.post_ids)] = ex.post_ids
        post_mask[i, :len(ex.post_ids)] = 1.0
        m = len(ex.response_ids)
        dec_input[i, 0] = GO_ID
        dec_input[i, 1:m + 1] = ex.response_ids
        target[i, :m] = ex.response_ids
        target[i, m] = EOS_ID
        tgt_mask[i, :m + 1] = 1.0
        q[i, :m] = ex.q
        category[i] = ex.emotion.index
    return Batch(post=post, post_mask=post_mask, dec_input=dec_input, target=target,
                 tgt_mask=tgt_mask, q=q, category=category,
                 example_ids=list(example_ids) if example_ids is not None else [])


@dataclass
class EncodedSource:
    """Per-sequence encoder outputs shared by all decode steps."""

    states_flat: Tensor           # (B*n, H) top-layer states, row-major by batch
    keys_flat: Tensor             # (B*n, A) pre-projected attention keys
    final_hidden: list[Tensor]    # per layer (B, H)
    score_bias: np.ndarray | None  # (B, n) additive mask for attention scores
    n: int
    batch: int


@dataclass
class DecodeState:
    hidden: list[Tensor]          # per layer (B, H)
    memory: Tensor | None         # (B, H) internal emotion state
    category: np.ndarray          # (B,)
    step: int = 0


@dataclass
class StepOutput:
    s_top: Tensor
    context: Tensor
    attention: Tensor             # (B, n)


@dataclass
class TraceStep:
    token_id: int
    token: str = ""
    partition: str = "generic"
    alpha: float = 0.0
    memory_norm: float = 0.0
    attention: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"token": self.token, "token_id": self.token_id,
                "partition": self.partition, "alpha": self.alpha,
                "memory_norm": self.memory_norm, "attention": self.attention}


@dataclass
class DecodeTrace:
    steps: list[TraceStep] = field(default_factory=list)

    def __len__(self):
        return len(self.steps)

    def to_list(self) -> list[dict]:
        return [s.to_dict() for s in self.steps]


class EcmModel:
    """All trainable parameters plus the forward passes built on them."""

    def __init__(self, config: EcmConfig, seed: int = 0):
        self.config = config
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng(seed)
        dt = config.np_dtype

        def u(name, shape):
            t = nm.uniform(rng, shape, scale=INIT_SCALE, dtype=dt)
            self.params[name] = t
            return t

        u("word_embedding", (config.vocab_size, config.embed_dim))
        self.encoder_layers = self._gru_stack("encoder", rng, config.embed_dim)
        self.decoder_layers = self._gru_stack("decoder", rng, config.decoder_input_dim)
        u("attention.query", (config.hidden, config.attn_dim))
        u("attention.keys", (config.hidden, config.attn_dim))
        u("attention.bias", (config.attn_dim,))
        u("attention.score", (config.attn_dim, 1))
        if config.use_external_memory:
            u("output.generic", (config.hidden, config.vocab_generic))
            u("output.generic_bias", (config.vocab_generic,))
            u("output.emotion", (config.hidden, config.vocab_emotion))
            u("output.emotion_bias", (config.vocab_emotion,))
            u("output.selector", (config.hidden, 1))
        else:
            u("output.proj", (config.hidden, config.vocab_size))
            u("output.bias", (config.vocab_size,))
        if config.use_category_embedding:
            u("category_embedding", (N_CATEGORIES, config.emotion_dim))
        if config.use_internal_memory:
            u("memory.bank", (N_CATEGORIES, config.hidden))
            gate_in = config.embed_dim + 2 * config.hidden
            u("memory.read_gate.w", (gate_in, config.hidden))
            u("memory.read_gate.b", (config.hidden,))
            u("memory.write_gate.w", (config.hidden, config.hidden))
            u("memory.write_gate.b", (config.hidden,))

    def _gru_stack(self, prefix: str, rng, input_dim: int) -> list[GruParams]:
        cfg = self.config
        stack = []
        for layer in range(cfg.layers):
            in_dim = input_dim if layer == 0 else cfg.hidden
            gp = GruParams.create(rng, in_dim, cfg.hidden, scale=INIT_SCALE,
                                  dtype=cfg.np_dtype)
            for name, t in zip(GRU_FIELDS, gp.tensors()):
                self.params[f"{prefix}.l{layer}.{name}"] = t
            stack.append(gp)
        return stack

    # ------------------------------------------------------------------
    # encoder + attention

    def encode_source(self, post: np.ndarray, post_mask: np.ndarray | None = None) -> EncodedSource:
        """Run the encoder over padded posts (B, n); mask rows freeze the
        hidden state past each post's true length."""
        if post.ndim != 2 or post.shape[1] == 0:
            raise ContractError("encode_source needs a non-empty (B, n) id array")
        cfg = self.config
        b, n = post.shape
        dt = cfg.np_dtype
        hidden = [nm.zeros((b, cfg.hidden), dtype=dt) for _ in range(cfg.layers)]
        masked = post_mask is not None and not np.all(post_mask == 1.0)
        top_states = []
        for t in range(n):
            x = nm.embedding(self.params["word_embedding"], post[:, t])
            mask_t = inv_t = None
            if masked:
                mask_t = Tensor(post_mask[:, t:t + 1].astype(dt))
                inv_t = Tensor(1.0 - mask_t.data)
            for layer, gp in enumerate(self.encoder_layers):
                h_new = nm.gru_cell(x, hidden[layer], gp)
                if masked:
                    h_new = nm.add(nm.scale_rows(h_new, mask_t),
                                   nm.scale_rows(hidden[layer], inv_t))
                hidden[layer] = h_new
                x = h_new
            top_states.append(hidden[-1])
        states_flat = nm.reshape(nm.concat(top_states, axis=1), (b * n, cfg.hidden))
        keys_flat = nm.matmul(states_flat, self.params["attention.keys"])
        score_bias = None
        if masked:
            score_bias = ((1.0 - post_mask) * MASKED_SCORE).astype(dt)
        return EncodedSource(states_flat=states_flat, keys_flat=keys_flat,
                             final_hidden=hidden, score_bias=score_bias, n=n, batch=b)

    def attention_context(self, s_top: Tensor, source: EncodedSource) -> tuple[Tensor, Tensor]:
        """Additive attention: weights over source positions and the
        weighted sum of top-layer encoder states."""
        b, n = source.batch, source.n
        query = nm.matmul(s_top, self.params["attention.query"])
        pre = nm.add(nm.add(source.keys_flat, nm.repeat_rows(query, n)),
                     self.params["attention.bias"])
        scores = nm.reshape(nm.matmul(nm.tanh(pre), self.params["attention.score"]), (b, n))
        if source.score_bias is not None:
            scores = nm.add(scores, Tensor(source.score_bias))
        weights = nm.softmax(scores, axis=1)
        weighted = nm.scale_rows(source.states_flat,
                                 nm.reshape(weights, (b * n, 1)))
        context = nm.reduce_sum(nm.reshape(weighted, (b, n, self.config.hidden)), axis=1)
        return context, weights

    # ------------------------------------------------------------------
    # decoder

    def initial_state(self, source: EncodedSource, category: np.ndarray) -> DecodeState:
        category = np.asarray(category, dtype=np.int64)
        if category.shape != (source.batch,):
            raise ContractError("category ids must be one per batch row")
        if category.size and (category.min() < 0 or category.max() >= N_CATEGORIES):
            raise ContractError(f"emotion category index out of range: {category}")
        memory = None
        if self.config.use_internal_memory:
            memory = nm.embedding(self.params["memory.bank"], category)
        return DecodeState(hidden=list(source.final_hidden), memory=memory,
                           category=category, step=0)

    def decode_step(self, state: DecodeState, y_prev: np.ndarray,
                    source: EncodedSource,
                    mask_t: Tensor | None = None) -> tuple[DecodeState, StepOutput]:
        """One teacher-forcing/inference step. `mask_t` (B, 1) freezes the
        hidden state and the internal memory on padded rows."""
        cfg = self.config
        s_top_prev = state.hidden[-1]
        context, weights = self.attention_context(s_top_prev, source)
        emb_prev = nm.embedding(self.params["word_embedding"], y_prev)

        parts = [context, emb_prev]
        if cfg.use_category_embedding:
            parts.append(nm.embedding(self.params["category_embedding"], state.category))
        memory = state.memory
        if cfg.use_internal_memory:
            gate_in = nm.concat([emb_prev, s_top_prev, context], axis=1)
            read_gate = nm.sigmoid(nm.add(nm.matmul(gate_in, self.params["memory.read_gate.w"]),
                                          self.params["memory.read_gate.b"]))
            parts.append(nm.mul(read_gate, memory))
        x = nm.concat(parts, axis=1)

        inv_t = Tensor(1.0 - mask_t.data) if mask_t is not None else None
        new_hidden = []
        inp = x
        for layer, gp in enumerate(self.decoder_layers):
            h_new = nm.gru_cell(inp, state.hidden[layer], gp)
            if mask_t is not None:
                h_new = nm.add(nm.scale_rows(h_new, mask_t),
                               nm.scale_rows(state.hidden[layer], inv_t))
            new_hidden.append(h_new)
            inp = h_new
        s_top = new_hidden[-1]

        if cfg.use_internal_memory:
            write_gate = nm.sigmoid(nm.add(nm.matmul(s_top, self.params["memory.write_gate.w"]),
                                           self.params["memory.write_gate.b"]))
            decayed = nm.mul(write_gate, memory)
            if mask_t is not None:
                decayed = nm.add(nm.scale_rows(decayed, mask_t),
                                 nm.scale_rows(memory, inv_t))
            memory = decayed

        new_state = DecodeState(hidden=new_hidden, memory=memory,
                                category=state.category, step=state.step + 1)
        return new_state, StepOutput(s_top=s_top, context=context, attention=weights)

    # ------------------------------------------------------------------
    # output layer

    def output_distribution(self, s_top: Tensor) -> tuple[Tensor, Tensor | None]:
        """Distribution over the full vocabulary. In split mode the generic
        block gets (1-alpha) of the mass and the emotion block alpha."""
        if not self.config.use_external_memory:
            logits = nm.add(nm.matmul(s_top, self.params["output.proj"]),
                            self.params["output.bias"])
            return nm.softmax(logits, axis=1), None
        z = nm.matmul(s_top, self.params["output.selector"])
        alpha = nm.sigmoid(z)
        p_generic = nm.softmax(nm.add(nm.matmul(s_top, self.params["output.generic"]),
                                      self.params["output.generic_bias"]), axis=1)
        p_emotion = nm.softmax(nm.add(nm.matmul(s_top, self.params["output.emotion"]),
                                      self.params["output.emotion_bias"]), axis=1)
        one_minus = nm.affine(alpha, -1.0, 1.0)
        dist = nm.concat([nm.scale_rows(p_generic, one_minus),
                          nm.scale_rows(p_emotion, alpha)], axis=1)
        return dist, alpha

    def _gold_log_prob_and_alpha_loss(self, s_top: Tensor, gold: np.ndarray,
                                      q_t: np.ndarray, mask_t: Tensor):
        """Per-row log P(gold token) and the selector supervision term.

        Split mode computes log P as log(block mass) + block log-softmax,
        with the alpha factors expressed through softplus of the selector
        logit so saturation never produces log(0).
        """
        cfg = self.config
        dt = cfg.np_dtype
        if not cfg.use_external_memory:
            lsm = nm.log_softmax(nm.add(nm.matmul(s_top, self.params["output.proj"]),
                                        self.params["output.bias"]), axis=1)
            lp = nm.take_per_row(lsm, gold)
            return nm.mul(lp, mask_t), None
        z = nm.matmul(s_top, self.params["output.selector"])
        lsm_g = nm.log_softmax(nm.add(nm.matmul(s_top, self.params["output.generic"]),
                                      self.params["output.generic_bias"]), axis=1)
        lsm_e = nm.log_softmax(nm.add(nm.matmul(s_top, self.params["output.emotion"]),
                                      self.params["output.emotion_bias"]), axis=1)
        is_emotion = q_t.astype(bool)
        gold_g = np.where(is_emotion, 0, gold)
        gold_e = np.where(is_emotion, gold - cfg.vocab_generic, 0)
        log_one_minus_alpha = nm.affine(nm.softplus(z), -1.0)
        log_alpha = nm.affine(nm.softplus(nm.affine(z, -1.0)), -1.0)
        q_col = Tensor(q_t.reshape(-1, 1).astype(dt))
        not_q_col = Tensor(1.0 - q_col.data)
        lp_generic = nm.add(log_one_minus_alpha, nm.take_per_row(lsm_g, gold_g))
        lp_emotion = nm.add(log_alpha, nm.take_per_row(lsm_e, gold_e))
        lp = nm.add(nm.mul(lp_generic, not_q_col), nm.mul(lp_emotion, q_col))

        # selector supervision: -[q log a + (1-q) log(1-a)], or just the
        # first term when alpha_full_bce is off
        bce = nm.mul(nm.affine(log_alpha, -1.0), q_col)
        if cfg.alpha_full_bce:
            bce = nm.add(bce, nm.mul(nm.affine(log_one_minus_alpha, -1.0), not_q_col))
        return nm.mul(lp, mask_t), nm.mul(bce, mask_t)

    # ------------------------------------------------------------------
    # training loss

    def forward_loss(self, batch: Batch | Sequence[DialogueExample]):
        """Teacher-forced loss, mean per example over the batch.

        Returns (loss tensor, components) where components carries the raw
        sums: cross entropy, selector supervision, final memory norm, and
        the non-pad target token count.
        """
        if not isinstance(batch, Batch):
            batch = make_batch(batch, dtype=self.config.np_dtype)
        cfg = self.config
        dt = cfg.np_dtype
        b, t_max = batch.target.shape
        apply_mask = not np.all(batch.tgt_mask == 1.0)

        source = self.encode_source(batch.post, batch.post_mask)
        state = self.initial_state(source, batch.category)

        ce_acc = None
        bce_acc = None
        for t in range(t_max):
            mask_t = Tensor(batch.tgt_mask[:, t:t + 1].astype(dt)) if apply_mask \
                else Tensor(np.ones((b, 1), dtype=dt))
            step_mask = mask_t if apply_mask else None
            state, out = self.decode_step(state, batch.dec_input[:, t], source,
                                          mask_t=step_mask)
            lp, bce = self._gold_log_prob_and_alpha_loss(
                out.s_top, batch.target[:, t], batch.q[:, t], mask_t)
            ce_t = nm.affine(nm.reduce_sum(lp), -1.0)
            ce_acc = ce_t if ce_acc is None else nm.add(ce_acc, ce_t)
            if bce is not None:
                bce_t = nm.reduce_sum(bce)
                bce_acc = bce_t if bce_acc is None else nm.add(bce_acc, bce_t)

        total = ce_acc
        if bce_acc is not None:
            total = nm.add(total, bce_acc)
        mem_acc = None
        if cfg.use_internal_memory and cfg.memory_loss:
            sq = nm.reduce_sum(nm.mul(state.memory, state.memory), axis=1, keepdims=True)
            norms = nm.sqrt(nm.affine(sq, 1.0, NORM_EPS))
            mem_acc = nm.reduce_sum(norms)
            total = nm.add(total, mem_acc)
        loss = nm.affine(total, 1.0 / b)
        components = {
            "ce": float(ce_acc.data),
            "alpha_bce": float(bce_acc.data) if bce_acc is not None else 0.0,
            "mem_norm": float(mem_acc.data) if mem_acc is not None else 0.0,
            "tokens": batch.n_target_tokens,
        }
        return loss, components

    # ------------------------------------------------------------------
    # single-example helpers (no masking, so the op sequence is identical
    # to the standalone baseline path)

    def step_distributions(self, post_ids: Sequence[int], response_ids: Sequence[int],
                           category: EmotionCategory) -> list[np.ndarray]:
        """Teacher-forced per-step distributions for one example."""
        source = self.encode_source(np.asarray([post_ids], dtype=np.int64))
        state = self.initial_state(source, np.asarray([category.index]))
        inputs = [GO_ID] + list(response_ids)
        dists = []
        for y_prev in inputs:
            state, out = self.decode_step(state, np.asarray([y_prev]), source)
            dist, _ = self.output_distribution(out.s_top)
            dists.append(dist.data[0].copy())
        return dists

    def teacher_forced_log_prob(self, post_ids: Sequence[int], token_ids: Sequence[int],
                                category: EmotionCategory) -> float:
        """Total log probability of emitting `token_ids` (which may include
        a final EOS) for the given post and category. Computed in f64 to
        match the decoders, which also score in f64."""
        from .inference import inference_model
        dists = inference_model(self).step_distributions(post_ids, token_ids, category)
        with np.errstate(divide="ignore"):
            return float(sum(np.log(dists[i][tok]) for i, tok in enumerate(token_ids)))

    # ------------------------------------------------------------------
    # parameters and persistence

    def parameter_names(self) -> list[str]:
        return list(self.params)

    def to_dtype(self, dtype: str) -> "EcmModel":
        """Copy of this model with parameters cast to the given dtype."""
        if dtype == self.config.dtype:
            return self
        d = self.config.to_dict()
        d["dtype"] = dtype
        clone = EcmModel(EcmConfig.from_dict(d), seed=0)
        for name, t in self.params.items():
            clone.params[name].data = t.data.astype(clone.config.np_dtype)
        return clone

    def copy_shared_parameters(self, other: "EcmModel") -> list[str]:
        """Copy every parameter whose name and shape both match from
        `other`; freshly initialized tensors keep their values."""
        copied = []
        for name, tensor in self.params.items():
            src = other.params.get(name)
            if src is not None and src.shape == tensor.shape:
                tensor.data = src.data.copy()
                copied.append(name)
        return copied

    def save(self, path, vocab: Vocab | None = None, extra: dict | None = None) -> None:
        from .checkpoint import save_checkpoint
        save_checkpoint(path, kind="ecm", config=self.config.to_dict(),
                        tensors={k: v.data for k, v in self.params.items()},
                        vocab=vocab, extra=extra)

    @classmethod
    def load(cls, path) -> tuple["EcmModel", Vocab | None]:
        from .checkpoint import load_checkpoint
        kind, config_dict, tensors, vocab, _ = load_checkpoint(path)
        if kind != "ecm":
            raise CheckpointError(f"expected an ecm checkpoint, found kind={kind!r}")
        config = EcmConfig.from_dict(config_dict)
        model = cls(config, seed=0)
        model_names = set(model.params)
        file_names = set(tensors)
        if model_names != file_names:
            missing = sorted(model_names - file_names)
            extra = sorted(file_names - model_names)
            raise CheckpointError(f"parameter names mismatch: missing={missing} extra={extra}")
        for name, arr in tensors.items():
            expect = model.params[name].data.shape
            if tuple(arr.shape) != tuple(expect):
                raise CheckpointError(f"tensor {name}: shape {arr.shape} != config {expect}")
            model.params[name].data = arr.astype(config.np_dtype)
        return model, vocab


def baseline_step_distributions(model: EcmModel, post_ids: Sequence[int],
                                response_ids: Sequence[int]) -> list[np.ndarray]:
    """Plain attentive seq2seq forward written directly against the
    primitive ops, with no emotion machinery on the path. Serves as the
    reference the flags-off model must match bit for bit."""
    cfg = model.config
    p = model.params
    post = np.asarray([post_ids], dtype=np.int64)
    b, n = post.shape
    hidden = [nm.zeros((b, cfg.hidden), dtype=cfg.np_dtype) for _ in range(cfg.layers)]
    tops = []
    for t in range(n):
        x = nm.embedding(p["word_embedding"], post[:, t])
        for layer, gp in enumerate(model.encoder_layers):
            x = nm.gru_cell(x, hidden[layer], gp)
            hidden[layer] = x
        tops.append(hidden[-1])
    states_flat = nm.reshape(nm.concat(tops, axis=1), (b * n, cfg.hidden))
    keys_flat = nm.matmul(states_flat, p["attention.keys"])

    dists = []
    dec_hidden = list(hidden)
    for y_prev in [GO_ID] + list(response_ids):
        s_prev = dec_hidden[-1]
        query = nm.matmul(s_prev, p["attention.query"])
        pre = nm.add(nm.add(keys_flat, nm.repeat_rows(query, n)), p["attention.bias"])
        scores = nm.reshape(nm.matmul(nm.tanh(pre), p["attention.score"]), (b, n))
        weights = nm.softmax(scores, axis=1)
        weighted = nm.scale_rows(states_flat, nm.reshape(weights, (b * n, 1)))
        context = nm.reduce_sum(nm.reshape(weighted, (b, n, cfg.hidden)), axis=1)
        emb_prev = nm.embedding(p["word_embedding"], np.asarray([y_prev]))
        x = nm.concat([context, emb_prev], axis=1)
        for layer, gp in enumerate(model.decoder_layers):
            x = nm.gru_cell(x, dec_hidden[layer], gp)
            dec_hidden[layer] = x
        logits = nm.add(nm.matmul(dec_hidden[-1], p["output.proj"]), p["output.bias"])
        dists.append(nm.softmax(logits, axis=1).data[0].copy())
    return dists
