"""HTTP inference service backing the chat UI.

Endpoints (JSON bodies, exact field names in docs/api.md):

  GET  /health        liveness + whether a model is loaded
  GET  /model         loaded model's configuration summary
  POST /chat          {post, emotion, beam?, max_len?, trace?} -> response
  POST /chat/all      {post, beam?, max_len?, trace?} -> one entry per category

The model and classifier are loaded once and shared read-only; every
request owns its decode state, so concurrent requests are safe. Responses
are pure functions of (checkpoint, request).
"""

from __future__ import annotations

import os
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from .corpus import CATEGORIES, EmotionCategory, tokenize
from .inference import BeamOutput, beam_search
from .model import EcmModel

ALLOWED = [c.value for c in CATEGORIES]


class ChatRequest(BaseModel):
    post: str
    emotion: str
    beam: Optional[int] = Field(default=None, ge=1, le=64)
    max_len: Optional[int] = Field(default=None, ge=1, le=128)
    trace: bool = False


class ChatAllRequest(BaseModel):
    post: str
    beam: Optional[int] = Field(default=None, ge=1, le=64)
    max_len: Optional[int] = Field(default=None, ge=1, le=128)
    trace: bool = False


class ServiceState:
    def __init__(self):
        self.model: EcmModel | None = None
        self.vocab = None
        self.classifier = None
        self.checkpoint_path: str | None = None
        self.default_beam = 4

    def load_model(self, path) -> None:
        model, vocab = EcmModel.load(path)
        if vocab is None:
            raise ValueError(f"checkpoint {path} does not embed a vocab")
        self.model, self.vocab = model, vocab
        self.checkpoint_path = str(path)

    def load_classifier(self, path) -> None:
        from .classifier import RecurrentClassifier
        self.classifier = RecurrentClassifier.load(path)


def _output_payload(output: BeamOutput | None, vocab, want_trace: bool) -> dict:
    if output is None:
        return {"response": "", "score": None, "empty": True}
    payload = {"response": output.text(vocab), "score": output.score, "empty": False}
    if want_trace:
        payload["trace"] = output.trace.to_list()
    return payload


def create_app(model_path: str | None = None,
               classifier_path: str | None = None,
               ui_origin: str = "*") -> FastAPI:
    """Build the app; ECM_CHECKPOINT overrides the model path."""
    app = FastAPI(title="emotional chat service")
    app.add_middleware(CORSMiddleware, allow_origins=[ui_origin],
                       allow_methods=["*"], allow_headers=["*"])
    state = ServiceState()
    app.state.service = state

    env_path = os.environ.get("ECM_CHECKPOINT")
    effective = env_path or model_path
    if effective:
        state.load_model(effective)
    if classifier_path:
        state.load_classifier(classifier_path)

    def require_model() -> tuple:
        if state.model is None:
            raise HTTPException(status_code=503, detail="model not loaded")
        return state.model, state.vocab

    def parse_emotion(name: str) -> EmotionCategory:
        for cat in CATEGORIES:
            if cat.value == name:
                return cat
        raise HTTPException(
            status_code=400,
            detail={"error": f"unknown emotion {name!r}", "allowed": ALLOWED})

    def parse_post(text: str) -> list[str]:
        tokens = tokenize(text)
        if not tokens:
            raise HTTPException(status_code=400,
                                detail={"error": "post is empty after tokenization"})
        return tokens

    @app.get("/health")
    def health():
        return {"status": "ok", "model_loaded": state.model is not None}

    @app.get("/model")
    def model_info():
        model, vocab = require_model()
        cfg = model.config
        return {
            "checkpoint": state.checkpoint_path,
            "hidden": cfg.hidden,
            "layers": cfg.layers,
            "embed_dim": cfg.embed_dim,
            "emotion_dim": cfg.emotion_dim,
            "vocab_generic": cfg.vocab_generic,
            "vocab_emotion": cfg.vocab_emotion,
            "mechanisms": {
                "category_embedding": cfg.use_category_embedding,
                "internal_memory": cfg.use_internal_memory,
                "external_memory": cfg.use_external_memory,
            },
            "max_decode_len": cfg.max_decode_len,
            "emotions": ALLOWED,
        }

    @app.post("/chat")
    def chat(request: ChatRequest):
        model, vocab = require_model()
        emotion = parse_emotion(request.emotion)
        tokens = parse_post(request.post)
        result = beam_search(model, vocab, vocab.encode(tokens), emotion,
                             width=request.beam or state.default_beam,
                             max_len=request.max_len)
        payload = _output_payload(result.top, vocab, request.trace)
        payload["emotion"] = emotion.value
        if state.classifier is not None and not payload["empty"]:
            predicted = state.classifier.classify(payload["response"].split())
            payload["classifier_emotion"] = predicted.value
        return payload

    @app.post("/chat/all")
    def chat_all(request: ChatAllRequest):
        model, vocab = require_model()
        tokens = parse_post(request.post)
        post_ids = vocab.encode(tokens)
        responses = {}
        for cat in CATEGORIES:
            result = beam_search(model, vocab, post_ids, cat,
                                 width=request.beam or state.default_beam,
                                 max_len=request.max_len)
            responses[cat.value] = _output_payload(result.top, vocab, request.trace)
        return {"post": " ".join(tokens), "responses": responses}

    return app


def serve(model_path: str | None, classifier_path: str | None = None,
          host: str = "127.0.0.1", port: int = 8000, ui_origin: str = "*") -> None:
    import uvicorn
    app = create_app(model_path, classifier_path, ui_origin=ui_origin)
    uvicorn.run(app, host=host, port=port, log_level="info")
