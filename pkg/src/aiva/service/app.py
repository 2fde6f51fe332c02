"""The companion runtime: classify each user turn, render the
emotion-aware prompt, call the reply backend, and track sessions.

HTTP surface (all JSON):
  POST   /sessions                  -> {session_id}
  POST   /sessions/{id}/chat        {text, image_png_base64?} ->
         {reply, sentiment, probabilities, expression, turn_index}
  GET    /sessions/{id}             -> full transcript
  DELETE /sessions/{id}
  GET    /healthz                   -> {status, checkpoint_id}
Errors: {error, code, retryable}.
"""

from __future__ import annotations

import base64
import io
import threading
from contextlib import asynccontextmanager

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse
from PIL import Image
from pydantic import BaseModel

from .. import nn
from ..config import ModelConfig
from ..encoders import Vocabulary, tokenize
from ..epe import PromptTemplate, Turn, render_prompt, validate_template
from ..fusion import forward_mspn
from ..model import neutral_placeholder_image
from ..encoders import encode_pair
from ..training.checkpoint import Checkpoint
from .backend import BackendError, LlmBackend, llm_complete
from .sessions import SessionNotFound, SessionStore

EXPRESSION_TAGS = ("happy", "sad", "angry", "fear", "love", "bored", "calm", "neutral")

_POLARITY_MAP = {"positive": "happy", "neutral": "neutral", "negative": "sad"}


class ServiceConfigError(ValueError):
    """Startup-time mismatch between checkpoint, template, and labels."""


class ExpressionError(KeyError):
    pass


def expression_map_for_labels(labels) -> dict:
    """Total map from sentiment label to avatar expression tag.

    Polarity labels map positive->happy / neutral->neutral /
    negative->sad; labels that already name an expression map to
    themselves (the seven-emotion scheme).
    """
    mapping = {}
    for label in labels:
        low = label.lower()
        if low in _POLARITY_MAP:
            mapping[label] = _POLARITY_MAP[low]
        elif low in EXPRESSION_TAGS:
            mapping[label] = low
        else:
            raise ServiceConfigError(f"no expression tag for sentiment label {label!r}")
    return mapping


def map_expression(label: str, mapping: dict) -> str:
    try:
        return mapping[label]
    except KeyError:
        raise ExpressionError(f"unknown sentiment label {label!r}") from None


def decode_request_image(b64: str, cfg: ModelConfig) -> np.ndarray:
    raw = base64.b64decode(b64)
    pil = Image.open(io.BytesIO(raw)).convert("L" if cfg.channels == 1 else "RGB")
    if pil.size != (cfg.image_size, cfg.image_size):
        pil = pil.resize((cfg.image_size, cfg.image_size), Image.BILINEAR)
    arr = np.asarray(pil, dtype=np.float64) / 255.0
    return arr[:, :, None] if arr.ndim == 2 else arr


class AgentService:
    """Shared read-only model plus per-session mutable transcripts."""

    def __init__(self, checkpoint: Checkpoint, template: PromptTemplate,
                 backend: LlmBackend, checkpoint_id: str = "unset",
                 max_turns: int = 200):
        self.config = checkpoint.config
        self.params = nn.unflatten_params(checkpoint.params)
        self.vocab = Vocabulary(checkpoint.vocab.to_dict())
        self.template = template
        self.backend = backend
        self.checkpoint_id = checkpoint_id
        self.sessions = SessionStore(max_turns=max_turns)
        violations = validate_template(template, n_classes=self.config.n_classes)
        if violations:
            raise ServiceConfigError("template invalid: " + "; ".join(violations))
        if len(template.sentiment_labels) != self.config.n_classes:
            raise ServiceConfigError(
                f"template has {len(template.sentiment_labels)} labels but the "
                f"checkpoint classifies {self.config.n_classes} classes")
        self.labels = template.labels
        self.expressions = expression_map_for_labels(self.labels)
        self._model_lock = threading.Lock()

    def classify(self, text: str, image: np.ndarray | None):
        """Run the perception network on one (text, image) turn."""
        if image is None:
            image = neutral_placeholder_image(self.config)
        tokens = tokenize(text, self.vocab, self.config.max_len)
        # Graph construction is cheap but not reentrant per-parameter;
        # serialize model access for safety under threaded servers.
        with self._model_lock:
            pair = encode_pair(tokens, image, self.params, self.config)
            result = forward_mspn(pair, self.params, self.config)
        probs = [float(v) for v in result.prediction.p_hat.data]
        label = self.labels[int(np.argmax(result.prediction.logits.data))]
        return label, probs

    def chat(self, session_id: str, text: str, image_b64: str | None = None) -> dict:
        """One conversation turn; session state is appended only after a
        successful backend completion."""
        session = self.sessions.get_or_create(session_id)
        image = decode_request_image(image_b64, self.config) if image_b64 else None
        sentiment, probs = self.classify(text, image)
        with self.sessions.lock(session_id):
            history = list(session.turns)
        prompt = render_prompt(self.template, history, text, sentiment)
        reply = llm_complete(prompt, self.backend)  # no session lock held
        user_turn = Turn(speaker="user", text=text, detected_sentiment=sentiment)
        agent_turn = Turn(speaker="agent", text=reply)
        self.sessions.append_turns(session_id, user_turn, agent_turn)
        with self.sessions.lock(session_id):
            turn_index = len(session.turns) - 2
        return {
            "reply": reply,
            "sentiment": sentiment,
            "probabilities": probs,
            "expression": map_expression(sentiment, self.expressions),
            "turn_index": turn_index,
        }


class ChatRequest(BaseModel):
    text: str
    image_png_base64: str | None = None


def _error(status: int, code: str, message: str, retryable: bool = False) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": message, "code": code, "retryable": retryable})


def build_app(service: AgentService, sessions_path=None) -> FastAPI:
    @asynccontextmanager
    async def lifespan(_app):
        if sessions_path:
            service.sessions.load(sessions_path)
        yield
        if sessions_path:
            service.sessions.save(sessions_path)

    app = FastAPI(title="aiva agent service", lifespan=lifespan)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "checkpoint_id": service.checkpoint_id}

    @app.post("/sessions")
    def create_session():
        session = service.sessions.create()
        return {"session_id": session.session_id}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        try:
            session = service.sessions.get(session_id)
        except SessionNotFound:
            return _error(404, "not_found", f"unknown session {session_id!r}")
        with service.sessions.lock(session_id):
            return session.to_json()

    @app.delete("/sessions/{session_id}")
    def delete_session(session_id: str):
        try:
            service.sessions.delete(session_id)
        except SessionNotFound:
            return _error(404, "not_found", f"unknown session {session_id!r}")
        return {"deleted": session_id}

    @app.post("/sessions/{session_id}/reset")
    def reset_session(session_id: str):
        try:
            service.sessions.reset(session_id)
        except SessionNotFound:
            return _error(404, "not_found", f"unknown session {session_id!r}")
        return {"session_id": session_id, "turns": []}

    @app.post("/sessions/{session_id}/chat")
    def chat(session_id: str, req: ChatRequest):
        if not req.text.strip():
            return _error(400, "bad_request", "text must be non-empty")
        try:
            return service.chat(session_id, req.text, req.image_png_base64)
        except BackendError as e:
            return _error(502, "backend_error", str(e), retryable=e.retryable)
        except ValueError as e:
            return _error(400, "bad_request", str(e))

    return app
