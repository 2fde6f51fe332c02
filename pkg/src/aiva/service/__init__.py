from .app import (
    EXPRESSION_TAGS,
    AgentService,
    ExpressionError,
    ServiceConfigError,
    build_app,
    expression_map_for_labels,
    map_expression,
)
from .backend import BackendError, LlmBackend, llm_complete, strip_thinking
from .sessions import ChatSession, SessionNotFound, SessionStore

__all__ = [
    "EXPRESSION_TAGS",
    "AgentService",
    "BackendError",
    "ChatSession",
    "ExpressionError",
    "LlmBackend",
    "ServiceConfigError",
    "SessionNotFound",
    "SessionStore",
    "build_app",
    "expression_map_for_labels",
    "llm_complete",
    "map_expression",
    "strip_thinking",
]
