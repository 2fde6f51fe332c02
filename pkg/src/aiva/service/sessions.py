"""In-memory chat sessions with optional JSONL persistence."""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from ..epe import Turn


class SessionNotFound(KeyError):
    pass


@dataclass
class ChatSession:
    session_id: str
    turns: list = field(default_factory=list)
    created_at: float = field(default_factory=time.time)
    last_active: float = field(default_factory=time.time)

    def to_json(self) -> dict:
        return {"session_id": self.session_id, "created_at": self.created_at,
                "last_active": self.last_active,
                "turns": [t.to_json() for t in self.turns]}

    @classmethod
    def from_json(cls, d: dict) -> "ChatSession":
        return cls(session_id=d["session_id"], created_at=d.get("created_at", 0.0),
                   last_active=d.get("last_active", 0.0),
                   turns=[Turn.from_json(t) for t in d.get("turns", [])])


class SessionStore:
    """Thread-safe session registry.

    Each session has its own lock so requests on distinct sessions
    proceed in parallel; callers must not hold a session lock across
    backend network calls.
    """

    def __init__(self, max_turns: int = 200):
        self._sessions: dict[str, ChatSession] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        self.max_turns = max_turns

    def create(self, session_id: str | None = None) -> ChatSession:
        with self._registry_lock:
            sid = session_id or uuid.uuid4().hex
            if sid in self._sessions:
                return self._sessions[sid]
            session = ChatSession(session_id=sid)
            self._sessions[sid] = session
            self._locks[sid] = threading.Lock()
            return session

    def get(self, session_id: str) -> ChatSession:
        with self._registry_lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise SessionNotFound(session_id)
        return session

    def get_or_create(self, session_id: str) -> ChatSession:
        with self._registry_lock:
            if session_id not in self._sessions:
                self._sessions[session_id] = ChatSession(session_id=session_id)
                self._locks[session_id] = threading.Lock()
            return self._sessions[session_id]

    def lock(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            lock = self._locks.get(session_id)
        if lock is None:
            raise SessionNotFound(session_id)
        return lock

    def reset(self, session_id: str):
        session = self.get(session_id)
        with self.lock(session_id):
            session.turns.clear()
            session.last_active = time.time()

    def delete(self, session_id: str):
        with self._registry_lock:
            if session_id not in self._sessions:
                raise SessionNotFound(session_id)
            del self._sessions[session_id]
            del self._locks[session_id]

    def ids(self) -> list:
        with self._registry_lock:
            return list(self._sessions)

    def append_turns(self, session_id: str, *turns: Turn):
        """Atomically append turns, evicting oldest beyond max_turns."""
        session = self.get(session_id)
        with self.lock(session_id):
            session.turns.extend(turns)
            if len(session.turns) > self.max_turns:
                del session.turns[:len(session.turns) - self.max_turns]
            session.last_active = time.time()

    # -- persistence ------------------------------------------------------

    def save(self, path):
        with self._registry_lock:
            sessions = list(self._sessions.values())
        with open(path, "w", encoding="utf-8") as fh:
            for session in sessions:
                fh.write(json.dumps(session.to_json()) + "\n")

    def load(self, path):
        p = Path(path)
        if not p.exists():
            return
        for line in p.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            session = ChatSession.from_json(json.loads(line))
            with self._registry_lock:
                self._sessions[session.session_id] = session
                self._locks[session.session_id] = threading.Lock()
