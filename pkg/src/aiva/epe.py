"""Emotion-aware prompt rendering.

A prompt is a deterministic concatenation of fixed blocks: role
definition, few-shot examples, recent conversation history (each past
user turn annotated with its detected sentiment), a sentiment prefix
line for the current message, and a closing reasoning instruction.
Rendering is pure: identical inputs yield byte-identical output.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

SENTIMENT_PREFIX = "[Detected sentiment: {label}]"

_DEFAULT_ROLE = (
    "You are Aiva, a warm and attentive virtual companion. You listen "
    "carefully, acknowledge how the person feels, and respond with "
    "compassion. Keep replies short, natural, and supportive; never "
    "dismiss or judge the person's feelings."
)

_DEFAULT_COT = (
    "Before answering, reason step by step about what the person is "
    "feeling, why they might feel that way, and what a caring friend "
    "would say. Keep this reasoning to yourself and output only the "
    "final reply."
)

_CANONICAL_FEW_SHOT = {
    "positive": ("I finally got the job I interviewed for!",
                 "That's fantastic news, congratulations! You worked hard for this "
                 "and you deserve it. How are you going to celebrate?"),
    "neutral": ("Just finished sorting out my paperwork for the week.",
                "Nice to have that out of the way. Anything else on your plate "
                "today, or is it time for a break?"),
    "negative": ("My cat has been sick all week and I can't stop worrying.",
                 "I'm so sorry, that sounds really stressful. It's clear how much "
                 "you care. Is the vet giving you any reassurance?"),
    "happy": ("I finally got the job I interviewed for!",
              "That's fantastic news, congratulations! You worked hard for this "
              "and you deserve it. How are you going to celebrate?"),
    "calm": ("Just finished sorting out my paperwork for the week.",
             "Nice to have that out of the way. Anything else on your plate "
             "today, or is it time for a break?"),
    "sad": ("My cat has been sick all week and I can't stop worrying.",
            "I'm so sorry, that sounds really stressful. It's clear how much "
            "you care. Is the vet giving you any reassurance?"),
}


class PromptError(ValueError):
    pass


THREE_CLASS_LABELS = {0: "positive", 1: "neutral", 2: "negative"}
SEVEN_CLASS_LABELS = {0: "Angry", 1: "Bored", 2: "Calm", 3: "Fear",
                      4: "Happy", 5: "Love", 6: "Sad"}


def default_labels(n_classes: int) -> dict:
    """Conventional label names: polarity for 3 classes, the
    seven-emotion scheme for 7; generic names otherwise."""
    if n_classes == 3:
        return dict(THREE_CLASS_LABELS)
    if n_classes == 7:
        return dict(SEVEN_CLASS_LABELS)
    return {k: f"class{k}" for k in range(n_classes)}


@dataclass
class FewShotExample:
    user: str
    sentiment: str
    reply: str


@dataclass
class Turn:
    """One conversation turn. User turns carry the detected sentiment
    once classified; agent turns never do."""
    speaker: str                   # "user" | "agent"
    text: str
    detected_sentiment: str | None = None
    timestamp: float = field(default_factory=time.time)

    def to_json(self) -> dict:
        return {"speaker": self.speaker, "text": self.text,
                "detected_sentiment": self.detected_sentiment,
                "timestamp": self.timestamp}

    @classmethod
    def from_json(cls, d: dict) -> "Turn":
        return cls(speaker=d["speaker"], text=d["text"],
                   detected_sentiment=d.get("detected_sentiment"),
                   timestamp=d.get("timestamp", 0.0))


@dataclass
class PromptTemplate:
    role_definition: str
    few_shot: list
    cot_instruction: str
    history_window: int = 6
    sentiment_labels: dict = field(default_factory=dict)  # class id -> label

    @property
    def labels(self) -> list:
        return [self.sentiment_labels[k] for k in sorted(self.sentiment_labels)]

    def to_json(self) -> dict:
        return {
            "role_definition": self.role_definition,
            "few_shot": [{"user": e.user, "sentiment": e.sentiment, "reply": e.reply}
                         for e in self.few_shot],
            "cot_instruction": self.cot_instruction,
            "history_window": self.history_window,
            "sentiment_labels": {str(k): v for k, v in self.sentiment_labels.items()},
        }

    @classmethod
    def from_json(cls, d: dict) -> "PromptTemplate":
        return cls(
            role_definition=d["role_definition"],
            few_shot=[FewShotExample(**e) for e in d["few_shot"]],
            cot_instruction=d["cot_instruction"],
            history_window=int(d.get("history_window", 6)),
            sentiment_labels={int(k): v for k, v in d["sentiment_labels"].items()},
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "PromptTemplate":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def default_template(sentiment_labels: dict) -> PromptTemplate:
    """Shipped template for a label set: canonical few-shot scenarios
    where the labels admit them, generic ones otherwise."""
    labels = [sentiment_labels[k] for k in sorted(sentiment_labels)]
    few_shot = []
    for label in labels:
        canon = _CANONICAL_FEW_SHOT.get(label.lower())
        if canon and len(few_shot) < 3:
            few_shot.append(FewShotExample(user=canon[0], sentiment=label, reply=canon[1]))
    if not few_shot:
        for label in labels[:3]:
            few_shot.append(FewShotExample(
                user=f"I had a day that left me feeling {label.lower()}.",
                sentiment=label,
                reply=f"Thank you for sharing that. Feeling {label.lower()} is completely "
                      "understandable; tell me more about what happened?"))
    return PromptTemplate(
        role_definition=_DEFAULT_ROLE,
        few_shot=few_shot,
        cot_instruction=_DEFAULT_COT,
        history_window=6,
        sentiment_labels=dict(sentiment_labels),
    )


def validate_template(template: PromptTemplate, n_classes: int | None = None) -> list:
    """Structural checks; violations come back as strings, never raises."""
    violations = []
    if not template.role_definition.strip():
        violations.append("role_definition is empty")
    if not template.cot_instruction.strip():
        violations.append("cot_instruction is empty")
    if template.history_window < 0:
        violations.append("history_window must be >= 0")
    if not template.sentiment_labels:
        violations.append("sentiment_labels is empty")
    for cid, label in template.sentiment_labels.items():
        if not str(label).strip():
            violations.append(f"label for class {cid} is empty")
    if n_classes is not None:
        missing = [c for c in range(n_classes) if c not in template.sentiment_labels]
        if missing:
            violations.append(f"classes without labels: {missing}")
    label_set = set(template.labels)
    for i, ex in enumerate(template.few_shot):
        if ex.sentiment not in label_set:
            violations.append(f"few_shot[{i}] sentiment {ex.sentiment!r} not in label set")
    return violations


def _format_turn(turn: Turn) -> str:
    if turn.speaker == "user":
        if turn.detected_sentiment:
            return f"User (feeling {turn.detected_sentiment}): {turn.text}"
        return f"User: {turn.text}"
    return f"Companion: {turn.text}"


def render_prompt(template: PromptTemplate, history, user_msg: str, sentiment: str) -> str:
    """Assemble the full prompt for one reply.

    Block order is fixed: role, few-shot examples, the last
    ``history_window`` turns (oldest first), the sentiment prefix with
    the current detection, the user message, and the reasoning
    instruction. The current sentiment label appears exactly once in the
    prefix block.
    """
    if sentiment not in set(template.labels):
        raise PromptError(f"unknown sentiment label {sentiment!r}; "
                          f"expected one of {template.labels}")
    parts = ["### Role", template.role_definition, ""]
    if template.few_shot:
        parts.append("### Examples")
        for ex in template.few_shot:
            parts.append(f"User (feeling {ex.sentiment}): {ex.user}")
            parts.append(f"Companion: {ex.reply}")
        parts.append("")
    window = list(history)[-template.history_window:] if template.history_window > 0 else []
    if window:
        parts.append("### Conversation so far")
        for turn in window:
            parts.append(_format_turn(turn))
        parts.append("")
    parts.append("### Current message")
    parts.append(SENTIMENT_PREFIX.format(label=sentiment))
    parts.append(f"User: {user_msg}")
    parts.append("")
    parts.append("### Instruction")
    parts.append(template.cot_instruction)
    return "\n".join(parts)


def extract_prefix_sentiment(prompt: str) -> str | None:
    """Pull the detected sentiment back out of a rendered prompt."""
    marker = SENTIMENT_PREFIX.split("{label}")[0]
    for line in prompt.splitlines():
        if line.startswith(marker) and line.endswith("]"):
            return line[len(marker):-1]
    return None
