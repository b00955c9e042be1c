"""Typed output-variable extraction from finished transcripts.

The configured output variables (final price, deal reached, ...) are pulled
out of a transcript by one structured backend call after the episode ends,
keeping extraction isolated from negotiation behavior. Raw replies are kept
alongside parsed values so extractions stay auditable.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Sequence

from .backends import ChatBackend, ChatMessage, CompletionParams, StructuredReplyError
from .config import OutputVariableSpec


class TypedParseError(ValueError):
    def __init__(self, raw: str, kind: str, reason: str):
        super().__init__(f"cannot parse {raw!r} as {kind}: {reason}")
        self.raw = raw
        self.kind = kind


class ExtractionError(RuntimeError):
    """Variable extraction failed; the episode should be flagged."""


@dataclass(frozen=True)
class TypedValue:
    """Exactly one payload, matching kind."""

    kind: str
    number: float | None = None
    boolean: bool | None = None
    text: str | None = None

    def __post_init__(self):
        payloads = {"Number": self.number, "Boolean": self.boolean, "String": self.text}
        if self.kind not in payloads:
            raise ValueError(f"unknown kind {self.kind!r}")
        for kind, payload in payloads.items():
            expected = kind == self.kind
            if (payload is not None) != expected:
                raise ValueError(f"TypedValue({self.kind}) has wrong payload population")

    @property
    def value(self) -> float | bool | str:
        if self.kind == "Number":
            return self.number
        if self.kind == "Boolean":
            return self.boolean
        return self.text

    @staticmethod
    def of_number(value: float) -> "TypedValue":
        return TypedValue(kind="Number", number=float(value))

    @staticmethod
    def of_boolean(value: bool) -> "TypedValue":
        return TypedValue(kind="Boolean", boolean=bool(value))

    @staticmethod
    def of_string(value: str) -> "TypedValue":
        return TypedValue(kind="String", text=value)


_THOUSANDS_RE = re.compile(r"(?<=\d),(?=\d)")

_BOOLEAN_WORDS = {"true": True, "yes": True, "false": False, "no": False}


def parse_typed(raw: str, kind: str) -> TypedValue:
    """Strictly parse one raw extractor string into a typed value."""
    if not raw:
        raise TypedParseError(raw, kind, "empty input")
    if kind == "Number":
        cleaned = _THOUSANDS_RE.sub("", raw.strip())
        try:
            number = float(cleaned)
        except ValueError as exc:
            raise TypedParseError(raw, kind, str(exc)) from None
        if not math.isfinite(number):
            raise TypedParseError(raw, kind, "non-finite number")
        return TypedValue.of_number(number)
    if kind == "Boolean":
        word = raw.strip().lower()
        if word not in _BOOLEAN_WORDS:
            raise TypedParseError(raw, kind, "expected one of true/false/yes/no")
        return TypedValue.of_boolean(_BOOLEAN_WORDS[word])
    if kind == "String":
        return TypedValue.of_string(raw.strip())
    raise TypedParseError(raw, kind, f"unknown kind {kind!r}")


def format_typed(value: TypedValue) -> str:
    """Canonical string form; parse_typed(format_typed(v), v.kind) == v."""
    if value.kind == "Number":
        number = value.number
        return str(int(number)) if number == int(number) else repr(number)
    if value.kind == "Boolean":
        return "true" if value.boolean else "false"
    return value.text


def extractor_system_prompt() -> str:
    """The versioned extractor prompt shipped as a text asset."""
    return (
        resources.files(__package__)
        .joinpath("assets/extractor_prompt.txt")
        .read_text(encoding="utf-8")
        .strip()
    )


def _render_transcript(transcript: Sequence[tuple[str, str]]) -> str:
    return "\n".join(f"{author}: {content}" for author, content in transcript)


def extract_variables_detailed(
    transcript: Sequence[tuple[str, str]],
    specs: Sequence[OutputVariableSpec],
    backend: ChatBackend,
    params: CompletionParams,
) -> tuple[dict[str, TypedValue], dict[str, str]]:
    """Extract typed values plus the raw reply strings for auditing.

    Optional variables may come back absent (empty or unparseable raw);
    a mandatory variable that cannot be parsed fails the whole extraction.
    """
    if not transcript:
        raise ValueError("transcript must be non-empty")
    if not specs:
        raise ValueError("specs must be non-empty")
    history = [
        ChatMessage(role="system", content=extractor_system_prompt()),
        ChatMessage(role="user", content=f"Transcript:\n{_render_transcript(transcript)}"),
    ]
    try:
        raw = backend.complete_structured(history, params, specs)
    except StructuredReplyError as exc:
        raise ExtractionError(str(exc)) from exc

    values: dict[str, TypedValue] = {}
    for spec in specs:
        raw_value = raw.get(spec.name, "")
        if not raw_value.strip():
            if spec.optional:
                continue
            raise ExtractionError(f"no value extracted for required variable {spec.name!r}")
        try:
            values[spec.name] = parse_typed(raw_value, spec.type)
        except TypedParseError as exc:
            if spec.optional:
                continue
            raise ExtractionError(str(exc)) from exc
    return values, raw


def extract_variables(
    transcript: Sequence[tuple[str, str]],
    specs: Sequence[OutputVariableSpec],
    backend: ChatBackend,
    params: CompletionParams,
) -> Mapping[str, TypedValue]:
    values, _ = extract_variables_detailed(transcript, specs, backend, params)
    return values
