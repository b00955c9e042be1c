"""Chat-completion backends.

Two implementations behind one interface: RemoteBackend speaks the
OpenAI-compatible /chat/completions wire format; ScriptedBackend answers
from a deterministic rule table so simulations can run offline and
bit-reproducibly. Structured variable extraction (ask for a flat JSON
object, parse it, one repair retry) is shared by both.

Credentials come from NEGOTIATION_GYM_API_KEY and the server from
NEGOTIATION_GYM_BASE_URL; neither is ever written into configs or results.
"""

from __future__ import annotations

import json
import os
import re
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Sequence

import httpx

from .config import OutputVariableSpec

API_KEY_ENV = "NEGOTIATION_GYM_API_KEY"
BASE_URL_ENV = "NEGOTIATION_GYM_BASE_URL"
DEFAULT_BASE_URL = "https://api.openai.com/v1"

ROLES = ("system", "user", "assistant")

# Transient statuses worth retrying; everything else fails fast.
RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 504})


class BackendError(RuntimeError):
    """Base class for completion failures."""


class TransportError(BackendError):
    """Transport failure or retryable HTTP status that survived all retries."""

    def __init__(self, message: str, status: int | None = None, payload: str | None = None):
        super().__init__(message)
        self.status = status
        self.payload = payload


class StructuredReplyError(BackendError):
    """Structured extraction reply unusable: unparseable or missing a key."""

    def __init__(self, message: str, missing_key: str | None = None, raw: str | None = None):
        super().__init__(message)
        self.missing_key = missing_key
        self.raw = raw


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str
    author_name: str | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if self.content is None:
            raise ValueError("content must not be None")


@dataclass(frozen=True)
class CompletionParams:
    model_id: str
    temperature: float = 0.7
    max_output_tokens: int = 512
    timeout: float = 60.0
    seed: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")


def _check_history(history: Sequence[ChatMessage]):
    if not history:
        raise ValueError("history must be non-empty")
    if history[0].role != "system":
        raise ValueError("first message must have role 'system'")


_EXTRACTION_SUFFIX = (
    "Respond with a single flat JSON object and nothing else: no prose, no code fences.\n"
    "The object must contain exactly these keys:\n{keys}\n"
    "Use JSON null for a value that cannot be determined."
)

_REPAIR_MESSAGE = (
    "Your previous reply was not a valid flat JSON object. "
    "Reply again with ONLY the JSON object, no other text."
)

_FENCE_RE = re.compile(r"^```(?:json)?\s*(.*?)\s*```$", re.DOTALL)


def _strip_fences(text: str) -> str:
    match = _FENCE_RE.match(text.strip())
    return match.group(1) if match else text.strip()


def _parse_flat_object(raw: str) -> dict | None:
    try:
        obj = json.loads(_strip_fences(raw))
    except json.JSONDecodeError:
        return None
    return obj if isinstance(obj, dict) else None


class ChatBackend(ABC):
    """One chat completion plus structured extraction on top of it."""

    @abstractmethod
    def complete(self, history: Sequence[ChatMessage], params: CompletionParams) -> ChatMessage:
        """Return one assistant message for the given conversation."""

    def complete_structured(
        self,
        history: Sequence[ChatMessage],
        params: CompletionParams,
        schema: Sequence[OutputVariableSpec],
    ) -> dict[str, str]:
        """Ask for a flat JSON object keyed by the schema names.

        Returns one raw string per schema name (JSON null becomes the empty
        string). Unparseable replies get exactly one repair retry; a missing
        key is an immediate error naming it.
        """
        if not schema:
            raise ValueError("schema must be non-empty")
        keys = "\n".join(f"- {s.name} ({s.type}): {s.description}" for s in schema)
        asked = list(history) + [
            ChatMessage(role="user", content=_EXTRACTION_SUFFIX.format(keys=keys))
        ]
        reply = self.complete(asked, params)
        obj = _parse_flat_object(reply.content)
        if obj is None:
            asked += [reply, ChatMessage(role="user", content=_REPAIR_MESSAGE)]
            reply = self.complete(asked, params)
            obj = _parse_flat_object(reply.content)
            if obj is None:
                raise StructuredReplyError(
                    "reply unparseable as a JSON object after one repair retry",
                    raw=reply.content,
                )
        out: dict[str, str] = {}
        for spec in schema:
            if spec.name not in obj:
                raise StructuredReplyError(
                    f"reply missing key {spec.name!r}", missing_key=spec.name, raw=reply.content
                )
            value = obj[spec.name]
            if value is None:
                out[spec.name] = ""
            elif isinstance(value, str):
                out[spec.name] = value
            else:
                out[spec.name] = json.dumps(value)
        return out


def build_request_body(history: Sequence[ChatMessage], params: CompletionParams) -> bytes:
    """Canonical wire bytes for one chat-completion request (stable key order)."""
    messages = []
    for msg in history:
        entry: dict = {"role": msg.role, "content": msg.content}
        if msg.author_name is not None:
            entry["name"] = msg.author_name
        messages.append(entry)
    body: dict = {
        "model": params.model_id,
        "messages": messages,
        "temperature": params.temperature,
        "max_tokens": params.max_output_tokens,
    }
    if params.seed is not None:
        body["seed"] = params.seed
    return json.dumps(body, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


class RemoteBackend(ChatBackend):
    """OpenAI-compatible HTTP client with bounded retries.

    Retries only transport failures and 429/5xx statuses, at most
    ``max_attempts`` total tries with exponentially growing delays, so a
    transient fault cannot kill a long simulation but a hard error surfaces
    immediately. Safe for concurrent use; the passed history is never
    mutated.
    """

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        max_attempts: int = 3,
        backoff_base: float = 1.0,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = (base_url or os.environ.get(BASE_URL_ENV, DEFAULT_BASE_URL)).rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if not self.api_key:
            raise BackendError(
                f"no API key: set {API_KEY_ENV} or pass api_key explicitly"
            )
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self._sleep = sleep
        self._client = httpx.Client(transport=transport)

    def close(self):
        self._client.close()

    def complete(self, history: Sequence[ChatMessage], params: CompletionParams) -> ChatMessage:
        _check_history(history)
        body = build_request_body(history, params)
        url = f"{self.base_url}/chat/completions"
        headers = {
            "Authorization": f"Bearer {self.api_key}",
            "Content-Type": "application/json",
        }
        last_status: int | None = None
        last_payload: str | None = None
        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                self._sleep(self.backoff_base * 2 ** (attempt - 1))
            try:
                response = self._client.post(
                    url, content=body, headers=headers, timeout=params.timeout
                )
            except httpx.HTTPError as exc:
                last_error, last_status, last_payload = exc, None, None
                continue
            if response.status_code in RETRYABLE_STATUSES:
                last_error = None
                last_status, last_payload = response.status_code, response.text
                continue
            if response.status_code != 200:
                raise TransportError(
                    f"chat completion failed with status {response.status_code}",
                    status=response.status_code,
                    payload=response.text,
                )
            return _parse_completion(response.text)
        detail = f"status {last_status}" if last_status is not None else repr(last_error)
        raise TransportError(
            f"chat completion failed after {self.max_attempts} attempts ({detail})",
            status=last_status,
            payload=last_payload,
        )


def _parse_completion(text: str) -> ChatMessage:
    try:
        doc = json.loads(text)
        content = doc["choices"][0]["message"]["content"]
    except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
        raise BackendError(f"malformed completion response body: {exc}") from exc
    if not isinstance(content, str):
        raise BackendError("malformed completion response body: content is not a string")
    return ChatMessage(role="assistant", content=content)


Matcher = Callable[[Sequence[ChatMessage]], bool]
Responder = Callable[[Sequence[ChatMessage]], str]


@dataclass(frozen=True)
class ScriptedRule:
    """First rule whose matcher hits the conversation produces the reply.

    ``matcher`` is a regex searched in the last message's content, or a
    predicate over the whole history. ``response`` is a literal or a
    function of the history. Responders must be pure for the backend's
    determinism guarantee to hold.
    """

    matcher: str | Matcher
    response: str | Responder

    def matches(self, history: Sequence[ChatMessage]) -> bool:
        if callable(self.matcher):
            return bool(self.matcher(history))
        return re.search(self.matcher, history[-1].content) is not None

    def respond(self, history: Sequence[ChatMessage]) -> str:
        if callable(self.response):
            return self.response(history)
        return self.response


@dataclass(frozen=True)
class ScriptedPolicyTable:
    rules: tuple[ScriptedRule, ...] = ()
    default_response: str | Responder = "OK."


class ScriptedBackend(ChatBackend):
    """Deterministic rule-table backend: same history in, same bytes out."""

    def __init__(self, table: ScriptedPolicyTable):
        self.table = table

    @classmethod
    def from_rules(
        cls,
        rules: Sequence[ScriptedRule | tuple[str | Matcher, str | Responder]],
        default_response: str | Responder = "OK.",
    ) -> "ScriptedBackend":
        built = tuple(
            rule if isinstance(rule, ScriptedRule) else ScriptedRule(*rule) for rule in rules
        )
        return cls(ScriptedPolicyTable(rules=built, default_response=default_response))

    def complete(self, history: Sequence[ChatMessage], params: CompletionParams) -> ChatMessage:
        _check_history(history)
        for rule in self.table.rules:
            if rule.matches(history):
                return ChatMessage(role="assistant", content=rule.respond(history))
        default = self.table.default_response
        content = default(history) if callable(default) else default
        return ChatMessage(role="assistant", content=content)
