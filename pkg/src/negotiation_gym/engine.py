"""Episode and simulation execution.

One episode is a strictly sequential loop: pick the next speaker, let it
act, append to the shared transcript, check termination. A simulation runs
a configured number of episodes, accumulating each finished record into the
Environment and interleaving prompt revisions between episodes so episode
i+1 sees every revision from episodes <= i.

Distinct jobs share no mutable state; progress is reported through an
optional ordered event callback.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

from .agents import (
    Environment,
    EpisodeRecord,
    UtilityAgent,
    UtilityError,
    act,
    learn_from_feedback,
    silent_reflection,
)
from .backends import BackendError, ChatBackend, ChatMessage, CompletionParams
from .config import ScenarioConfig, validate
from .extraction import ExtractionError, extract_variables_detailed

DEFAULT_SELECTOR_PROMPT = (
    "You moderate a conversation between: {names}. "
    "Given the transcript so far, reply with ONLY the name of the agent who should speak next."
)


class InvalidConfigError(ValueError):
    """A simulation was started from a config that fails validation."""

    def __init__(self, violations):
        self.violations = list(violations)
        detail = "; ".join(f"{v.path}: {v.message}" for v in self.violations)
        super().__init__(f"invalid config: {detail}")


class EpisodeFailedError(RuntimeError):
    """An episode failed and the job is configured to abort on failure."""


@dataclass(frozen=True)
class TranscriptMessage:
    turn_index: int
    author_name: str
    content: str


@dataclass
class Transcript:
    """Shared public history; turn indices count from 1."""

    messages: list[TranscriptMessage] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.messages)

    def append(self, author_name: str, content: str):
        self.messages.append(TranscriptMessage(len(self.messages) + 1, author_name, content))

    def pairs(self) -> tuple[tuple[str, str], ...]:
        return tuple((m.author_name, m.content) for m in self.messages)

    @property
    def last(self) -> TranscriptMessage | None:
        return self.messages[-1] if self.messages else None


@dataclass(frozen=True)
class TerminationOutcome:
    reason: str  # "marker" | "max_messages"
    triggering_turn: int
    marker_token: str | None = None


@dataclass(frozen=True)
class SelectorPolicy:
    kind: str = "round_robin"  # "round_robin" | "model_based"
    order: tuple[str, ...] = ()
    selector_prompt: str | None = None


@dataclass(frozen=True)
class EngineEvent:
    """One entry on a job's ordered progress stream."""

    type: str  # "episode" | "revision" | "warning"
    data: Mapping[str, Any]


EventSink = Callable[[EngineEvent], None]


def _emit(on_event: EventSink | None, event_type: str, data: Mapping[str, Any]):
    if on_event is not None:
        on_event(EngineEvent(type=event_type, data=data))


def select_next(
    policy: SelectorPolicy,
    transcript: Transcript,
    agents: Sequence[UtilityAgent],
    backend: ChatBackend | None = None,
    params: CompletionParams | None = None,
    on_event: EventSink | None = None,
) -> str:
    """Name of the agent who speaks next."""
    if not agents:
        raise ValueError("agents must be non-empty")
    names = [agent.name for agent in agents]
    order = list(policy.order) or names
    if sorted(order) != sorted(names):
        raise ValueError("selector order must be a permutation of agent names")
    round_robin_pick = order[len(transcript) % len(order)]
    if policy.kind == "round_robin":
        return round_robin_pick
    if policy.kind != "model_based":
        raise ValueError(f"unknown selector kind {policy.kind!r}")
    if backend is None or params is None:
        raise ValueError("model_based selection requires a backend and params")

    prompt = policy.selector_prompt or DEFAULT_SELECTOR_PROMPT.format(names=", ".join(names))
    history = [
        ChatMessage(role="system", content=prompt),
        ChatMessage(
            role="user",
            content="\n".join(f"{m.author_name}: {m.content}" for m in transcript.messages)
            or "(no messages yet)",
        ),
    ]
    for _ in range(2):
        reply = backend.complete(history, params).content.strip()
        if reply in names:
            return reply
        mentioned = [name for name in names if name in reply]
        if len(mentioned) == 1:
            return mentioned[0]
        history += [
            ChatMessage(role="assistant", content=reply),
            ChatMessage(role="user", content=f"Reply with exactly one of: {', '.join(names)}"),
        ]
    _emit(on_event, "warning", {"message": "selector reply unusable twice; falling back to round robin"})
    return round_robin_pick


def check_termination(config: ScenarioConfig, transcript: Transcript) -> TerminationOutcome | None:
    """Marker match wins over the turn cap when both apply to the same turn."""
    last = transcript.last
    if last is not None and config.termination_condition in last.content:
        return TerminationOutcome(
            reason="marker", triggering_turn=last.turn_index, marker_token=config.termination_condition
        )
    if len(transcript) >= config.max_messages:
        return TerminationOutcome(reason="max_messages", triggering_turn=len(transcript))
    return None


def agent_view(agent: UtilityAgent, transcript: Transcript) -> list[ChatMessage]:
    """Per-agent conversation view: own system prompt, then the shared history.

    Other agents' messages arrive as user messages prefixed with the author
    name so the model knows who said what; the agent's own messages are
    assistant turns.
    """
    view = [ChatMessage(role="system", content=agent.system_prompt)]
    for msg in transcript.messages:
        if msg.author_name == agent.name:
            view.append(
                ChatMessage(role="assistant", content=msg.content, author_name=msg.author_name)
            )
        else:
            view.append(
                ChatMessage(
                    role="user",
                    content=f"{msg.author_name}: {msg.content}",
                    author_name=msg.author_name,
                )
            )
    return view


def run_episode(
    config: ScenarioConfig,
    agents: Sequence[UtilityAgent],
    backend: ChatBackend,
    seed: int | None = None,
    *,
    episode_index: int = 0,
    policy: SelectorPolicy | None = None,
    temperature: float = 0.7,
    clock: Callable[[], float] = time.perf_counter,
    enable_reflection: bool = False,
    on_event: EventSink | None = None,
) -> EpisodeRecord:
    """Run one episode to termination, then extract variables and utilities.

    A backend failure mid-episode marks the record failed and keeps the
    partial transcript; extraction failure zeroes utilities and flags the
    record. With a scripted backend and fixed seed the returned record is
    bit-reproducible.
    """
    params = CompletionParams(model_id=config.model_id, temperature=temperature, seed=seed)
    policy = policy or SelectorPolicy(kind="round_robin", order=tuple(a.name for a in agents))
    by_name = {agent.name: agent for agent in agents}
    transcript = Transcript()
    notes: dict[str, list[str]] = {}
    started = clock()
    failed = False
    error: str | None = None
    outcome: TerminationOutcome | None = None

    while True:
        outcome = check_termination(config, transcript)
        if outcome is not None:
            break
        speaker = select_next(policy, transcript, agents, backend, params, on_event)
        agent = by_name[speaker]
        try:
            message = act(agent, agent_view(agent, transcript), backend, params)
        except BackendError as exc:
            failed = True
            error = str(exc)
            break
        transcript.append(agent.name, message.content)
        if enable_reflection:
            for other in agents:
                if other.name == speaker:
                    continue
                note = silent_reflection(other, message.content, backend, params)
                if note:
                    notes.setdefault(other.name, []).append(note)

    record = EpisodeRecord(
        index=episode_index,
        transcript=transcript.pairs(),
        extracted={},
        utilities={},
        termination_reason=outcome.reason if outcome else None,
        wall_time=clock() - started,
        completion_params_used=params,
        failed=failed,
        error=error,
        private_notes={name: tuple(items) for name, items in notes.items()},
    )
    if failed:
        return record

    if config.output_variables and len(transcript):
        try:
            values, raw = extract_variables_detailed(
                transcript.pairs(), config.output_variables, backend, params
            )
            record.extracted = values
            record.extraction_raw = raw
        except ExtractionError as exc:
            record.extraction_failed = True
            record.utilities = {agent.name: 0.0 for agent in agents}
            record.error = str(exc)
            _emit(on_event, "warning", {"message": f"extraction failed: {exc}"})
            return record

    utilities: dict[str, float] = {}
    utility_errors: dict[str, str] = {}
    for agent in agents:
        try:
            utilities[agent.name] = agent.utility_binding.fn(agent.strategy, record)
        except UtilityError as exc:
            utilities[agent.name] = 0.0
            utility_errors[agent.name] = str(exc)
            _emit(on_event, "warning", {"message": f"utility for {agent.name} failed: {exc}"})
    record.utilities = utilities
    record.utility_errors = utility_errors
    return record


def run_simulation(
    config: ScenarioConfig,
    agents: Sequence[UtilityAgent],
    backend: ChatBackend,
    *,
    seed: int | None = None,
    policy: SelectorPolicy | None = None,
    temperature: float = 0.7,
    clock: Callable[[], float] = time.perf_counter,
    enable_reflection: bool = False,
    abort_on_episode_failure: bool | None = None,
    on_event: EventSink | None = None,
) -> Environment:
    """Execute num_runs episodes sequentially, revising prompts in between.

    Agents with self_improve=True get one revision opportunity after every
    episode (including the last, whose revision is recorded but affects
    nothing). Failed revisions are warnings, never job killers.
    """
    violations = validate(config)
    if violations:
        raise InvalidConfigError(violations)
    if abort_on_episode_failure is None:
        abort_on_episode_failure = bool(config.extras.get("abort_job_on_episode_failure", False))

    base_seed = seed if seed is not None else config.rng_seed
    seed_stream = random.Random(base_seed) if base_seed is not None else None
    env = Environment()
    revision_params = CompletionParams(model_id=config.model_id, temperature=temperature)

    for index in range(config.num_runs):
        episode_seed = seed_stream.randrange(2**32) if seed_stream is not None else None
        record = run_episode(
            config,
            agents,
            backend,
            episode_seed,
            episode_index=index,
            policy=policy,
            temperature=temperature,
            clock=clock,
            enable_reflection=enable_reflection,
            on_event=on_event,
        )
        env.append_run(record)
        _emit(
            on_event,
            "episode",
            {
                "index": index,
                "termination_reason": record.termination_reason,
                "utilities": dict(record.utilities),
                "failed": record.failed,
            },
        )
        if record.failed and abort_on_episode_failure:
            raise EpisodeFailedError(record.error or "episode failed")
        if record.failed:
            continue
        for agent in agents:
            if not agent.self_improve:
                continue
            try:
                revision = learn_from_feedback(
                    agent, env, backend, config.optimization_prompt, params=revision_params
                )
            except BackendError as exc:
                _emit(on_event, "warning", {"message": f"revision for {agent.name} failed: {exc}"})
                continue
            if revision is None:
                _emit(
                    on_event,
                    "warning",
                    {"message": f"revision for {agent.name} skipped (empty or duplicate reply)"},
                )
            else:
                _emit(
                    on_event,
                    "revision",
                    {
                        "agent": agent.name,
                        "episode_index": revision.episode_index,
                        "sentence": revision.strategy_sentence,
                    },
                )
    return env


def _params_to_json(params: CompletionParams) -> dict[str, Any]:
    return {
        "model_id": params.model_id,
        "temperature": params.temperature,
        "max_output_tokens": params.max_output_tokens,
        "timeout": params.timeout,
        "seed": params.seed,
    }


def _record_to_json(record: EpisodeRecord, include_timing: bool) -> dict[str, Any]:
    out: dict[str, Any] = {
        "index": record.index,
        "transcript": [[author, content] for author, content in record.transcript],
        "extracted": {name: value.value for name, value in record.extracted.items()},
        "utilities": dict(record.utilities),
        "termination_reason": record.termination_reason,
        "failed": record.failed,
        "error": record.error,
        "extraction_failed": record.extraction_failed,
        "extraction_raw": dict(record.extraction_raw),
        "utility_errors": dict(record.utility_errors),
        "private_notes": {name: list(items) for name, items in record.private_notes.items()},
        "completion_params": _params_to_json(record.completion_params_used),
    }
    if include_timing:
        out["wall_time"] = record.wall_time
    return out


def environment_to_document(env: Environment, include_timing: bool = False) -> dict[str, Any]:
    return {
        "runs": [_record_to_json(r, include_timing) for r in env.runs],
        "agent_strategies": {name: list(items) for name, items in env.agent_strategies.items()},
        "revisions": [
            {
                "agent_name": rev.agent_name,
                "episode_index": rev.episode_index,
                "old_prompt": rev.old_prompt,
                "new_prompt": rev.new_prompt,
                "strategy_sentence": rev.strategy_sentence,
            }
            for rev in env.revisions
        ],
    }


def serialize_environment(env: Environment, include_timing: bool = False) -> str:
    """Stable-order JSON document for a finished job.

    Timing is excluded by default so scripted runs serialize
    byte-identically; pass include_timing=True for diagnostic dumps.
    """
    return json.dumps(environment_to_document(env, include_timing), indent=2, ensure_ascii=False)
