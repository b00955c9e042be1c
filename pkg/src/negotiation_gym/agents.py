"""Utility-bearing conversational agents.

A UtilityAgent couples a system prompt with a private strategy map and a
utility binding. Its prompt is never edited in place: revisions append one
strategy sentence to a log and the effective system prompt is regenerated
as base prompt + logged sentences, which keeps every revision auditable
and makes failed revisions trivially atomic.

The Environment is the cross-episode record threaded between runs: agents
read it to compute utility over the latest episode and to ground prompt
revisions in recent history.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

from .backends import BackendError, ChatBackend, ChatMessage, CompletionParams
from .extraction import TypedValue

REVISION_WINDOW = 10

DEFAULT_OPTIMIZER_PROMPT = (
    "You are a strategy coach for {name}. Study the recent episodes and their "
    "utility scores, then devise exactly ONE new strategy sentence {name} could "
    "apply in future episodes to raise their utility. Start with an action verb, "
    "do not duplicate prior strategies, and do not mention specific prices, "
    "names or budgets. Reply with ONLY that single sentence."
)


class UtilityError(RuntimeError):
    """A utility binding could not be evaluated for the latest episode."""

    def __init__(self, message: str, variable: str | None = None):
        super().__init__(message)
        self.variable = variable


@dataclass(frozen=True)
class UtilityBinding:
    """Named utility function over (private strategy, finished episode)."""

    name: str
    fn: Callable[[Mapping[str, Any], "EpisodeRecord"], float]


def _zero_utility(strategy: Mapping[str, Any], record: "EpisodeRecord") -> float:
    return 0.0


DEFAULT_BINDING = UtilityBinding(name="Default", fn=_zero_utility)


@dataclass
class EpisodeRecord:
    """One finished run: transcript, extracted variables, utilities."""

    index: int
    transcript: tuple[tuple[str, str], ...]
    extracted: Mapping[str, TypedValue]
    utilities: Mapping[str, float]
    termination_reason: str | None
    wall_time: float
    completion_params_used: CompletionParams
    failed: bool = False
    error: str | None = None
    extraction_failed: bool = False
    extraction_raw: Mapping[str, str] = field(default_factory=dict)
    utility_errors: Mapping[str, str] = field(default_factory=dict)
    private_notes: Mapping[str, tuple[str, ...]] = field(default_factory=dict)


@dataclass(frozen=True)
class PromptRevision:
    agent_name: str
    episode_index: int
    old_prompt: str
    new_prompt: str
    strategy_sentence: str


@dataclass
class Environment:
    """Chronological record of finished runs plus per-agent strategy lists."""

    runs: list[EpisodeRecord] = field(default_factory=list)
    agent_strategies: dict[str, list[str]] = field(default_factory=dict)
    revisions: list[PromptRevision] = field(default_factory=list)

    def append_run(self, record: EpisodeRecord):
        if record.index != len(self.runs):
            raise ValueError(
                f"episode index {record.index} out of order (expected {len(self.runs)})"
            )
        self.runs.append(record)


class UtilityAgent:
    """Named participant with a private strategy and a self-revision log."""

    def __init__(
        self,
        name: str,
        base_prompt: str,
        description: str = "",
        strategy: Mapping[str, Any] | None = None,
        self_improve: bool = False,
        utility_binding: UtilityBinding = DEFAULT_BINDING,
        strategy_log: Sequence[str] = (),
    ):
        if not name:
            raise ValueError("agent name must be non-empty")
        self.name = name
        self.description = description
        self.base_prompt = base_prompt
        self.strategy: dict[str, Any] = dict(strategy or {})
        self.self_improve = self_improve
        self.utility_binding = utility_binding
        self.strategy_log: list[str] = list(strategy_log)

    @property
    def system_prompt(self) -> str:
        return render_system_prompt(self.base_prompt, self.strategy_log)

    def rebase(self, new_base_prompt: str):
        """Swap the scenario-specific base prompt while keeping learned strategies."""
        self.base_prompt = new_base_prompt


def render_system_prompt(base_prompt: str, strategy_log: Sequence[str]) -> str:
    if not strategy_log:
        return base_prompt
    lessons = "\n".join(f"- {sentence}" for sentence in strategy_log)
    return f"{base_prompt}\n\nLessons from previous negotiations:\n{lessons}"


def compute_utility(agent: UtilityAgent, env: Environment) -> float:
    """Scalar utility of the latest run under the agent's binding."""
    if not env.runs:
        raise ValueError("environment has no finished runs")
    return agent.utility_binding.fn(agent.strategy, env.runs[-1])


_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s")


def first_sentence(text: str) -> str:
    """First sentence of a reply, whitespace-trimmed. Empty if none."""
    stripped = text.strip()
    if not stripped:
        return ""
    return _SENTENCE_SPLIT_RE.split(stripped, maxsplit=1)[0].strip()


def render_transcript(transcript: Sequence[tuple[str, str]]) -> str:
    return "\n".join(f"{author}: {content}" for author, content in transcript)


def build_revision_prompt(
    agent: UtilityAgent,
    env: Environment,
    optimization_prompt: str | None = None,
    window: int = REVISION_WINDOW,
) -> tuple[ChatMessage, ChatMessage]:
    """Assemble (system, user) messages asking for one new strategy sentence.

    The user body carries at most the last ``window`` episodes with this
    agent's utility for each, plus the prior-strategy list so the model can
    avoid duplicates.
    """
    header = optimization_prompt or DEFAULT_OPTIMIZER_PROMPT.format(name=agent.name)
    episodes = env.runs[-window:]
    blocks = []
    for record in episodes:
        utility = record.utilities.get(agent.name, 0.0)
        blocks.append(
            f"Episode {record.index + 1}: (utility {utility:.2f})\n"
            f"{render_transcript(record.transcript)}"
        )
    prior = env.agent_strategies.get(agent.name, [])
    body = (
        "Previous strategies:\n- " + "\n- ".join(prior) + "\n\n"
        + "\n\n".join(blocks)
        + "\n\nReply with exactly ONE new strategy sentence."
    )
    return ChatMessage(role="system", content=header), ChatMessage(role="user", content=body)


def apply_revision(
    agent: UtilityAgent, env: Environment, sentence: str, episode_index: int
) -> PromptRevision:
    """Append one strategy sentence atomically and regenerate the prompt."""
    old_prompt = agent.system_prompt
    agent.strategy_log.append(sentence)
    env.agent_strategies.setdefault(agent.name, []).append(sentence)
    revision = PromptRevision(
        agent_name=agent.name,
        episode_index=episode_index,
        old_prompt=old_prompt,
        new_prompt=agent.system_prompt,
        strategy_sentence=sentence,
    )
    env.revisions.append(revision)
    return revision


def learn_from_feedback(
    agent: UtilityAgent,
    env: Environment,
    backend: ChatBackend,
    optimization_prompt: str | None = None,
    *,
    params: CompletionParams,
    window: int = REVISION_WINDOW,
) -> PromptRevision | None:
    """Run one self-revision round; returns None when the revision was skipped.

    Backend failures propagate with the prompt untouched. An empty reply
    rejects the revision; a sentence already in the log gets one re-ask,
    then the revision is skipped. The prompt and strategy log only change
    together, after the new sentence is accepted.
    """
    if not agent.self_improve:
        raise ValueError(f"agent {agent.name!r} has self_improve disabled")
    if not env.runs:
        raise ValueError("environment has no finished runs")

    system, user = build_revision_prompt(agent, env, optimization_prompt, window)
    history = [system, user]
    reply = backend.complete(history, params)
    sentence = first_sentence(reply.content)
    if sentence and sentence in agent.strategy_log:
        history += [
            reply,
            ChatMessage(
                role="user",
                content="That strategy was already suggested. Provide ONE new strategy sentence that differs from all previous ones.",
            ),
        ]
        reply = backend.complete(history, params)
        sentence = first_sentence(reply.content)
    if not sentence or sentence in agent.strategy_log:
        return None
    return apply_revision(agent, env, sentence, env.runs[-1].index)


def act(
    agent: UtilityAgent,
    history: Sequence[ChatMessage],
    backend: ChatBackend,
    params: CompletionParams,
) -> ChatMessage:
    """Produce this agent's next public message for the shared conversation."""
    if not history:
        raise ValueError("history must be non-empty")
    if history[0].role != "system" or history[0].content != agent.system_prompt:
        raise ValueError("history must begin with this agent's system prompt")
    reply = backend.complete(history, params)
    if not reply.content.strip():
        raise BackendError(f"empty reply while acting as {agent.name}")
    return ChatMessage(role="assistant", content=reply.content, author_name=agent.name)


REFLECTION_PROMPT = (
    "You are thinking silently as {name}. "
    "In ONE short sentence, note what you believe or plan after reading:\n{last_public_msg}"
)


def silent_reflection(
    agent: UtilityAgent,
    last_public_msg: str,
    backend: ChatBackend,
    params: CompletionParams,
) -> str | None:
    """Private one-sentence note; never enters the public transcript.

    Returns None (note skipped) on backend failure — reflection is
    best-effort and must not abort an episode.
    """
    if not last_public_msg:
        raise ValueError("last_public_msg must be non-empty")
    prompt = REFLECTION_PROMPT.format(name=agent.name, last_public_msg=last_public_msg)
    try:
        reply = backend.complete([ChatMessage(role="system", content=prompt)], params)
    except BackendError:
        return None
    return first_sentence(reply.content) or None
