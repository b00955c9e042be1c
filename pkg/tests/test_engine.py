from __future__ import annotations

import pytest

from negotiation_gym.agents import UtilityAgent
from negotiation_gym.backends import (
    BackendError,
    ChatBackend,
    ChatMessage,
    ScriptedBackend,
)
from negotiation_gym.config import AgentSpec, OutputVariableSpec, ScenarioConfig
from negotiation_gym.engine import (
    EpisodeFailedError,
    InvalidConfigError,
    SelectorPolicy,
    Transcript,
    check_termination,
    run_episode,
    run_simulation,
    select_next,
    serialize_environment,
)
from negotiation_gym.negotiation import NegotiationInstance, build_negotiation_agents, episode_config

from oracles import concession_playout


def make_config(num_runs=1, max_messages=20, output_variables=(), extras=None) -> ScenarioConfig:
    return ScenarioConfig(
        model_id="scripted",
        name="engine-test",
        agents=(
            AgentSpec(name="A", prompt="You are A."),
            AgentSpec(name="B", prompt="You are B."),
        ),
        termination_condition="STOP_NEGOTIATION",
        output_variables=tuple(output_variables),
        num_runs=num_runs,
        max_messages=max_messages,
        extras=extras or {},
    )


def make_agents(self_improve_a=False):
    return [
        UtilityAgent(name="A", base_prompt="You are A.", self_improve=self_improve_a),
        UtilityAgent(name="B", base_prompt="You are B."),
    ]


def chatter_backend():
    """Two agents that never terminate on their own."""
    return ScriptedBackend.from_rules(
        [
            (lambda h: "ONE new strategy sentence" in h[-1].content, "Vary the opening angle."),
        ],
        default_response=lambda h: f"Message {sum(1 for m in h if m.role != 'system') + 1}.",
    )


def transcript_of(*contents: str) -> Transcript:
    transcript = Transcript()
    for index, content in enumerate(contents):
        transcript.append("A" if index % 2 == 0 else "B", content)
    return transcript


class RecordingBackend(ChatBackend):
    def __init__(self, inner: ChatBackend):
        self.inner = inner
        self.histories: list[tuple[ChatMessage, ...]] = []

    def complete(self, history, params):
        self.histories.append(tuple(history))
        return self.inner.complete(history, params)


class FailOnceBackend(ChatBackend):
    """Fails the first acting call, then behaves."""

    def __init__(self):
        self.failed = False

    def complete(self, history, params):
        if not self.failed:
            self.failed = True
            raise BackendError("injected mid-episode failure")
        return ChatMessage(role="assistant", content="Fine. STOP_NEGOTIATION")


# --- selection ----------------------------------------------------------

def test_round_robin_selection():
    agents = make_agents()
    policy = SelectorPolicy(kind="round_robin", order=("A", "B"))
    assert select_next(policy, Transcript(), agents) == "A"
    assert select_next(policy, transcript_of("x", "y", "z"), agents) == "B"  # 3 mod 2


def test_model_based_selection(params):
    agents = make_agents()
    policy = SelectorPolicy(kind="model_based")
    backend = ScriptedBackend.from_rules([], default_response="B")
    assert select_next(policy, Transcript(), agents, backend, params) == "B"


def test_model_based_falls_back_after_two_bad_replies(params):
    agents = make_agents()
    policy = SelectorPolicy(kind="model_based")
    backend = ScriptedBackend.from_rules([], default_response="Zebra")
    warnings = []
    pick = select_next(policy, Transcript(), agents, backend, params, warnings.append)
    assert pick == "A"  # empty transcript round-robin fallback
    assert len(warnings) == 1 and warnings[0].type == "warning"


def test_select_requires_agents():
    with pytest.raises(ValueError):
        select_next(SelectorPolicy(), Transcript(), [])


# --- termination --------------------------------------------------------

def test_marker_termination():
    config = make_config()
    transcript = transcript_of("hello", "Great. STOP_NEGOTIATION")
    outcome = check_termination(config, transcript)
    assert outcome.reason == "marker"
    assert outcome.triggering_turn == 2
    assert outcome.marker_token == "STOP_NEGOTIATION"


def test_cap_termination():
    config = make_config(max_messages=20)
    transcript = transcript_of(*["talk"] * 20)
    outcome = check_termination(config, transcript)
    assert outcome.reason == "max_messages"
    assert outcome.triggering_turn == 20


def test_no_termination_yet():
    config = make_config(max_messages=20)
    assert check_termination(config, transcript_of(*["talk"] * 5)) is None


def test_marker_wins_over_cap_on_same_turn():
    config = make_config(max_messages=2)
    transcript = transcript_of("a", "done STOP_NEGOTIATION")
    assert check_termination(config, transcript).reason == "marker"


# --- episodes -----------------------------------------------------------

def test_episode_matches_concession_oracle(scripted_backend):
    instance = NegotiationInstance(ask=1200, floor=1000, budget=1100, seed=1)
    expected = concession_playout(1200, 1000, 1100, max_messages=40)
    agents = build_negotiation_agents(instance)
    record = run_episode(episode_config("scripted", 40, instance), agents, scripted_backend, seed=1)
    assert record.transcript == expected.transcript
    assert record.termination_reason == "marker"
    assert len(record.transcript) == expected.turns
    assert record.extracted["final_price"].number == expected.price
    assert record.extracted["deal_reached"].boolean is True

    again = run_episode(episode_config("scripted", 40, instance), build_negotiation_agents(instance), scripted_backend, seed=1)
    assert again.transcript == record.transcript


def test_episode_cap_before_crossing(scripted_backend):
    instance = NegotiationInstance(ask=1200, floor=1000, budget=1100, seed=1)
    agents = build_negotiation_agents(instance)
    record = run_episode(episode_config("scripted", 4, instance), agents, scripted_backend, seed=1)
    assert record.termination_reason == "max_messages"
    assert len(record.transcript) == 4
    assert record.extracted["deal_reached"].boolean is False
    assert record.utilities == {"Buyer": 0.0, "Seller": 0.0}


def test_episode_hits_cap_exactly():
    config = make_config(max_messages=20)
    record = run_episode(config, make_agents(), chatter_backend())
    assert len(record.transcript) == 20
    assert record.termination_reason == "max_messages"


def test_failed_episode_keeps_partial_transcript():
    config = make_config(max_messages=6)
    record = run_episode(config, make_agents(), FailOnceBackend())
    assert record.failed is True
    assert record.error == "injected mid-episode failure"
    assert record.transcript == ()
    assert record.utilities == {}


def test_extraction_failure_zeroes_utilities():
    config = make_config(
        max_messages=4,
        output_variables=[OutputVariableSpec(name="x", type="Number", description="")],
    )
    record = run_episode(config, make_agents(), chatter_backend())
    assert record.extraction_failed is True
    assert record.utilities == {"A": 0.0, "B": 0.0}


def test_reflection_disabled_by_default(scripted_backend):
    instance = NegotiationInstance(ask=1200, floor=1000, budget=1100, seed=1)
    record = run_episode(episode_config("scripted", 6, instance), build_negotiation_agents(instance), scripted_backend)
    assert record.private_notes == {}


def test_reflection_notes_stay_private(scripted_backend):
    instance = NegotiationInstance(ask=1200, floor=1000, budget=1100, seed=1)
    record = run_episode(
        episode_config("scripted", 6, instance),
        build_negotiation_agents(instance),
        scripted_backend,
        enable_reflection=True,
    )
    note = "I believe the counterpart will concede soon."
    assert note in record.private_notes["Buyer"]
    assert note in record.private_notes["Seller"]
    assert all(note not in content for _, content in record.transcript)


# --- simulations --------------------------------------------------------

def test_simulation_requires_valid_config():
    config = make_config(num_runs=0)
    with pytest.raises(InvalidConfigError):
        run_simulation(config, make_agents(), chatter_backend())


def test_simulation_prompts_unchanged_without_self_improve():
    config = make_config(num_runs=10, max_messages=4)
    agents = make_agents()
    env = run_simulation(config, agents, chatter_backend(), seed=3)
    assert len(env.runs) == 10
    assert agents[0].system_prompt == "You are A."
    assert agents[1].system_prompt == "You are B."
    assert env.revisions == []


def test_simulation_one_revision_per_episode(scripted_backend):
    config = make_config(num_runs=3, max_messages=4)
    agents = make_agents(self_improve_a=True)
    env = run_simulation(config, agents, scripted_backend, seed=3)
    assert len(agents[0].strategy_log) == 3
    assert len(set(agents[0].strategy_log)) == 3
    assert [rev.agent_name for rev in env.revisions] == ["A", "A", "A"]
    assert agents[1].strategy_log == []


def test_single_run_records_trailing_revision(scripted_backend):
    config = make_config(num_runs=1, max_messages=4)
    agents = make_agents(self_improve_a=True)
    env = run_simulation(config, agents, scripted_backend, seed=3)
    assert len(env.runs) == 1
    assert len(env.revisions) == 1
    assert env.revisions[0].episode_index == 0


def test_simulation_determinism_and_chronology():
    config = make_config(num_runs=4, max_messages=6)
    first = run_simulation(config, make_agents(True), chatter_backend(), seed=11, clock=lambda: 0.0)
    second = run_simulation(config, make_agents(True), chatter_backend(), seed=11, clock=lambda: 0.0)
    assert serialize_environment(first) == serialize_environment(second)
    assert [record.index for record in first.runs] == [0, 1, 2, 3]


def test_revision_timing_prompts_apply_next_episode(scripted_backend):
    config = make_config(num_runs=3, max_messages=4)
    agents = make_agents(self_improve_a=True)
    recorder = RecordingBackend(scripted_backend)
    env = run_simulation(config, agents, recorder, seed=3)

    prompts_seen = []
    for history in recorder.histories:
        system = history[0]
        if system.role == "system" and system.content.startswith("You are A."):
            if system.content not in prompts_seen:
                prompts_seen.append(system.content)
    # One distinct prompt per episode: base, then base plus each revision.
    sentences = [rev.strategy_sentence for rev in env.revisions]
    assert len(prompts_seen) == 3
    assert prompts_seen[0] == "You are A."
    assert sentences[0] in prompts_seen[1] and sentences[1] not in prompts_seen[1]
    assert sentences[0] in prompts_seen[2] and sentences[1] in prompts_seen[2]


def test_privacy_strategy_values_never_said():
    config = make_config(num_runs=2, max_messages=8)
    agents = [
        UtilityAgent(name="A", base_prompt="You are A.", strategy={"secret_limit": 777777}),
        UtilityAgent(name="B", base_prompt="You are B.", strategy={"code_word": "swordfish"}),
    ]
    env = run_simulation(config, agents, chatter_backend(), seed=5)
    for record in env.runs:
        for _, content in record.transcript:
            assert "777777" not in content
            assert "swordfish" not in content


def test_episode_failure_continues_job():
    config = make_config(num_runs=2, max_messages=4)
    env = run_simulation(config, make_agents(), FailOnceBackend(), seed=1)
    assert len(env.runs) == 2
    assert env.runs[0].failed is True
    assert env.runs[1].failed is False


def test_abort_on_episode_failure_flag():
    config = make_config(num_runs=2, max_messages=4, extras={"abort_job_on_episode_failure": True})
    with pytest.raises(EpisodeFailedError):
        run_simulation(config, make_agents(), FailOnceBackend(), seed=1)


def test_selector_order_must_be_permutation():
    agents = make_agents()
    policy = SelectorPolicy(kind="round_robin", order=("A", "C"))
    with pytest.raises(ValueError, match="permutation"):
        select_next(policy, Transcript(), agents)


def test_environment_serialization_golden(scripted_backend):
    from pathlib import Path

    from negotiation_gym.config import ScenarioConfig, AgentSpec
    from negotiation_gym.negotiation import (
        NegotiationInstance,
        OUTPUT_VARIABLES,
        build_negotiation_agents,
    )

    instance = NegotiationInstance(ask=1200, floor=1000, budget=1100, seed=5)
    buyer, seller = build_negotiation_agents(instance)
    buyer.self_improve = True
    config = ScenarioConfig(
        model_id="scripted",
        name="environment-golden",
        agents=(AgentSpec(name="Buyer", prompt=""), AgentSpec(name="Seller", prompt="")),
        termination_condition="STOP_NEGOTIATION",
        output_variables=OUTPUT_VARIABLES,
        num_runs=2,
        max_messages=40,
    )
    env = run_simulation(config, [buyer, seller], scripted_backend, seed=5)
    golden = Path(__file__).resolve().parent / "fixtures" / "environment_golden.json"
    assert serialize_environment(env) == golden.read_text(encoding="utf-8")


def test_events_sequence(scripted_backend):
    config = make_config(num_runs=2, max_messages=4)
    events = []
    run_simulation(config, make_agents(self_improve_a=True), scripted_backend, seed=1, on_event=events.append)
    assert [event.type for event in events] == ["episode", "revision", "episode", "revision"]
    assert [event.data["index"] for event in events if event.type == "episode"] == [0, 1]
