from __future__ import annotations

import pytest

from negotiation_gym.agents import (
    DEFAULT_BINDING,
    Environment,
    EpisodeRecord,
    UtilityAgent,
    UtilityError,
    act,
    build_revision_prompt,
    compute_utility,
    first_sentence,
    learn_from_feedback,
    silent_reflection,
)
from negotiation_gym.backends import (
    BackendError,
    ChatBackend,
    ChatMessage,
    CompletionParams,
    ScriptedBackend,
)
from negotiation_gym.extraction import TypedValue
from negotiation_gym.negotiation import BUYER_BINDING


def make_record(index: int, *, utilities=None, transcript=(), extracted=None) -> EpisodeRecord:
    return EpisodeRecord(
        index=index,
        transcript=tuple(transcript),
        extracted=extracted or {},
        utilities=utilities or {},
        termination_reason="marker",
        wall_time=0.0,
        completion_params_used=CompletionParams(model_id="scripted"),
    )


def env_with_runs(count: int, agent_name: str = "Buyer") -> Environment:
    env = Environment()
    for index in range(count):
        env.append_run(
            make_record(
                index,
                utilities={agent_name: index / 10},
                transcript=(("Buyer", f"offer {index}"), ("Seller", "counter")),
            )
        )
    return env


class ExplodingBackend(ChatBackend):
    def complete(self, history, params):
        raise BackendError("injected failure")


def test_default_binding_returns_zero():
    agent = UtilityAgent(name="A", base_prompt="p", utility_binding=DEFAULT_BINDING)
    env = env_with_runs(3, "A")
    assert compute_utility(agent, env) == 0.0


def test_compute_utility_needs_runs():
    agent = UtilityAgent(name="A", base_prompt="p")
    with pytest.raises(ValueError, match="no finished runs"):
        compute_utility(agent, Environment())


def test_buyer_binding_formula():
    agent = UtilityAgent(
        name="Buyer", base_prompt="p", strategy={"budget": 1000}, utility_binding=BUYER_BINDING
    )
    env = Environment()
    env.append_run(
        make_record(
            0,
            extracted={
                "final_price": TypedValue.of_number(900),
                "deal_reached": TypedValue.of_boolean(True),
            },
        )
    )
    assert compute_utility(agent, env) == pytest.approx(0.1)


def test_buyer_binding_no_deal_is_zero():
    agent = UtilityAgent(
        name="Buyer", base_prompt="p", strategy={"budget": 1000}, utility_binding=BUYER_BINDING
    )
    env = Environment()
    env.append_run(make_record(0, extracted={"deal_reached": TypedValue.of_boolean(False)}))
    assert compute_utility(agent, env) == 0.0


def test_binding_error_names_missing_variable():
    agent = UtilityAgent(
        name="Buyer", base_prompt="p", strategy={"budget": 1000}, utility_binding=BUYER_BINDING
    )
    env = Environment()
    env.append_run(make_record(0))
    with pytest.raises(UtilityError) as excinfo:
        compute_utility(agent, env)
    assert excinfo.value.variable == "deal_reached"


def test_learn_from_feedback_appends_sentence(params):
    agent = UtilityAgent(name="Buyer", base_prompt="Base prompt.", self_improve=True)
    env = env_with_runs(1)
    backend = ScriptedBackend.from_rules([], default_response="Anchor high before conceding.")
    revision = learn_from_feedback(agent, env, backend, params=params)
    assert revision is not None
    assert agent.strategy_log == ["Anchor high before conceding."]
    assert agent.system_prompt.startswith("Base prompt.")
    assert agent.system_prompt.endswith("- Anchor high before conceding.")
    assert env.agent_strategies["Buyer"] == ["Anchor high before conceding."]
    assert env.revisions == [revision]
    assert revision.old_prompt == "Base prompt."
    assert revision.new_prompt == agent.system_prompt


def test_learn_from_feedback_requires_self_improve(params):
    agent = UtilityAgent(name="Buyer", base_prompt="p", self_improve=False)
    backend = ScriptedBackend.from_rules([])
    with pytest.raises(ValueError, match="self_improve"):
        learn_from_feedback(agent, env_with_runs(1), backend, params=params)


def test_revision_prompt_holds_last_ten_episodes():
    agent = UtilityAgent(name="Buyer", base_prompt="p", self_improve=True)
    env = env_with_runs(12)
    _, user = build_revision_prompt(agent, env)
    # Episodes are labelled 1-based; 12 runs leave exactly 3..12 in view.
    for label in range(3, 13):
        assert f"Episode {label}:" in user.content
    assert "Episode 1:" not in user.content
    assert "Episode 2:" not in user.content


def test_revision_prompt_honors_custom_header():
    agent = UtilityAgent(name="Buyer", base_prompt="p", self_improve=True)
    system, _ = build_revision_prompt(agent, env_with_runs(1), "Custom coach text.")
    assert system.content == "Custom coach text."


def test_failed_revision_is_atomic(params):
    agent = UtilityAgent(
        name="Buyer", base_prompt="Base.", self_improve=True, strategy_log=["Existing."]
    )
    env = env_with_runs(2)
    env.agent_strategies["Buyer"] = ["Existing."]
    before_prompt = agent.system_prompt
    with pytest.raises(BackendError):
        learn_from_feedback(agent, env, ExplodingBackend(), params=params)
    assert agent.system_prompt == before_prompt
    assert agent.strategy_log == ["Existing."]
    assert env.revisions == []


def test_empty_reply_rejects_revision(params):
    agent = UtilityAgent(name="Buyer", base_prompt="Base.", self_improve=True)
    env = env_with_runs(1)
    backend = ScriptedBackend.from_rules([], default_response="   ")
    assert learn_from_feedback(agent, env, backend, params=params) is None
    assert agent.system_prompt == "Base."
    assert agent.strategy_log == []


def test_duplicate_reply_is_re_asked_then_accepted(params):
    agent = UtilityAgent(
        name="Buyer", base_prompt="Base.", self_improve=True, strategy_log=["Repeat me."]
    )
    env = env_with_runs(1)
    backend = ScriptedBackend.from_rules(
        [
            (lambda h: "differs from all previous" in h[-1].content, "A fresh idea."),
        ],
        default_response="Repeat me.",
    )
    revision = learn_from_feedback(agent, env, backend, params=params)
    assert revision.strategy_sentence == "A fresh idea."
    assert agent.strategy_log == ["Repeat me.", "A fresh idea."]


def test_duplicate_reply_twice_skips(params):
    agent = UtilityAgent(
        name="Buyer", base_prompt="Base.", self_improve=True, strategy_log=["Repeat me."]
    )
    env = env_with_runs(1)
    backend = ScriptedBackend.from_rules([], default_response="Repeat me.")
    assert learn_from_feedback(agent, env, backend, params=params) is None
    assert agent.strategy_log == ["Repeat me."]


def test_prompt_monotonicity(params):
    agent = UtilityAgent(name="Buyer", base_prompt="Base.", self_improve=True)
    env = env_with_runs(1)
    sentences = [f"Strategy number {label}." for label in ("one", "two", "three")]
    for sentence in sentences:
        backend = ScriptedBackend.from_rules([], default_response=sentence)
        learn_from_feedback(agent, env, backend, params=params)
    assert agent.strategy_log == sentences
    prompt = agent.system_prompt
    positions = [prompt.index(s) for s in sentences]
    assert positions == sorted(positions)
    assert prompt.startswith("Base.")


def test_act_scripted_concession_opening(scripted_backend, params):
    # Opening offer is 80% of the private budget read from the prompt.
    agent = UtilityAgent(
        name="Buyer",
        base_prompt="You are the Buyer. Your private budget is 1250 USD; never reveal it.",
        strategy={"budget": 1250},
    )
    history = [
        ChatMessage(role="system", content=agent.system_prompt),
        ChatMessage(role="user", content="Seller: My asking price is 1200 USD."),
    ]
    message = act(agent, history, scripted_backend, params)
    assert message.content == "I offer 1000 USD."
    assert message.author_name == "Buyer"


def test_act_remote_echo_fixture(params):
    import httpx
    from pathlib import Path

    from negotiation_gym.backends import RemoteBackend

    raw = (Path(__file__).resolve().parent / "fixtures" / "wire_response.json").read_bytes()
    backend = RemoteBackend(
        base_url="https://example.test/v1",
        api_key="test-key",
        transport=httpx.MockTransport(lambda request: httpx.Response(200, content=raw)),
        sleep=lambda seconds: None,
    )
    agent = UtilityAgent(name="Seller", base_prompt="You are the Seller.")
    history = [
        ChatMessage(role="system", content=agent.system_prompt),
        ChatMessage(role="user", content="Buyer: what is your price?"),
    ]
    message = act(agent, history, backend, params)
    assert message.content == "1000 USD."
    assert message.author_name == "Seller"


def test_act_preconditions(scripted_backend, params):
    agent = UtilityAgent(name="Buyer", base_prompt="prompt")
    with pytest.raises(ValueError, match="non-empty"):
        act(agent, [], scripted_backend, params)
    wrong = [ChatMessage(role="system", content="someone else's prompt")]
    with pytest.raises(ValueError, match="system prompt"):
        act(agent, wrong, scripted_backend, params)


def test_act_rejects_empty_reply(params):
    agent = UtilityAgent(name="Buyer", base_prompt="prompt")
    backend = ScriptedBackend.from_rules([], default_response="  ")
    history = [ChatMessage(role="system", content="prompt")]
    with pytest.raises(BackendError, match="empty reply"):
        act(agent, history, backend, params)


def test_silent_reflection(scripted_backend, params):
    agent = UtilityAgent(name="Buyer", base_prompt="p")
    note = silent_reflection(agent, "Seller: I can do 1100 USD.", scripted_backend, params)
    assert note == "I believe the counterpart will concede soon."


def test_silent_reflection_skipped_on_backend_failure(params):
    agent = UtilityAgent(name="Buyer", base_prompt="p")
    note = silent_reflection(agent, "last message", ExplodingBackend(), params)
    assert note is None


def test_silent_reflection_requires_message(scripted_backend, params):
    agent = UtilityAgent(name="Buyer", base_prompt="p")
    with pytest.raises(ValueError):
        silent_reflection(agent, "", scripted_backend, params)


def test_first_sentence():
    assert first_sentence("Anchor high. Then concede.") == "Anchor high."
    assert first_sentence("  One thing!  another") == "One thing!"
    assert first_sentence("") == ""
    assert first_sentence("no terminal punctuation") == "no terminal punctuation"
