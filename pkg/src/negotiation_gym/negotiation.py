"""Buyer-seller negotiation case study.

Instances are sampled as (ask, floor, budget) triples: the seller's public
asking price, the seller's private minimum, and the buyer's private
maximum. Utilities are normalized against those private bounds; surplus
shares split the ask-floor gap and sum to one on any deal. A negotiation
coach reads a finished transcript plus the coached agent's utility and
appends exactly one new strategy sentence to that agent's prompt.

The experiment harness runs the four coaching modes (neither agent, buyer
only, seller only, both) over seeded instance sequences; the same seed
yields the same instances in every mode so modes stay comparable.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Sequence

from . import metrics
from .agents import (
    DEFAULT_BINDING,
    Environment,
    EpisodeRecord,
    UtilityAgent,
    UtilityBinding,
    UtilityError,
    apply_revision,
    first_sentence,
    render_transcript,
)
from .backends import BackendError, ChatBackend, ChatMessage, CompletionParams
from .config import AgentSpec, OutputVariableSpec, ScenarioConfig
from .engine import EngineEvent, EventSink, run_episode

DEAL_MARKER = "Yes, deal!"
TERMINATION_MARKER = "STOP_NEGOTIATION"

ASK_LOW, ASK_HIGH = 900.0, 1400.0
FLOOR_GAP_LOW, FLOOR_GAP_HIGH = 100.0, 300.0
BUDGET_MARGIN = 50.0


@dataclass(frozen=True)
class NegotiationInstance:
    ask: float
    floor: float
    budget: float
    seed: int

    def __post_init__(self):
        if not ASK_LOW <= self.ask <= ASK_HIGH:
            raise ValueError(f"ask {self.ask} outside [{ASK_LOW}, {ASK_HIGH}]")
        if not self.ask - FLOOR_GAP_HIGH <= self.floor <= self.ask - FLOOR_GAP_LOW:
            raise ValueError(f"floor {self.floor} outside [ask-300, ask-100]")
        if not self.floor + BUDGET_MARGIN <= self.budget <= self.ask - BUDGET_MARGIN:
            raise ValueError(f"budget {self.budget} outside [floor+50, ask-50]")


@dataclass(frozen=True)
class DealOutcome:
    deal_reached: bool
    price: float | None
    turns_used: int
    instance: NegotiationInstance
    # Rationality violations (price outside [floor, budget]) are flagged,
    # never rejected: model agents are allowed to negotiate badly.
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.deal_reached and self.price is None:
            raise ValueError("a reached deal must carry a price")


class ReflectMode(str, Enum):
    NO_REFLECT = "no_reflect"
    BUYER_REFLECT = "buyer_reflect"
    SELLER_REFLECT = "seller_reflect"
    BOTH_REFLECT = "both_reflect"

    def coaches(self, agent_name: str) -> bool:
        if agent_name == "Buyer":
            return self in (ReflectMode.BUYER_REFLECT, ReflectMode.BOTH_REFLECT)
        if agent_name == "Seller":
            return self in (ReflectMode.SELLER_REFLECT, ReflectMode.BOTH_REFLECT)
        return False


def parse_mode(value: str) -> ReflectMode:
    try:
        return ReflectMode(value)
    except ValueError:
        known = ", ".join(mode.value for mode in ReflectMode)
        raise ValueError(f"unknown reflect mode {value!r}; expected one of {known}") from None


@dataclass
class ExperimentResult:
    mode: ReflectMode
    max_turns: int
    outcomes: list[DealOutcome]
    buyer_utils: list[float]
    seller_utils: list[float]
    no_deal_count: int
    aggregates: metrics.MetricsBundle | None = None
    environment: Environment = field(default_factory=Environment)


def sample_instance(rng: random.Random) -> NegotiationInstance:
    """Draw one (ask, floor, budget) triple, rounded to whole USD.

    ask ~ U(900, 1400); floor = ask - U(100, 300); budget ~ U(floor+50,
    ask-50). Rounding happens against integer endpoints, so the box
    invariants survive it. Each instance records its own sub-seed for
    replay.
    """
    seed = rng.randrange(2**32)
    sub = random.Random(seed)
    ask = float(round(sub.uniform(ASK_LOW, ASK_HIGH)))
    floor = ask - float(round(sub.uniform(FLOOR_GAP_LOW, FLOOR_GAP_HIGH)))
    budget = float(round(sub.uniform(floor + BUDGET_MARGIN, ask - BUDGET_MARGIN)))
    return NegotiationInstance(ask=ask, floor=floor, budget=budget, seed=seed)


def buyer_utility(instance: NegotiationInstance, outcome: DealOutcome) -> float:
    """(budget - price) / budget on a deal; zero on no-deal."""
    if not outcome.deal_reached:
        return 0.0
    return (instance.budget - outcome.price) / instance.budget


def seller_utility(instance: NegotiationInstance, outcome: DealOutcome) -> float:
    """(price - floor) / (ask - floor) on a deal; zero on no-deal."""
    if not outcome.deal_reached:
        return 0.0
    return (outcome.price - instance.floor) / (instance.ask - instance.floor)


def surplus_shares(instance: NegotiationInstance, outcome: DealOutcome) -> tuple[float, float]:
    """Split of the ask-floor surplus; (0, 0) when no deal was reached."""
    if not outcome.deal_reached:
        return 0.0, 0.0
    gap = instance.ask - instance.floor
    return (instance.ask - outcome.price) / gap, (outcome.price - instance.floor) / gap


def utility_tag(utility: float) -> str:
    """Coarse label for the coach prompt: loss / poor / fair / great."""
    if utility <= 0.0:
        return "loss"
    if utility < 0.3:
        return "poor"
    if utility < 0.7:
        return "fair"
    return "great"


# --- utility registry ---------------------------------------------------

def _usd(value: float) -> str:
    return str(int(value)) if float(value) == int(value) else str(value)


def _strategy_number(strategy: Mapping[str, Any], keys: Sequence[str]) -> float | None:
    for key in keys:
        value = strategy.get(key)
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    return None


def _extracted_deal(record: EpisodeRecord) -> tuple[bool, float | None]:
    deal = record.extracted.get("deal_reached")
    if deal is None:
        raise UtilityError("missing extracted variable: deal_reached", variable="deal_reached")
    if not deal.boolean:
        return False, None
    price = record.extracted.get("final_price")
    if price is None:
        raise UtilityError("missing extracted variable: final_price", variable="final_price")
    return True, price.number


def _buyer_binding_fn(strategy: Mapping[str, Any], record: EpisodeRecord) -> float:
    budget = _strategy_number(strategy, ("budget", "max_price"))
    if budget is None:
        raise UtilityError("buyer utility needs a 'budget' (or 'max_price') strategy value")
    deal, price = _extracted_deal(record)
    if not deal:
        return 0.0
    return (budget - price) / budget


def _seller_binding_fn(strategy: Mapping[str, Any], record: EpisodeRecord) -> float:
    ask = _strategy_number(strategy, ("ask", "asking_price", "target_price"))
    if ask is None:
        raise UtilityError("seller utility needs an 'ask' (or 'target_price') strategy value")
    # A missing floor degrades to 0: utility becomes the realized share of ask.
    floor = _strategy_number(strategy, ("floor",)) or 0.0
    if ask <= floor:
        raise UtilityError("seller utility needs ask > floor")
    deal, price = _extracted_deal(record)
    if not deal:
        return 0.0
    return (price - floor) / (ask - floor)


BUYER_BINDING = UtilityBinding(name="BuyerAgent", fn=_buyer_binding_fn)
SELLER_BINDING = UtilityBinding(name="SellerAgent", fn=_seller_binding_fn)

DEFAULT_REGISTRY: Mapping[str, UtilityBinding] = {
    "BuyerAgent": BUYER_BINDING,
    "SellerAgent": SELLER_BINDING,
    "Default": DEFAULT_BINDING,
}


# --- coaching -----------------------------------------------------------

COACH_PROMPT_TEMPLATE = (
    "You are a seasoned negotiation coach.\n"
    "Previous strategies:\n- {previous}\n"
    "Analyse the transcript and devise exactly ONE new negotiation strategy "
    "sentence the {name} could apply in a *future* negotiation to get a better price.\n"
    "If neither party uttered 'Yes, deal!', that means no deal was reached. "
    "In that case, focus on how to reach a good deal faster next time.\n"
    "Start with an action verb and do NOT duplicate prior strategies. "
    "Do NOT mention specific prices, names or budgets from the dialogue.\n"
    "{private_constraints}\n."
    "The {name}'s normalised utility for this deal was {utility:.2f} ({tag}).\n"
    "- If utility was 'loss' or 'poor', focus on improvement. "
    "- If 'great', suggest how to replicate or slightly enhance success. \n"
    "Include one recognised negotiation tactic (e.g., anchoring, mirroring, time-pressure) "
    "that fits what you observed in the transcript."
    "Think step-by-step and return ONLY that single negotiation strategy sentence.\n"
    "\nTranscript:\n{transcript}"
)

# Digits in a price-like position: currency-marked amounts or bare numbers
# of three or more digits (every price in this domain has at least three).
_PRICE_MENTION_RE = re.compile(
    r"[$€£]\s*\d"
    r"|\d\s*(?:usd|eur|gbp|euros?|dollars?)\b"
    r"|\b\d{3,}(?:\.\d+)?\b",
    re.IGNORECASE,
)


def mentions_price(sentence: str) -> bool:
    return _PRICE_MENTION_RE.search(sentence) is not None


def render_private_constraints(agent: UtilityAgent) -> str:
    if not agent.strategy:
        return f"The {agent.name} has no recorded private constraints."
    parts = ", ".join(
        f"{key} {_usd(value)} USD" if isinstance(value, (int, float)) and not isinstance(value, bool)
        else f"{key} {value}"
        for key, value in agent.strategy.items()
    )
    return f"Private constraints of the {agent.name}: {parts}."


def render_coach_prompt(
    agent: UtilityAgent,
    episode: EpisodeRecord,
    env: Environment,
    header: str | None = None,
) -> str:
    previous = "\n- ".join(env.agent_strategies.get(agent.name, []))
    utility = episode.utilities.get(agent.name, 0.0)
    prompt = COACH_PROMPT_TEMPLATE.format(
        previous=previous,
        name=agent.name,
        private_constraints=render_private_constraints(agent),
        utility=utility,
        tag=utility_tag(utility),
        transcript=render_transcript(episode.transcript),
    )
    if header:
        # A configured optimization prompt replaces the opening instruction line.
        prompt = prompt.replace("You are a seasoned negotiation coach.", header.rstrip("\n"), 1)
    return prompt


def _acceptable_sentence(agent: UtilityAgent, sentence: str) -> str | None:
    """None when usable; otherwise the reason for the re-ask."""
    if not sentence:
        return "empty reply"
    if sentence in agent.strategy_log:
        return "duplicate strategy"
    if mentions_price(sentence):
        return "mentions a specific price"
    return None


def coach_strategy(
    agent: UtilityAgent,
    episode: EpisodeRecord,
    env: Environment,
    backend: ChatBackend,
    config: ScenarioConfig | None = None,
    *,
    params: CompletionParams,
) -> str | None:
    """One coaching round: returns the appended sentence, or None if skipped.

    The coach sees the latest transcript, the agent's own private
    constraints, its utility with a coarse tag, and every strategy
    suggested so far. Replies that are empty, duplicated, or mention a
    specific price get exactly one corrective re-ask before the round is
    skipped.
    """
    header = config.optimization_prompt if config is not None else None
    prompt = render_coach_prompt(agent, episode, env, header)
    history = [ChatMessage(role="system", content=prompt)]
    reply = backend.complete(history, params)
    sentence = first_sentence(reply.content)
    reason = _acceptable_sentence(agent, sentence)
    if reason is not None:
        history += [
            reply,
            ChatMessage(
                role="user",
                content=(
                    f"Rejected ({reason}). Provide ONE different strategy sentence with no "
                    "specific prices, names or budgets."
                ),
            ),
        ]
        reply = backend.complete(history, params)
        sentence = first_sentence(reply.content)
        if _acceptable_sentence(agent, sentence) is not None:
            return None
    apply_revision(agent, env, sentence, episode.index)
    return sentence


# --- experiment harness -------------------------------------------------

BUYER_PROMPT_TEMPLATE = (
    "You are the Buyer negotiating the purchase of a used laptop. "
    "The seller's public asking price is {ask} USD. "
    "Your private budget is {budget} USD; never reveal it and never pay more. "
    "Negotiate the lowest price you can, one concise message per turn. "
    f"To accept an offer say '{DEAL_MARKER}' and include {TERMINATION_MARKER}."
)

SELLER_PROMPT_TEMPLATE = (
    "You are the Seller negotiating the sale of a used laptop. "
    "Your public asking price is {ask} USD. "
    "Your private floor is {floor} USD; never reveal it and never accept less. "
    "Negotiate the highest price you can, one concise message per turn. "
    f"To accept an offer say '{DEAL_MARKER}' and include {TERMINATION_MARKER}."
)

OUTPUT_VARIABLES = (
    OutputVariableSpec(
        name="final_price", type="Number", description="The agreed-upon final price", optional=True
    ),
    OutputVariableSpec(
        name="deal_reached", type="Boolean", description="Whether a deal was reached"
    ),
)


def build_negotiation_agents(
    instance: NegotiationInstance, strategies: Mapping[str, Sequence[str]] | None = None
) -> tuple[UtilityAgent, UtilityAgent]:
    """Fresh Buyer/Seller agents for one instance.

    The asking price is public (embedded in both prompts); the floor and
    budget stay private to their owners. Learned strategy sentences carry
    over between negotiations via ``strategies``.
    """
    strategies = strategies or {}

    def buyer_fn(strategy: Mapping[str, Any], record: EpisodeRecord) -> float:
        return buyer_utility(instance, outcome_from_record(instance, record))

    def seller_fn(strategy: Mapping[str, Any], record: EpisodeRecord) -> float:
        return seller_utility(instance, outcome_from_record(instance, record))

    buyer = UtilityAgent(
        name="Buyer",
        base_prompt=BUYER_PROMPT_TEMPLATE.format(ask=_usd(instance.ask), budget=_usd(instance.budget)),
        description="Wants the laptop for the lowest possible price",
        strategy={"budget": instance.budget},
        utility_binding=UtilityBinding(name="BuyerAgent", fn=buyer_fn),
        strategy_log=strategies.get("Buyer", ()),
    )
    seller = UtilityAgent(
        name="Seller",
        base_prompt=SELLER_PROMPT_TEMPLATE.format(ask=_usd(instance.ask), floor=_usd(instance.floor)),
        description="Selling a laptop for the highest possible price",
        strategy={"floor": instance.floor},
        utility_binding=UtilityBinding(name="SellerAgent", fn=seller_fn),
        strategy_log=strategies.get("Seller", ()),
    )
    return buyer, seller


def episode_config(model_id: str, max_turns: int, instance: NegotiationInstance) -> ScenarioConfig:
    """Engine config for one negotiation; agents never see max_turns."""
    return ScenarioConfig(
        model_id=model_id,
        name=f"negotiation-{instance.seed}",
        agents=(
            AgentSpec(name="Buyer", prompt=""),
            AgentSpec(name="Seller", prompt=""),
        ),
        termination_condition=TERMINATION_MARKER,
        output_variables=OUTPUT_VARIABLES,
        num_runs=1,
        max_messages=max_turns,
    )


def outcome_from_record(instance: NegotiationInstance, record: EpisodeRecord) -> DealOutcome:
    """Deal status from the extracted variables; anything ambiguous is a no-deal."""
    deal = False
    price: float | None = None
    extracted_deal = record.extracted.get("deal_reached")
    if not record.failed and not record.extraction_failed and extracted_deal is not None:
        deal = bool(extracted_deal.boolean)
    if deal:
        extracted_price = record.extracted.get("final_price")
        price = extracted_price.number if extracted_price is not None else None
        if price is None:
            deal = False
    flags: list[str] = []
    if deal:
        if price > instance.budget:
            flags.append("price_above_budget")
        if price < instance.floor:
            flags.append("price_below_floor")
    return DealOutcome(
        deal_reached=deal,
        price=price,
        turns_used=len(record.transcript),
        instance=instance,
        flags=tuple(flags),
    )


def run_experiment(
    mode: ReflectMode,
    n: int,
    max_turns: int,
    seed: int | None,
    backend: ChatBackend,
    *,
    model_id: str = "scripted",
    temperature: float = 0.7,
    on_event: EventSink | None = None,
) -> ExperimentResult:
    """Run n seeded negotiations under one coaching mode.

    Per negotiation: sample an instance, build fresh agents carrying any
    learned strategies, run one episode, score it, then coach whichever
    agents the mode covers. Fully deterministic with a scripted backend
    and a fixed seed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if max_turns < 2:
        raise ValueError("max_turns must be >= 2")
    rng = random.Random(seed)
    env = Environment()
    result = ExperimentResult(
        mode=mode, max_turns=max_turns, outcomes=[], buyer_utils=[], seller_utils=[],
        no_deal_count=0, environment=env,
    )
    coach_params = CompletionParams(model_id=model_id, temperature=temperature)

    for index in range(n):
        instance = sample_instance(rng)
        buyer, seller = build_negotiation_agents(instance, env.agent_strategies)
        config = episode_config(model_id, max_turns, instance)
        record = run_episode(
            config,
            (buyer, seller),
            backend,
            seed=instance.seed,
            episode_index=index,
            temperature=temperature,
            on_event=on_event,
        )
        env.append_run(record)
        outcome = outcome_from_record(instance, record)
        result.outcomes.append(outcome)
        result.buyer_utils.append(buyer_utility(instance, outcome))
        result.seller_utils.append(seller_utility(instance, outcome))
        if not outcome.deal_reached:
            result.no_deal_count += 1
        if on_event is not None:
            on_event(
                EngineEvent(
                    type="episode",
                    data={
                        "index": index,
                        "mode": mode.value,
                        "deal_reached": outcome.deal_reached,
                        "price": outcome.price,
                        "turns_used": outcome.turns_used,
                    },
                )
            )
        for agent in (buyer, seller):
            if not mode.coaches(agent.name):
                continue
            try:
                sentence = coach_strategy(agent, record, env, backend, params=coach_params)
            except BackendError:
                sentence = None
            if sentence and on_event is not None:
                on_event(
                    EngineEvent(
                        type="revision",
                        data={"agent": agent.name, "episode_index": index, "sentence": sentence},
                    )
                )

    result.aggregates = metrics.aggregate(result)
    return result


def run_all_modes(
    n: int,
    max_turns: int,
    seed: int | None,
    backend: ChatBackend,
    *,
    model_id: str = "scripted",
    temperature: float = 0.7,
    on_event: EventSink | None = None,
) -> dict[ReflectMode, ExperimentResult]:
    """All four modes over the same seeded instance sequence."""
    return {
        mode: run_experiment(
            mode, n, max_turns, seed, backend,
            model_id=model_id, temperature=temperature, on_event=on_event,
        )
        for mode in ReflectMode
    }


# --- result documents ---------------------------------------------------

ROW_COLUMNS = (
    "idx", "ask", "floor", "budget", "deal", "price", "turns",
    "u_buyer", "u_seller", "buyer_ss", "seller_ss",
)


def experiment_rows(result: ExperimentResult) -> list[dict[str, Any]]:
    rows = []
    for idx, outcome in enumerate(result.outcomes):
        instance = outcome.instance
        buyer_ss, seller_ss = surplus_shares(instance, outcome)
        rows.append(
            {
                "idx": idx,
                "ask": instance.ask,
                "floor": instance.floor,
                "budget": instance.budget,
                "deal": outcome.deal_reached,
                "price": outcome.price,
                "turns": outcome.turns_used,
                "u_buyer": result.buyer_utils[idx],
                "u_seller": result.seller_utils[idx],
                "buyer_ss": buyer_ss,
                "seller_ss": seller_ss,
            }
        )
    return rows


def rows_to_csv(result: ExperimentResult) -> str:
    def cell(value: Any) -> str:
        if value is None:
            return ""
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, float):
            return _usd(value) if value == int(value) else f"{value:.6f}"
        return str(value)

    lines = [",".join(ROW_COLUMNS)]
    for row in experiment_rows(result):
        lines.append(",".join(cell(row[column]) for column in ROW_COLUMNS))
    return "\n".join(lines) + "\n"


def result_to_document(result: ExperimentResult) -> dict[str, Any]:
    return {
        "mode": result.mode.value,
        "max_turns": result.max_turns,
        "rows": experiment_rows(result),
        "no_deal_count": result.no_deal_count,
        "agent_strategies": {
            name: list(items) for name, items in result.environment.agent_strategies.items()
        },
    }


def serialize_result(result: ExperimentResult) -> str:
    return json.dumps(result_to_document(result), indent=2, ensure_ascii=False)


@dataclass(frozen=True)
class ExperimentSpec:
    """The optional {"experiment": ...} block of a job config."""

    mode: str  # a ReflectMode value or "all"
    n: int
    max_turns: int
    seed: int | None = None


def experiment_spec_from_config(config: ScenarioConfig) -> ExperimentSpec | None:
    block = config.extras.get("experiment")
    if block is None:
        return None
    if not isinstance(block, dict):
        raise ValueError("experiment block must be an object")
    mode = block.get("mode", "all")
    if mode != "all":
        parse_mode(mode)
    return ExperimentSpec(
        mode=mode,
        n=int(block.get("n", 20)),
        max_turns=int(block.get("max_turns", 20)),
        seed=block.get("seed"),
    )
