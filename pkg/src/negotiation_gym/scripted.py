"""Scripted negotiation players for offline runs and oracle tests.

The backend built here behaves like a very literal-minded language model:
each rule reads the conversation it was handed (system prompt included)
and derives its reply arithmetically, so whole simulations are pure
functions of their inputs.

Concession behavior: the buyer opens at 80% of budget and climbs by 5% of
budget per own turn, capping at 97% of budget (a rational player never
utters their true limit). The seller opens at the asking price and drops
by 5% of the ask-floor gap per own turn, never below floor plus 3% of the
gap, accepting as soon as the buyer's standing offer meets the seller's
current demand.
"""

from __future__ import annotations

import json
import math
import re
from typing import Sequence

from .backends import ChatMessage, ScriptedBackend, ScriptedRule

BUYER_OPEN_FRAC = 0.8
BUYER_STEP_FRAC = 0.05
BUYER_CAP_FRAC = 0.97
SELLER_STEP_FRAC = 0.05
SELLER_FLOOR_BUFFER_FRAC = 0.03

# Deterministic coach vocabulary; no sentence mentions a price.
COACH_SENTENCES = (
    "Anchor the conversation early with a confident reference point.",
    "Mirror the counterpart's phrasing to build rapport before conceding.",
    "Apply gentle time pressure by signalling other interested parties.",
    "Probe for the counterpart's constraints with open questions before moving.",
    "Slow your concession rate once the counterpart starts moving toward you.",
    "Label the counterpart's position aloud to encourage reciprocity.",
    "Open with a question instead of a number to gather information first.",
    "Signal flexibility on terms while staying firm on the headline figure.",
    "Summarize agreed points before each counteroffer to lock in progress.",
    "Invoke a neutral standard such as market value to justify your position.",
    "Use silence after an offer to invite the counterpart to bid first.",
    "Trade concessions explicitly so every step requires one in return.",
    "Reframe the discussion around total value rather than a single figure.",
    "Set a deadline for your best offer to accelerate convergence.",
    "Acknowledge the counterpart's concerns before restating your position.",
    "Offer a faster close in exchange for movement on the headline figure.",
)

_BUDGET_RES = (
    re.compile(r"private budget is (\d+)"),
    re.compile(r"absolute maximum is (\d+)", re.IGNORECASE),
    re.compile(r"budget is (\d+)", re.IGNORECASE),
)
_ASK_RES = (
    re.compile(r"asking price is (\d+)", re.IGNORECASE),
    re.compile(r"worth around (\d+)", re.IGNORECASE),
)
_FLOOR_RE = re.compile(r"private floor is (\d+)")
_OFFER_RE = re.compile(r"offer (?:is )?(\d+) USD")
_ACCEPT_RE = re.compile(r"accept your offer of (\d+) USD")

# Without an explicit floor, assume the seller can go a quarter below ask.
_DEFAULT_FLOOR_FRAC = 0.75


def buyer_offer(budget: float, turn: int) -> int:
    """The buyer's turn-th offer (0-based)."""
    cap = round(BUYER_CAP_FRAC * budget)
    return int(min(cap, round(budget * (BUYER_OPEN_FRAC + BUYER_STEP_FRAC * turn))))


def seller_demand(ask: float, floor: float, turn: int) -> int:
    """The seller's turn-th demand (0-based)."""
    gap = ask - floor
    lowest = round(floor + SELLER_FLOOR_BUFFER_FRAC * gap)
    return int(max(lowest, round(ask - SELLER_STEP_FRAC * turn * gap)))


def _first_number(patterns, text: str) -> int | None:
    for pattern in patterns:
        match = pattern.search(text)
        if match:
            return int(match.group(1))
    return None


def _own_turn_count(history: Sequence[ChatMessage]) -> int:
    return sum(1 for msg in history if msg.role == "assistant")


def _latest_offer(history: Sequence[ChatMessage]) -> int | None:
    for msg in reversed(history):
        match = _OFFER_RE.search(msg.content)
        if match:
            return int(match.group(1))
    return None


def _is_buyer(history: Sequence[ChatMessage]) -> bool:
    return bool(re.search(r"\bbuyer\b", history[0].content, re.IGNORECASE))


def _is_seller(history: Sequence[ChatMessage]) -> bool:
    return bool(re.search(r"\bsell", history[0].content, re.IGNORECASE))


def _buyer_reply(history: Sequence[ChatMessage]) -> str:
    budget = _first_number(_BUDGET_RES, history[0].content)
    if budget is None:
        return "I am interested; what is your best price?"
    return f"I offer {buyer_offer(budget, _own_turn_count(history))} USD."


def _seller_reply(history: Sequence[ChatMessage]) -> str:
    system = history[0].content
    ask = _first_number(_ASK_RES, system)
    if ask is None:
        return "Make me an offer."
    floor_match = _FLOOR_RE.search(system)
    floor = int(floor_match.group(1)) if floor_match else round(_DEFAULT_FLOOR_FRAC * ask)
    turn = _own_turn_count(history)
    demand = seller_demand(ask, floor, turn)
    offer = _latest_offer(history)
    if offer is not None and offer >= demand:
        return f"Yes, deal! I accept your offer of {offer} USD. STOP_NEGOTIATION"
    if turn == 0:
        return f"My asking price is {demand} USD."
    return f"I can do {demand} USD."


def _count_prior_strategies(text: str) -> int:
    """Bullets under "Previous strategies:" in a coach/optimizer prompt."""
    section = text.split("Previous strategies:", 1)
    if len(section) < 2:
        return 0
    count = 0
    for line in section[1].splitlines():
        stripped = line.strip()
        if stripped.startswith("- ") and stripped != "-":
            count += 1
        elif stripped and not stripped.startswith("-"):
            break
    return count


def _coach_reply(history: Sequence[ChatMessage]) -> str:
    prior = _count_prior_strategies("\n".join(msg.content for msg in history))
    return COACH_SENTENCES[prior % len(COACH_SENTENCES)]


def _transcript_block(history: Sequence[ChatMessage]) -> str:
    for msg in history:
        if msg.content.startswith("Transcript:"):
            return msg.content
    return ""


def _requested_variables(history: Sequence[ChatMessage]) -> list[tuple[str, str]]:
    listing = history[-1].content
    return re.findall(r"^- (\w+) \((\w+)\)", listing, re.MULTILINE)


def _extractor_reply(history: Sequence[ChatMessage]) -> str:
    transcript = _transcript_block(history)
    deal = "Yes, deal!" in transcript
    accept = None
    for match in _ACCEPT_RE.finditer(transcript):
        accept = int(match.group(1))
    last_offer = None
    for match in _OFFER_RE.finditer(transcript):
        last_offer = int(match.group(1))
    price = accept if accept is not None else (last_offer if deal else None)
    message_count = sum(
        1 for line in transcript.splitlines()[1:] if line.strip() and ":" in line
    )

    def known(name: str):
        if name == "final_price":
            return price if deal else None
        if name == "deal_reached":
            return deal
        if name == "negotiation_rounds":
            return math.ceil(message_count / 2)
        if name in ("buyer_satisfaction", "seller_satisfaction"):
            return 5 if deal else 2
        if name in ("last_offer_made", "last_offer_received"):
            return last_offer
        return None

    return json.dumps({name: known(name) for name, _ in _requested_variables(history)})


def scripted_negotiation_backend() -> ScriptedBackend:
    """Backend covering every call a negotiation job makes.

    Rule order matters: extraction and coaching calls are recognized by
    their instructions before the buyer/seller role rules look at the
    system prompt.
    """
    rules = (
        ScriptedRule(
            matcher=lambda h: "flat JSON object" in h[-1].content,
            response=_extractor_reply,
        ),
        ScriptedRule(
            matcher=lambda h: "seasoned negotiation coach" in h[0].content,
            response=_coach_reply,
        ),
        ScriptedRule(
            matcher=lambda h: "ONE new strategy sentence" in h[-1].content
            or "ONE new strategy sentence" in h[0].content,
            response=_coach_reply,
        ),
        ScriptedRule(
            matcher=lambda h: "thinking silently" in h[0].content,
            response="I believe the counterpart will concede soon.",
        ),
        ScriptedRule(matcher=_is_buyer, response=_buyer_reply),
        ScriptedRule(matcher=_is_seller, response=_seller_reply),
    )
    return ScriptedBackend.from_rules(rules, default_response="OK.")
