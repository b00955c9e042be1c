from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from negotiation_gym.backends import ScriptedBackend
from negotiation_gym.config import OutputVariableSpec
from negotiation_gym.extraction import (
    ExtractionError,
    TypedParseError,
    TypedValue,
    extract_variables,
    extract_variables_detailed,
    format_typed,
    parse_typed,
)

PRICE = OutputVariableSpec(name="final_price", type="Number", description="price", optional=True)
PRICE_REQUIRED = OutputVariableSpec(name="final_price", type="Number", description="price")
DEAL = OutputVariableSpec(name="deal_reached", type="Boolean", description="deal?")

DEAL_TRANSCRIPT = (
    ("Buyer", "I offer 1100 USD."),
    ("Seller", "1,100 then. Yes, deal! STOP_NEGOTIATION"),
)
NO_DEAL_TRANSCRIPT = (
    ("Buyer", "I offer 900 USD."),
    ("Seller", "I can do 1300 USD."),
)


def test_parse_typed_number_with_thousands_separator():
    assert parse_typed("1,100", "Number") == TypedValue.of_number(1100.0)


def test_parse_typed_boolean_words():
    assert parse_typed("no", "Boolean").boolean is False
    assert parse_typed("yes", "Boolean").boolean is True
    assert parse_typed("True", "Boolean").boolean is True
    assert parse_typed("FALSE", "Boolean").boolean is False


def test_parse_typed_rejects_garbage():
    with pytest.raises(TypedParseError):
        parse_typed("abc", "Number")
    with pytest.raises(TypedParseError):
        parse_typed("maybe", "Boolean")
    with pytest.raises(TypedParseError):
        parse_typed("", "String")
    with pytest.raises(TypedParseError):
        parse_typed("nan", "Number")


def test_typed_value_payload_invariant():
    with pytest.raises(ValueError):
        TypedValue(kind="Number", number=1.0, boolean=True)
    with pytest.raises(ValueError):
        TypedValue(kind="Boolean")


@given(st.floats(allow_nan=False, allow_infinity=False, width=32))
def test_number_round_trip(value):
    typed = TypedValue.of_number(value)
    assert parse_typed(format_typed(typed), "Number") == typed


@given(st.booleans())
def test_boolean_round_trip(value):
    typed = TypedValue.of_boolean(value)
    assert parse_typed(format_typed(typed), "Boolean") == typed


@given(st.text(min_size=1).map(str.strip).filter(bool))
def test_string_round_trip(value):
    typed = TypedValue.of_string(value)
    assert parse_typed(format_typed(typed), "String") == typed


def test_extract_deal_transcript(scripted_backend, params):
    values = extract_variables(DEAL_TRANSCRIPT, [PRICE, DEAL], scripted_backend, params)
    assert values["deal_reached"].boolean is True
    assert values["final_price"].number == 1100.0


def test_extract_no_deal_optional_price_absent(scripted_backend, params):
    values = extract_variables(NO_DEAL_TRANSCRIPT, [PRICE, DEAL], scripted_backend, params)
    assert values["deal_reached"].boolean is False
    assert "final_price" not in values


def test_extract_no_deal_required_price_errors(scripted_backend, params):
    with pytest.raises(ExtractionError, match="final_price"):
        extract_variables(NO_DEAL_TRANSCRIPT, [PRICE_REQUIRED, DEAL], scripted_backend, params)


def test_extract_is_deterministic(scripted_backend, params):
    first = extract_variables(DEAL_TRANSCRIPT, [PRICE, DEAL], scripted_backend, params)
    second = extract_variables(DEAL_TRANSCRIPT, [PRICE, DEAL], scripted_backend, params)
    assert first == second


def test_extract_keeps_raw_replies(scripted_backend, params):
    values, raw = extract_variables_detailed(DEAL_TRANSCRIPT, [PRICE, DEAL], scripted_backend, params)
    assert set(raw) == {"final_price", "deal_reached"}
    assert raw["deal_reached"] == "true"


def test_extract_does_not_mutate_transcript(scripted_backend, params):
    transcript = [list(pair) for pair in DEAL_TRANSCRIPT]
    snapshot = [list(pair) for pair in transcript]
    extract_variables([tuple(p) for p in transcript], [PRICE, DEAL], scripted_backend, params)
    assert transcript == snapshot


def test_extract_failure_after_repair(params):
    backend = ScriptedBackend.from_rules([], default_response="never json")
    with pytest.raises(ExtractionError):
        extract_variables(DEAL_TRANSCRIPT, [PRICE, DEAL], backend, params)


def test_extract_preconditions(scripted_backend, params):
    with pytest.raises(ValueError, match="transcript"):
        extract_variables((), [DEAL], scripted_backend, params)
    with pytest.raises(ValueError, match="specs"):
        extract_variables(DEAL_TRANSCRIPT, [], scripted_backend, params)
