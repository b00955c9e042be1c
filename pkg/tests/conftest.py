from __future__ import annotations

import json
from pathlib import Path

import pytest

from negotiation_gym.backends import CompletionParams
from negotiation_gym.scripted import scripted_negotiation_backend

REPO_ROOT = Path(__file__).resolve().parents[1]
FIXTURES = Path(__file__).resolve().parent / "fixtures"

BIKE_CONFIG_PATH = REPO_ROOT / "configs" / "bike_negotiation.json"


@pytest.fixture(scope="session")
def bike_config_text() -> str:
    return BIKE_CONFIG_PATH.read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def bike_config_document(bike_config_text) -> dict:
    return json.loads(bike_config_text)


@pytest.fixture()
def scripted_backend():
    return scripted_negotiation_backend()


@pytest.fixture()
def params() -> CompletionParams:
    return CompletionParams(model_id="scripted")
