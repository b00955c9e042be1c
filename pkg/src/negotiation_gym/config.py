"""Declarative simulation configuration: parsing, validation, serialization.

A scenario is described by a single JSON document with the shape::

    {
      "model": "gpt-4o",
      "config": {
        "name": "...",
        "agents": [{...}, {...}],
        "termination_condition": "STOP_NEGOTIATION",
        "output_variables": [{"name": ..., "type": ..., "description": ...}],
        "max_messages": 20
      },
      "num_runs": 10,
      "optimization_prompt": "...",       # optional
      "simulation_context": {...},        # optional
      "rng_seed": 7                       # optional
    }

Unknown keys are preserved, never rejected, so GUI-authored documents with
extra metadata survive a parse/serialize round trip byte-for-byte in content.
All parsed types are immutable; they may be shared across concurrent jobs.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Mapping

OUTPUT_VARIABLE_TYPES = ("Number", "Boolean", "String")

DEFAULT_MAX_MESSAGES = 20

_IDENTIFIER_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

# Scalars admissible as strategy values. Nested objects/arrays are rejected
# at parse time: private constraints are templated into prompts and must
# render unambiguously.
_SCALAR_TYPES = (int, float, str, bool)


class ConfigError(ValueError):
    """Raised when a config document cannot be parsed into a ScenarioConfig."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class UnknownUtilityError(KeyError):
    """Raised when an agent names a utility class absent from the registry."""

    def __init__(self, name: str, known: list[str]):
        self.utility_class = name
        self.known = known
        super().__init__(f"unknown utility_class {name!r}; known: {', '.join(known)}")


@dataclass(frozen=True)
class Violation:
    path: str
    message: str


@dataclass(frozen=True)
class OutputVariableSpec:
    name: str
    type: str
    description: str = ""
    # Absence-tolerant variables may be omitted by the extractor (e.g. a
    # final price when no deal was reached).
    optional: bool = False


@dataclass(frozen=True)
class SimulationContext:
    """Free-form scenario metadata; never interpreted by the engine."""

    type: str = ""
    domain: str = ""
    objectives: tuple[str, ...] = ()
    constraints: tuple[str, ...] = ()
    tags: tuple[str, ...] = ()


@dataclass(frozen=True)
class AgentSpec:
    name: str
    prompt: str
    description: str = ""
    utility_class: str | None = None
    strategy: Mapping[str, Any] = field(default_factory=dict)
    self_improve: bool = False
    optimization_target: bool | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    model_id: str
    name: str
    agents: tuple[AgentSpec, ...]
    termination_condition: str
    output_variables: tuple[OutputVariableSpec, ...]
    num_runs: int
    max_messages: int = DEFAULT_MAX_MESSAGES
    optimization_prompt: str | None = None
    simulation_context: SimulationContext = SimulationContext()
    rng_seed: int | None = None
    # Unknown keys carried through verbatim: top-level and inside "config".
    extras: Mapping[str, Any] = field(default_factory=dict)
    config_extras: Mapping[str, Any] = field(default_factory=dict)

    def agent(self, name: str) -> AgentSpec:
        for spec in self.agents:
            if spec.name == name:
                return spec
        raise KeyError(name)


def _expect(value: Any, kinds: tuple[type, ...], path: str, label: str) -> Any:
    # bool is an int subclass; only accept it where explicitly listed.
    if isinstance(value, bool) and bool not in kinds:
        raise ConfigError(path, f"expected {label}, got boolean")
    if not isinstance(value, kinds):
        raise ConfigError(path, f"expected {label}, got {type(value).__name__}")
    return value


def _require(obj: Mapping[str, Any], key: str, path: str) -> Any:
    if key not in obj:
        raise ConfigError(f"{path}.{key}" if path else key, "required field missing")
    return obj[key]


def _parse_agent(obj: Any, path: str) -> AgentSpec:
    _expect(obj, (dict,), path, "object")
    name = _expect(_require(obj, "name", path), (str,), f"{path}.name", "string")
    prompt = _expect(_require(obj, "prompt", path), (str,), f"{path}.prompt", "string")
    description = _expect(obj.get("description", ""), (str,), f"{path}.description", "string")
    utility_class = obj.get("utility_class")
    if utility_class is not None:
        _expect(utility_class, (str,), f"{path}.utility_class", "string")
    strategy = _expect(obj.get("strategy", {}), (dict,), f"{path}.strategy", "object")
    for key, value in strategy.items():
        if not isinstance(value, _SCALAR_TYPES):
            raise ConfigError(
                f"{path}.strategy.{key}",
                "strategy values must be scalars or strings (nested objects rejected)",
            )
    self_improve = _expect(
        obj.get("self_improve", False), (bool,), f"{path}.self_improve", "boolean"
    )
    optimization_target = obj.get("optimization_target")
    if optimization_target is not None:
        _expect(optimization_target, (bool,), f"{path}.optimization_target", "boolean")
    return AgentSpec(
        name=name,
        prompt=prompt,
        description=description,
        utility_class=utility_class,
        strategy=dict(strategy),
        self_improve=self_improve,
        optimization_target=optimization_target,
    )


def _parse_output_variable(obj: Any, path: str) -> OutputVariableSpec:
    _expect(obj, (dict,), path, "object")
    name = _expect(_require(obj, "name", path), (str,), f"{path}.name", "string")
    type_ = _expect(_require(obj, "type", path), (str,), f"{path}.type", "string")
    description = _expect(obj.get("description", ""), (str,), f"{path}.description", "string")
    optional = _expect(obj.get("optional", False), (bool,), f"{path}.optional", "boolean")
    return OutputVariableSpec(name=name, type=type_, description=description, optional=optional)


def _parse_context(obj: Any) -> SimulationContext:
    _expect(obj, (dict,), "simulation_context", "object")

    def str_list(key: str) -> tuple[str, ...]:
        raw = _expect(obj.get(key, []), (list,), f"simulation_context.{key}", "array")
        for i, item in enumerate(raw):
            _expect(item, (str,), f"simulation_context.{key}[{i}]", "string")
        return tuple(raw)

    return SimulationContext(
        type=_expect(obj.get("type", ""), (str,), "simulation_context.type", "string"),
        domain=_expect(obj.get("domain", ""), (str,), "simulation_context.domain", "string"),
        objectives=str_list("objectives"),
        constraints=str_list("constraints"),
        tags=str_list("tags"),
    )


_TOP_LEVEL_KEYS = {"model", "config", "num_runs", "optimization_prompt", "simulation_context", "rng_seed"}
_CONFIG_KEYS = {"name", "agents", "termination_condition", "output_variables", "max_messages"}


def parse_config(text: str) -> ScenarioConfig:
    """Parse a UTF-8 JSON scenario document.

    Raises ConfigError with the offending field path for missing/ill-typed
    fields, and with the reported position for JSON syntax errors. Structural
    invariants beyond types (name uniqueness, value ranges) are left to
    :func:`validate`, except the agent count, without which no conversation
    is possible.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"JSON syntax error at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    _expect(doc, (dict,), "", "object")

    model_id = _expect(_require(doc, "model", ""), (str,), "model", "string")
    cfg = _expect(_require(doc, "config", ""), (dict,), "config", "object")
    name = _expect(_require(cfg, "name", "config"), (str,), "name", "string")

    agents_raw = _expect(_require(cfg, "agents", "config"), (list,), "agents", "array")
    if len(agents_raw) < 2:
        raise ConfigError("agents", "agents list length < 2")
    agents = tuple(_parse_agent(a, f"agents[{i}]") for i, a in enumerate(agents_raw))

    termination = _expect(
        _require(cfg, "termination_condition", "config"), (str,), "termination_condition", "string"
    )
    variables_raw = _expect(
        _require(cfg, "output_variables", "config"), (list,), "output_variables", "array"
    )
    variables = tuple(
        _parse_output_variable(v, f"output_variables[{i}]") for i, v in enumerate(variables_raw)
    )
    max_messages = _expect(
        cfg.get("max_messages", DEFAULT_MAX_MESSAGES), (int,), "max_messages", "integer"
    )

    num_runs = _expect(_require(doc, "num_runs", ""), (int,), "num_runs", "integer")
    optimization_prompt = doc.get("optimization_prompt")
    if optimization_prompt is not None:
        _expect(optimization_prompt, (str,), "optimization_prompt", "string")
    context = _parse_context(doc.get("simulation_context", {}))
    rng_seed = doc.get("rng_seed")
    if rng_seed is not None:
        _expect(rng_seed, (int,), "rng_seed", "integer")
        if rng_seed < 0:
            raise ConfigError("rng_seed", "must be a non-negative integer")

    extras = {k: v for k, v in doc.items() if k not in _TOP_LEVEL_KEYS}
    config_extras = {k: v for k, v in cfg.items() if k not in _CONFIG_KEYS}

    return ScenarioConfig(
        model_id=model_id,
        name=name,
        agents=agents,
        termination_condition=termination,
        output_variables=variables,
        num_runs=num_runs,
        max_messages=max_messages,
        optimization_prompt=optimization_prompt,
        simulation_context=context,
        rng_seed=rng_seed,
        extras=extras,
        config_extras=config_extras,
    )


def _agent_to_json(spec: AgentSpec) -> dict[str, Any]:
    out: dict[str, Any] = {
        "name": spec.name,
        "description": spec.description,
        "prompt": spec.prompt,
    }
    if spec.utility_class is not None:
        out["utility_class"] = spec.utility_class
    if spec.strategy:
        out["strategy"] = dict(spec.strategy)
    out["self_improve"] = spec.self_improve
    if spec.optimization_target is not None:
        out["optimization_target"] = spec.optimization_target
    return out


def _variable_to_json(spec: OutputVariableSpec) -> dict[str, Any]:
    out: dict[str, Any] = {"name": spec.name, "type": spec.type, "description": spec.description}
    if spec.optional:
        out["optional"] = True
    return out


def config_to_document(config: ScenarioConfig) -> dict[str, Any]:
    """Rebuild the canonical JSON document for a parsed config."""
    cfg: dict[str, Any] = {
        "name": config.name,
        "agents": [_agent_to_json(a) for a in config.agents],
        "termination_condition": config.termination_condition,
        "output_variables": [_variable_to_json(v) for v in config.output_variables],
        "max_messages": config.max_messages,
    }
    cfg.update(config.config_extras)
    doc: dict[str, Any] = {"model": config.model_id, "config": cfg, "num_runs": config.num_runs}
    if config.optimization_prompt is not None:
        doc["optimization_prompt"] = config.optimization_prompt
    doc["simulation_context"] = {
        "type": config.simulation_context.type,
        "domain": config.simulation_context.domain,
        "objectives": list(config.simulation_context.objectives),
        "constraints": list(config.simulation_context.constraints),
        "tags": list(config.simulation_context.tags),
    }
    if config.rng_seed is not None:
        doc["rng_seed"] = config.rng_seed
    doc.update(config.extras)
    return doc


def serialize_config(config: ScenarioConfig) -> str:
    return json.dumps(config_to_document(config), indent=2, ensure_ascii=False)


def _is_finite_number(value: Any) -> bool:
    if isinstance(value, bool):
        return True
    return isinstance(value, (int, float)) and math.isfinite(value)


def validate(config: ScenarioConfig, registry: Mapping[str, Any] | None = None) -> list[Violation]:
    """Check every scenario invariant; returns one Violation per breach.

    Pure: never mutates the config, identical inputs yield identical lists.
    When a utility registry is supplied, agent utility_class names are
    checked against it.
    """
    violations: list[Violation] = []

    if len(config.agents) < 2:
        violations.append(Violation("agents", "agents list length < 2"))
    seen_names: set[str] = set()
    for i, agent in enumerate(config.agents):
        path = f"agents[{i}]"
        if not agent.name:
            violations.append(Violation(f"{path}.name", "agent name must be non-empty"))
        elif agent.name in seen_names:
            violations.append(Violation(f"{path}.name", f"duplicate agent name {agent.name!r}"))
        seen_names.add(agent.name)
        for key, value in agent.strategy.items():
            if isinstance(value, str):
                if not value:
                    violations.append(
                        Violation(f"{path}.strategy.{key}", "strategy strings must be non-empty")
                    )
            elif not _is_finite_number(value):
                violations.append(
                    Violation(f"{path}.strategy.{key}", "strategy numbers must be finite")
                )
        if registry is not None and agent.utility_class is not None:
            if agent.utility_class not in registry:
                violations.append(
                    Violation(
                        f"{path}.utility_class",
                        f"unknown utility_class {agent.utility_class!r}; "
                        f"known: {', '.join(sorted(registry))}",
                    )
                )

    if config.num_runs < 1:
        violations.append(Violation("num_runs", "num_runs must be >= 1"))
    if config.max_messages < 2:
        violations.append(Violation("max_messages", "max_messages must be >= 2"))
    if not config.termination_condition:
        violations.append(Violation("termination_condition", "termination marker must be non-empty"))

    seen_vars: set[str] = set()
    for i, var in enumerate(config.output_variables):
        path = f"output_variables[{i}]"
        if not _IDENTIFIER_RE.match(var.name):
            violations.append(Violation(f"{path}.name", f"invalid identifier {var.name!r}"))
        if var.name in seen_vars:
            violations.append(Violation(f"{path}.name", f"duplicate output variable {var.name!r}"))
        seen_vars.add(var.name)
        if var.type not in OUTPUT_VARIABLE_TYPES:
            violations.append(Violation(f"{path}.type", "type must be Number|Boolean|String"))

    return violations


def resolve_utility(spec: AgentSpec, registry: Mapping[str, Any]) -> Any:
    """Look up the utility binding for an agent spec.

    Absent utility_class falls back to the registry's "Default" binding
    (constant zero utility).
    """
    key = spec.utility_class if spec.utility_class is not None else "Default"
    try:
        return registry[key]
    except KeyError:
        raise UnknownUtilityError(key, sorted(registry)) from None


def load_schema() -> dict[str, Any]:
    """The published JSON-Schema for scenario documents (served by the API)."""
    data = resources.files(__package__).joinpath("schema.json").read_text(encoding="utf-8")
    return json.loads(data)
