"""Configuration-driven multi-agent negotiation simulations.

Utility-bearing agents converse under a selector/termination protocol,
episode outcomes accumulate into a shared environment, and agents can
self-optimize their prompts through a coaching feedback loop. Includes a
buyer-seller case study, an experiment harness for the four coaching
modes, a job-queue service with an HTTP/SSE API, and a CLI.
"""

from .agents import (
    Environment,
    EpisodeRecord,
    PromptRevision,
    UtilityAgent,
    UtilityBinding,
    compute_utility,
    learn_from_feedback,
)
from .backends import (
    ChatBackend,
    ChatMessage,
    CompletionParams,
    RemoteBackend,
    ScriptedBackend,
    ScriptedPolicyTable,
    ScriptedRule,
)
from .config import (
    AgentSpec,
    ConfigError,
    OutputVariableSpec,
    ScenarioConfig,
    SimulationContext,
    Violation,
    parse_config,
    serialize_config,
    validate,
)
from .engine import (
    SelectorPolicy,
    TerminationOutcome,
    Transcript,
    check_termination,
    run_episode,
    run_simulation,
    select_next,
    serialize_environment,
)
from .extraction import TypedValue, extract_variables, parse_typed
from .metrics import MetricsBundle, cumulative_average, aggregate, render_report
from .negotiation import (
    DealOutcome,
    NegotiationInstance,
    ReflectMode,
    buyer_utility,
    coach_strategy,
    run_experiment,
    sample_instance,
    seller_utility,
    surplus_shares,
    utility_tag,
)

__version__ = "0.1.0"
