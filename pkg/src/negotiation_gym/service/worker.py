"""Job submission and the worker loop.

Workers stream jobs off the queue store: claim, run the simulation or
experiment, persist the result document, mark done. A worker never holds
more than one job; concurrency comes from running several workers against
the same store. Lease expiry (see the store) covers workers that die
mid-job.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from typing import Callable

from ..agents import UtilityAgent
from ..backends import ChatBackend, RemoteBackend
from ..config import ScenarioConfig, parse_config, resolve_utility, validate
from ..engine import EngineEvent, InvalidConfigError, environment_to_document, run_simulation
from ..metrics import render_report
from ..negotiation import (
    DEFAULT_REGISTRY,
    experiment_spec_from_config,
    parse_mode,
    result_to_document,
    run_all_modes,
    run_experiment,
)
from .store import JobRecord, QueueStore, new_job_id, transition

log = logging.getLogger(__name__)

DEFAULT_LEASE_DURATION = 30 * 60.0
DEFAULT_POLL_INTERVAL = 0.2
DEFAULT_WORKER_COUNT = 2

BackendFactory = Callable[[ScenarioConfig], ChatBackend]


def default_backend_factory(config: ScenarioConfig) -> ChatBackend:
    """Scripted players for the reserved model id "scripted", else remote."""
    if config.model_id == "scripted":
        from ..scripted import scripted_negotiation_backend

        return scripted_negotiation_backend()
    return RemoteBackend()


def _expected_episodes(config: ScenarioConfig) -> int:
    spec = experiment_spec_from_config(config)
    if spec is None:
        return config.num_runs
    return spec.n * (4 if spec.mode == "all" else 1)


def submit_job(
    document: dict | str,
    store: QueueStore,
    idempotency_key: str | None = None,
    user_tag: str | None = None,
) -> JobRecord:
    """Validate and persist one job; returns the queued record.

    Raises ConfigError / InvalidConfigError on a bad document. With an
    idempotency key, resubmission returns the original record untouched.
    """
    text = document if isinstance(document, str) else json.dumps(document)
    config = parse_config(text)
    violations = validate(config, DEFAULT_REGISTRY)
    if violations:
        raise InvalidConfigError(violations)
    experiment_spec_from_config(config)  # raises on a malformed experiment block

    job_id = new_job_id()
    if idempotency_key:
        owner = store.remember_idempotency(idempotency_key, job_id)
        if owner != job_id:
            existing = store.get(owner)
            if existing is not None:
                return existing
    record = JobRecord(
        id=job_id,
        config_document=json.loads(text),
        status="queued",
        submitted_at=time.time(),
        total_episodes=_expected_episodes(config),
        user_tag=user_tag,
    )
    store.enqueue(record)
    store.append_event(job_id, "status", {"status": "queued"})
    return record


def run_job(record: JobRecord, store: QueueStore, backend_factory: BackendFactory):
    """Execute one claimed job to a terminal status."""
    config = parse_config(json.dumps(record.config_document))
    backend = backend_factory(config)

    def on_event(event: EngineEvent):
        store.append_event(record.id, event.type, dict(event.data))
        if event.type == "episode":
            record.progress += 1
            store.update(record)

    spec = experiment_spec_from_config(config)
    if spec is None:
        agents = [
            UtilityAgent(
                name=agent_spec.name,
                base_prompt=agent_spec.prompt,
                description=agent_spec.description,
                strategy=agent_spec.strategy,
                self_improve=agent_spec.self_improve,
                utility_binding=resolve_utility(agent_spec, DEFAULT_REGISTRY),
            )
            for agent_spec in config.agents
        ]
        env = run_simulation(config, agents, backend, on_event=on_event)
        result_document = environment_to_document(env)
        report_document = None
    elif spec.mode == "all":
        results = run_all_modes(
            spec.n, spec.max_turns, spec.seed, backend,
            model_id=config.model_id, on_event=on_event,
        )
        result_document = {
            "experiments": {mode.value: result_to_document(res) for mode, res in results.items()}
        }
        report_document = render_report(
            {mode: res.aggregates for mode, res in results.items()}
        ).to_document()
    else:
        result = run_experiment(
            parse_mode(spec.mode), spec.n, spec.max_turns, spec.seed, backend,
            model_id=config.model_id, on_event=on_event,
        )
        result_document = result_to_document(result)
        report_document = render_report({result.mode: result.aggregates}).to_document()

    store.put_result(record.id, result_document)
    if report_document is not None:
        store.put_result(f"{record.id}.report", report_document)
    record.result_ref = record.id
    transition(record, "done")
    record.finished_at = time.time()
    store.update(record)
    store.append_event(record.id, "status", {"status": "done"})


def worker_loop(
    store: QueueStore,
    backend_factory: BackendFactory = default_backend_factory,
    *,
    stop_event: threading.Event,
    poll_interval: float = DEFAULT_POLL_INTERVAL,
    lease_duration: float = DEFAULT_LEASE_DURATION,
):
    """Claim and run jobs until stop_event is set; never abandons a running job."""
    while not stop_event.is_set():
        store.recover_expired()
        record = store.claim_next(lease_duration)
        if record is None:
            stop_event.wait(poll_interval)
            continue
        store.append_event(record.id, "status", {"status": "running"})
        try:
            run_job(record, store, backend_factory)
        except Exception as exc:  # any job failure is recorded, never fatal to the worker
            log.exception("job %s failed", record.id)
            current = store.get(record.id) or record
            if current.status == "running":
                transition(current, "failed")
                current.error = str(exc)
                current.finished_at = time.time()
                store.update(current)
                store.append_event(record.id, "status", {"status": "failed", "error": str(exc)})


class OrchestratorService:
    """A store plus a pool of worker threads, started and stopped together."""

    def __init__(
        self,
        store: QueueStore,
        backend_factory: BackendFactory = default_backend_factory,
        worker_count: int = DEFAULT_WORKER_COUNT,
        poll_interval: float = DEFAULT_POLL_INTERVAL,
        lease_duration: float = DEFAULT_LEASE_DURATION,
    ):
        self.store = store
        self.backend_factory = backend_factory
        self.worker_count = worker_count
        self.poll_interval = poll_interval
        self.lease_duration = lease_duration
        self.stop_event = threading.Event()
        self._threads: list[threading.Thread] = []

    def start(self):
        if self._threads:
            return
        for index in range(self.worker_count):
            thread = threading.Thread(
                target=worker_loop,
                args=(self.store, self.backend_factory),
                kwargs={
                    "stop_event": self.stop_event,
                    "poll_interval": self.poll_interval,
                    "lease_duration": self.lease_duration,
                },
                name=f"worker-{index}",
                daemon=True,
            )
            thread.start()
            self._threads.append(thread)

    def stop(self, timeout: float = 30.0):
        self.stop_event.set()
        for thread in self._threads:
            thread.join(timeout=timeout)
        self._threads.clear()
