"""Command-line entry point.

Subcommands: validate a config, run a simulation, run the four-mode
negotiation experiment, or serve the HTTP API. Exit codes are stable:
0 success, 1 domain failure (invalid config content, failed run),

2 usage or configuration failure (bad flags, missing file, missing API
key). The scripted backend never touches the network, so CI and the
acceptance suite run fully offline.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .backends import BackendError, ChatBackend, RemoteBackend
from .config import ConfigError, parse_config, resolve_utility, serialize_config, validate
from .engine import environment_to_document, run_simulation
from .metrics import render_report
from .negotiation import (
    DEFAULT_REGISTRY,
    ReflectMode,
    parse_mode,
    result_to_document,
    rows_to_csv,
    run_all_modes,
    run_experiment,
)
from .scripted import scripted_negotiation_backend

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


def _read_config(path: str):
    """Returns (config, exit_code); config is None when exit_code != 0."""
    file_path = Path(path)
    try:
        text = file_path.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        return None, EXIT_USAGE
    try:
        config = parse_config(text)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None, EXIT_DOMAIN
    return config, EXIT_OK


def _make_backend(kind: str) -> ChatBackend:
    if kind == "scripted":
        return scripted_negotiation_backend()
    return RemoteBackend()


def _build_agents(config):
    from .agents import UtilityAgent

    return [
        UtilityAgent(
            name=spec.name,
            base_prompt=spec.prompt,
            description=spec.description,
            strategy=spec.strategy,
            self_improve=spec.self_improve,
            utility_binding=resolve_utility(spec, DEFAULT_REGISTRY),
        )
        for spec in config.agents
    ]


def cmd_validate(args) -> int:
    config, code = _read_config(args.path)
    if config is None:
        return code
    violations = validate(config, DEFAULT_REGISTRY)
    if violations:
        for violation in violations:
            print(f"{violation.path}: {violation.message}")
        return EXIT_DOMAIN
    print("OK")
    return EXIT_OK


def cmd_run(args) -> int:
    config, code = _read_config(args.path)
    if config is None:
        return code
    violations = validate(config, DEFAULT_REGISTRY)
    if violations:
        for violation in violations:
            print(f"{violation.path}: {violation.message}", file=sys.stderr)
        return EXIT_DOMAIN
    try:
        backend = _make_backend(args.backend)
    except BackendError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    agents = _build_agents(config)
    try:
        env = run_simulation(config, agents, backend, seed=args.seed)
    except Exception as exc:
        print(f"error: simulation failed: {exc}", file=sys.stderr)
        return EXIT_DOMAIN

    (out / "environment.json").write_text(
        json.dumps(environment_to_document(env), indent=2, ensure_ascii=False), encoding="utf-8"
    )
    summary = {
        "name": config.name,
        "num_runs": len(env.runs),
        "episodes": [
            {
                "index": record.index,
                "termination_reason": record.termination_reason,
                "failed": record.failed,
                "utilities": dict(record.utilities),
            }
            for record in env.runs
        ],
        "mean_utilities": _mean_utilities(env),
    }
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, ensure_ascii=False), encoding="utf-8"
    )
    (out / "config.json").write_text(serialize_config(config), encoding="utf-8")
    print(f"wrote {out / 'environment.json'} ({len(env.runs)} runs)")
    return EXIT_OK


def _mean_utilities(env) -> dict[str, float]:
    totals: dict[str, float] = {}
    counted = 0
    for record in env.runs:
        if record.failed:
            continue
        counted += 1
        for name, value in record.utilities.items():
            totals[name] = totals.get(name, 0.0) + value
    return {name: total / counted for name, total in totals.items()} if counted else {}


def cmd_experiment(args) -> int:
    try:
        backend = _make_backend(args.backend)
    except BackendError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    try:
        if args.mode == "all":
            results = run_all_modes(
                args.n, args.max_turns, args.seed, backend, model_id=args.model
            )
        else:
            mode = parse_mode(args.mode)
            results = {
                mode: run_experiment(
                    mode, args.n, args.max_turns, args.seed, backend, model_id=args.model
                )
            }
    except Exception as exc:
        print(f"error: experiment failed: {exc}", file=sys.stderr)
        return EXIT_DOMAIN

    report = render_report({mode: result.aggregates for mode, result in results.items()})
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    results_doc = {mode.value: result_to_document(result) for mode, result in results.items()}
    (out / "results.json").write_text(
        json.dumps(results_doc, indent=2, ensure_ascii=False), encoding="utf-8"
    )
    for mode, result in results.items():
        (out / f"rows_{mode.value}.csv").write_text(rows_to_csv(result), encoding="utf-8")
    for mode, result in results.items():
        bundle = result.aggregates
        print(
            f"{mode.value}: no_deal={bundle.no_deal_count} "
            f"buyer_ss={bundle.avg_buyer_ss:.3f} seller_ss={bundle.avg_seller_ss:.3f} "
            f"unclaimed={bundle.unclaimed_surplus_share:.3f}"
        )
    print(f"wrote {out / 'report.json'}")
    return EXIT_OK


def cmd_serve(args) -> int:
    try:
        host, _, port_text = args.addr.rpartition(":")
        port = int(port_text)
        if not host or not 0 < port < 65536:
            raise ValueError(args.addr)
    except ValueError:
        print(f"error: bad --addr {args.addr!r}; expected HOST:PORT", file=sys.stderr)
        return EXIT_USAGE

    import uvicorn

    from .service import FileQueueStore, OrchestratorService, create_app
    from .service.worker import default_backend_factory

    logging.basicConfig(level=logging.INFO)
    store = FileQueueStore(args.store)
    factory = (lambda config: scripted_negotiation_backend()) if args.backend == "scripted" \
        else default_backend_factory
    service = OrchestratorService(store, backend_factory=factory, worker_count=args.workers)
    app = create_app(service)
    service.start()
    try:
        uvicorn.run(app, host=host, port=port, log_level="info")
    finally:
        service.stop()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="negotiation-gym")
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="parse and validate a config file")
    p_validate.add_argument("path")
    p_validate.set_defaults(handler=cmd_validate)

    p_run = sub.add_parser("run", help="run one simulation job")
    p_run.add_argument("path")
    p_run.add_argument("--backend", choices=("scripted", "remote"), default="scripted")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default="out")
    p_run.set_defaults(handler=cmd_run)

    p_exp = sub.add_parser("experiment", help="run the buyer-seller experiment harness")
    p_exp.add_argument(
        "--mode",
        choices=tuple(mode.value for mode in ReflectMode) + ("all",),
        default="all",
    )
    p_exp.add_argument("--n", type=int, default=20)
    p_exp.add_argument("--max-turns", type=int, default=20, dest="max_turns")
    p_exp.add_argument("--seed", type=int, default=None)
    p_exp.add_argument("--backend", choices=("scripted", "remote"), default="scripted")
    p_exp.add_argument("--model", default="scripted")
    p_exp.add_argument("--out", default="out")
    p_exp.set_defaults(handler=cmd_experiment)

    p_serve = sub.add_parser("serve", help="serve the orchestrator HTTP API")
    p_serve.add_argument("--addr", default="127.0.0.1:8080")
    p_serve.add_argument("--workers", type=int, default=2)
    p_serve.add_argument("--store", default="store")
    p_serve.add_argument("--backend", choices=("auto", "scripted"), default="auto")
    p_serve.set_defaults(handler=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
