"""HTTP API over the job queue.

Endpoints (all JSON, UTF-8):

    POST /api/jobs               submit a scenario/experiment document
    GET  /api/jobs               list jobs, ?status= filter
    GET  /api/jobs/{id}          one job record
    GET  /api/jobs/{id}/events   server-sent progress events (replayable)
    GET  /api/jobs/{id}/result   result document of a done job
    GET  /api/jobs/{id}/report   metrics report of an experiment job
    GET  /api/schema             the scenario JSON-Schema

The SSE stream carries id/event/data fields; reconnecting with a
Last-Event-ID header (or ?last_event_id=) replays from that sequence
number. The stream closes once the job reaches a terminal status.
"""

from __future__ import annotations

import json
import time
from typing import Iterator

from fastapi import Body, FastAPI, Header, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import StreamingResponse

from ..config import ConfigError, load_schema
from ..engine import InvalidConfigError
from .store import JobRecord, QueueStore
from .worker import OrchestratorService, submit_job

TERMINAL_STATUSES = ("done", "failed")

EVENT_POLL_INTERVAL = 0.1


def _record_view(record: JobRecord) -> dict:
    return record.to_json()


def _sse_line(seq: int, event_type: str, data: dict) -> str:
    return f"id: {seq}\nevent: {event_type}\ndata: {json.dumps(data)}\n\n"


def create_app(service: OrchestratorService) -> FastAPI:
    store: QueueStore = service.store
    app = FastAPI(title="negotiation-gym orchestrator")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
        expose_headers=["*"],
    )

    @app.post("/api/jobs", status_code=201)
    def submit(
        payload: dict = Body(...),
        idempotency_key: str | None = Header(None, alias="Idempotency-Key"),
        user_tag: str | None = Header(None, alias="X-User-Tag"),
    ) -> dict:
        try:
            record = submit_job(payload, store, idempotency_key=idempotency_key, user_tag=user_tag)
        except InvalidConfigError as exc:
            raise HTTPException(
                status_code=422,
                detail={"violations": [{"path": v.path, "message": v.message} for v in exc.violations]},
            ) from exc
        except (ConfigError, ValueError) as exc:
            path = getattr(exc, "path", "")
            raise HTTPException(
                status_code=422,
                detail={"violations": [{"path": path, "message": str(exc)}]},
            ) from exc
        except OSError as exc:
            raise HTTPException(status_code=503, detail=f"store unavailable: {exc}") from exc
        return _record_view(record)

    @app.get("/api/jobs")
    def list_jobs(status: str | None = Query(None)) -> list[dict]:
        return [_record_view(record) for record in store.list(status=status)]

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str) -> dict:
        record = store.get(job_id)
        if record is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id}")
        return _record_view(record)

    @app.get("/api/jobs/{job_id}/events")
    def stream_events(
        job_id: str,
        last_event_id: str | None = Header(None, alias="Last-Event-ID"),
        last_event_id_query: int | None = Query(None, alias="last_event_id"),
    ) -> StreamingResponse:
        if store.get(job_id) is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id}")
        after = 0
        if last_event_id_query is not None:
            after = last_event_id_query
        elif last_event_id:
            try:
                after = int(last_event_id)
            except ValueError:
                after = 0

        def generate(start_after: int) -> Iterator[str]:
            cursor = start_after
            while True:
                events = store.read_events(job_id, after=cursor)
                for event in events:
                    cursor = event.seq
                    yield _sse_line(event.seq, event.type, event.data)
                record = store.get(job_id)
                if record is not None and record.status in TERMINAL_STATUSES and not events:
                    return
                if not events:
                    time.sleep(EVENT_POLL_INTERVAL)

        return StreamingResponse(generate(after), media_type="text/event-stream")

    @app.get("/api/jobs/{job_id}/result")
    def get_result(job_id: str) -> dict:
        record = store.get(job_id)
        if record is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id}")
        if record.result_ref is None:
            raise HTTPException(status_code=404, detail="result not ready")
        document = store.get_result(record.result_ref)
        if document is None:
            raise HTTPException(status_code=404, detail="result document missing")
        return document

    @app.get("/api/jobs/{job_id}/report")
    def get_report(job_id: str) -> dict:
        record = store.get(job_id)
        if record is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id}")
        document = store.get_result(f"{job_id}.report")
        if document is None:
            raise HTTPException(
                status_code=404, detail="no report: job is not a finished experiment"
            )
        return document

    @app.get("/api/schema")
    def get_schema() -> dict:
        return load_schema()

    return app
