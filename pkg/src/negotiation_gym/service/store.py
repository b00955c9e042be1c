"""Job records and the persistent queue store.

The default store is an embedded directory layout driven by atomic
renames: a queued job is a marker file, and claiming it is a rename into
the claimed directory, which the filesystem guarantees succeeds for
exactly one worker. A document-database adapter can implement the same
contract for bigger deployments.

Layout under the store root::

    jobs/<id>.json       current JobRecord
    queue/<ts>_<id>      claimable marker, FIFO by name
    claimed/<ts>_<id>    markers already claimed (audit)
    results/<key>.json   result documents
    events/<id>.jsonl    ordered progress events
    idem/<digest>        idempotency key -> job id
    recover/<token>      lease-recovery winners (audit)
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
import uuid
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Any

JOB_STATUSES = ("queued", "running", "done", "failed")

_ALLOWED_TRANSITIONS = {
    "queued": {"running"},
    "running": {"done", "failed", "queued"},  # queued again only via lease recovery
    "done": set(),
    "failed": set(),
}

MAX_REQUEUES = 1


class StoreError(RuntimeError):
    pass


class IllegalTransitionError(StoreError):
    def __init__(self, job_id: str, old: str, new: str):
        super().__init__(f"job {job_id}: illegal status transition {old} -> {new}")


@dataclass
class JobRecord:
    id: str
    config_document: dict
    status: str = "queued"
    submitted_at: float = 0.0
    started_at: float | None = None
    finished_at: float | None = None
    progress: int = 0
    total_episodes: int | None = None
    result_ref: str | None = None
    error: str | None = None
    attempts: int = 0
    requeues: int = 0
    lease_expires_at: float | None = None
    user_tag: str | None = None

    def to_json(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "status": self.status,
            "submitted_at": self.submitted_at,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "progress": self.progress,
            "total_episodes": self.total_episodes,
            "result_ref": self.result_ref,
            "error": self.error,
            "attempts": self.attempts,
            "requeues": self.requeues,
            "lease_expires_at": self.lease_expires_at,
            "user_tag": self.user_tag,
            "config": self.config_document,
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "JobRecord":
        return cls(
            id=doc["id"],
            config_document=doc["config"],
            status=doc["status"],
            submitted_at=doc["submitted_at"],
            started_at=doc.get("started_at"),
            finished_at=doc.get("finished_at"),
            progress=doc.get("progress", 0),
            total_episodes=doc.get("total_episodes"),
            result_ref=doc.get("result_ref"),
            error=doc.get("error"),
            attempts=doc.get("attempts", 0),
            requeues=doc.get("requeues", 0),
            lease_expires_at=doc.get("lease_expires_at"),
            user_tag=doc.get("user_tag"),
        )


def transition(record: JobRecord, new_status: str):
    if new_status not in _ALLOWED_TRANSITIONS.get(record.status, set()):
        raise IllegalTransitionError(record.id, record.status, new_status)
    record.status = new_status


@dataclass(frozen=True)
class JobEvent:
    seq: int
    type: str
    data: dict[str, Any]


def new_job_id() -> str:
    return str(uuid.uuid4())


class QueueStore(ABC):
    """Persistence contract the orchestrator runs on.

    claim_next must never hand the same queued job to two workers; listing
    and claiming follow FIFO submission order.
    """

    @abstractmethod
    def enqueue(self, record: JobRecord): ...

    @abstractmethod
    def claim_next(self, lease_duration: float) -> JobRecord | None: ...

    @abstractmethod
    def update(self, record: JobRecord): ...

    @abstractmethod
    def get(self, job_id: str) -> JobRecord | None: ...

    @abstractmethod
    def list(self, status: str | None = None) -> list[JobRecord]: ...

    @abstractmethod
    def put_result(self, key: str, document: dict): ...

    @abstractmethod
    def get_result(self, key: str) -> dict | None: ...

    @abstractmethod
    def append_event(self, job_id: str, event_type: str, data: dict[str, Any]) -> int: ...

    @abstractmethod
    def read_events(self, job_id: str, after: int = 0) -> list[JobEvent]: ...

    @abstractmethod
    def recover_expired(self, now: float | None = None) -> list[str]: ...

    @abstractmethod
    def remember_idempotency(self, key: str, job_id: str) -> str: ...


class FileQueueStore(QueueStore):
    """Directory-backed store; all claims are atomic renames."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        for sub in ("jobs", "queue", "claimed", "results", "events", "idem", "recover"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)
        self._event_lock = threading.Lock()

    # -- paths -------------------------------------------------------

    def _job_path(self, job_id: str) -> Path:
        return self.root / "jobs" / f"{job_id}.json"

    def _marker_name(self, record: JobRecord) -> str:
        return f"{record.submitted_at:020.6f}_{record.id}"

    def _write_atomic(self, path: Path, payload: str):
        tmp = path.with_suffix(path.suffix + f".tmp{os.getpid()}.{threading.get_ident()}")
        tmp.write_text(payload, encoding="utf-8")
        os.replace(tmp, path)

    def _write_job(self, record: JobRecord):
        self._write_atomic(self._job_path(record.id), json.dumps(record.to_json(), indent=2))

    # -- contract ----------------------------------------------------

    def enqueue(self, record: JobRecord):
        if record.status != "queued":
            raise StoreError(f"can only enqueue queued jobs, got {record.status!r}")
        if not record.submitted_at:
            record.submitted_at = time.time()
        self._write_job(record)
        marker = self.root / "queue" / self._marker_name(record)
        marker.touch()

    def _requeue(self, record: JobRecord, now: float):
        transition(record, "queued")
        record.submitted_at = now  # back of the FIFO under a fresh marker
        record.lease_expires_at = None
        self._write_job(record)
        (self.root / "queue" / self._marker_name(record)).touch()

    def claim_next(self, lease_duration: float) -> JobRecord | None:
        markers = sorted(p.name for p in (self.root / "queue").iterdir())
        for name in markers:
            source = self.root / "queue" / name
            target = self.root / "claimed" / name
            try:
                os.rename(source, target)
            except OSError:
                continue  # another worker won this marker
            job_id = name.split("_", 1)[1]
            record = self.get(job_id)
            if record is None or record.status != "queued":
                continue  # stale marker
            now = time.time()
            transition(record, "running")
            record.started_at = now
            record.attempts += 1
            record.lease_expires_at = now + lease_duration
            self._write_job(record)
            return record
        return None

    def update(self, record: JobRecord):
        self._write_job(record)

    def get(self, job_id: str) -> JobRecord | None:
        path = self._job_path(job_id)
        if not path.exists():
            return None
        return JobRecord.from_json(json.loads(path.read_text(encoding="utf-8")))

    def list(self, status: str | None = None) -> list[JobRecord]:
        records = []
        for path in (self.root / "jobs").glob("*.json"):
            record = JobRecord.from_json(json.loads(path.read_text(encoding="utf-8")))
            if status is None or record.status == status:
                records.append(record)
        records.sort(key=lambda r: (r.submitted_at, r.id))
        return records

    def put_result(self, key: str, document: dict):
        self._write_atomic(self.root / "results" / f"{key}.json", json.dumps(document, indent=2))

    def get_result(self, key: str) -> dict | None:
        path = self.root / "results" / f"{key}.json"
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def append_event(self, job_id: str, event_type: str, data: dict[str, Any]) -> int:
        path = self.root / "events" / f"{job_id}.jsonl"
        with self._event_lock:
            seq = 1
            if path.exists():
                with path.open("r", encoding="utf-8") as handle:
                    seq = sum(1 for _ in handle) + 1
            line = json.dumps({"seq": seq, "event": event_type, "data": data})
            with path.open("a", encoding="utf-8") as handle:
                handle.write(line + "\n")
        return seq

    def read_events(self, job_id: str, after: int = 0) -> list[JobEvent]:
        path = self.root / "events" / f"{job_id}.jsonl"
        if not path.exists():
            return []
        events = []
        with path.open("r", encoding="utf-8") as handle:
            for line in handle:
                if not line.strip():
                    continue
                doc = json.loads(line)
                if doc["seq"] > after:
                    events.append(JobEvent(seq=doc["seq"], type=doc["event"], data=doc["data"]))
        return events

    def recover_expired(self, now: float | None = None) -> list[str]:
        """Requeue running jobs whose lease expired; fail them after MAX_REQUEUES.

        The recovery action for a given (job, lease) pair is guarded by an
        exclusive token file so concurrent sweepers act at most once.
        """
        now = time.time() if now is None else now
        touched: list[str] = []
        for record in self.list(status="running"):
            if record.lease_expires_at is None or record.lease_expires_at >= now:
                continue
            token = self.root / "recover" / f"{record.id}_{int(record.lease_expires_at * 1000)}"
            try:
                token.touch(exist_ok=False)
            except FileExistsError:
                continue  # another sweeper already handled this expiry
            if record.requeues < MAX_REQUEUES:
                record.requeues += 1
                self._requeue(record, now)
                self.append_event(record.id, "status", {"status": "queued", "requeued": True})
            else:
                transition(record, "failed")
                record.error = "lease expired after requeue; giving up"
                record.finished_at = now
                self._write_job(record)
                self.append_event(record.id, "status", {"status": "failed", "error": record.error})
            touched.append(record.id)
        return touched

    def remember_idempotency(self, key: str, job_id: str) -> str:
        digest = hashlib.sha256(key.encode("utf-8")).hexdigest()
        path = self.root / "idem" / digest
        try:
            with path.open("x", encoding="utf-8") as handle:
                handle.write(job_id)
            return job_id
        except FileExistsError:
            return path.read_text(encoding="utf-8").strip()
