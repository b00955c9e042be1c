from .api import create_app
from .store import FileQueueStore, JobEvent, JobRecord, QueueStore
from .worker import OrchestratorService, default_backend_factory, run_job, submit_job, worker_loop

__all__ = [
    "FileQueueStore",
    "JobEvent",
    "JobRecord",
    "OrchestratorService",
    "QueueStore",
    "create_app",
    "default_backend_factory",
    "run_job",
    "submit_job",
    "worker_loop",
]
