"""Background ingest jobs with pollable progress.

One job per image at a time; job state moves through
pending -> tiling -> embedding -> indexing -> done (or failed) and the
tile counters only ever grow.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field


@dataclass
class IngestJob:
    job_id: str
    image_id: str
    state: str = "pending"
    tiles_total: int = 0
    tiles_done: int = 0
    error: str | None = None


@dataclass
class JobRegistry:
    _jobs: dict[str, IngestJob] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def get(self, job_id: str) -> IngestJob | None:
        with self._lock:
            job = self._jobs.get(job_id)
            return None if job is None else IngestJob(**vars(job))

    def image_active(self, image_id: str) -> bool:
        with self._lock:
            return any(
                j.image_id == image_id and j.state not in ("done", "failed")
                for j in self._jobs.values()
            )

    def start(self, image_id: str, runner) -> str:
        """Spawn ``runner(progress_cb)`` on a worker thread; returns job id."""
        job = IngestJob(job_id=uuid.uuid4().hex[:12], image_id=image_id)
        with self._lock:
            self._jobs[job.job_id] = job

        def progress(stage: str, done: int, total: int) -> None:
            with self._lock:
                job.state = stage
                job.tiles_total = max(job.tiles_total, total)
                job.tiles_done = max(job.tiles_done, done)

        def run():
            try:
                runner(progress)
                with self._lock:
                    job.state = "done"
                    job.tiles_done = job.tiles_total
            except Exception as exc:
                with self._lock:
                    job.state = "failed"
                    job.error = str(exc)

        threading.Thread(target=run, daemon=True).start()
        return job.job_id
