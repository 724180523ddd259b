"""Single-file sqlite persistence for sessions and jobs plus a
content-addressed artifact directory for images, masks, and previews."""

from __future__ import annotations

import json
import sqlite3
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .errors import (
    InputError,
    JobNotFoundError,
    SessionNotFoundError,
    StateError,
)
from .io import (
    image_from_png_bytes,
    image_hash,
    image_to_png_bytes,
    mask_from_png_bytes,
    mask_hash,
    mask_to_png_bytes,
)
from .types import EditPlan, ImageGrid, RegionMask

JOB_KINDS = ("critic_train", "estimator_train", "dataset_gen")
JOB_STATUSES = ("queued", "running", "done", "failed", "cancelled")
# terminal states have no successors; cancelled is reachable only from queued
_TRANSITIONS = {
    "queued": {"running", "cancelled", "failed"},
    "running": {"done", "failed"},
    "done": set(),
    "failed": set(),
    "cancelled": set(),
}

_SCHEMA = """
CREATE TABLE IF NOT EXISTS sessions (
    id TEXT PRIMARY KEY,
    source_ref TEXT NOT NULL,
    plan_json TEXT NOT NULL,
    active_steps INTEGER NOT NULL,
    created_at TEXT NOT NULL,
    updated_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS jobs (
    id TEXT PRIMARY KEY,
    kind TEXT NOT NULL,
    status TEXT NOT NULL,
    progress REAL NOT NULL,
    config_json TEXT NOT NULL,
    artifacts_json TEXT NOT NULL,
    log_tail TEXT NOT NULL,
    created_at TEXT NOT NULL,
    updated_at TEXT NOT NULL
);
"""


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class SessionRecord:
    id: str
    source_ref: str
    plan: EditPlan
    active_steps: int
    created_at: str
    updated_at: str

    def active(self) -> list:
        return self.plan.steps[: self.active_steps]

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "source_ref": self.source_ref,
            "plan": self.plan.to_json(),
            "active_steps": self.active_steps,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }


@dataclass
class JobRecord:
    id: str
    kind: str
    status: str
    progress: float
    config: dict
    artifacts: list = field(default_factory=list)
    log_tail: str = ""
    created_at: str = ""
    updated_at: str = ""

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "status": self.status,
            "progress": self.progress,
            "config": self.config,
            "artifacts": self.artifacts,
            "log_tail": self.log_tail,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }


class Store:
    """Sessions/jobs in sqlite; binary artifacts on disk next to it.

    All sqlite access funnels through one connection guarded by a lock, so
    the store is safe to share between request handlers and the job worker.
    """

    def __init__(self, home):
        self.home = Path(home)
        self.artifacts = self.home / "artifacts"
        for sub in ("images", "masks", "blobs"):
            (self.artifacts / sub).mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._conn = sqlite3.connect(self.home / "forge.db", check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        with self._lock, self._conn:
            self._conn.executescript(_SCHEMA)

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    # ---- artifacts -------------------------------------------------------

    def put_image(self, img: ImageGrid) -> str:
        ref = image_hash(img)
        path = self.artifacts / "images" / f"{ref}.png"
        if not path.exists():
            path.write_bytes(image_to_png_bytes(img))
        return ref

    def get_image(self, ref: str) -> ImageGrid:
        path = self.artifacts / "images" / f"{ref}.png"
        if not path.exists():
            raise InputError(f"no stored image for reference {ref!r}")
        return image_from_png_bytes(path.read_bytes())

    def put_mask(self, mask: RegionMask) -> str:
        ref = mask_hash(mask)
        path = self.artifacts / "masks" / f"{ref}.png"
        if not path.exists():
            path.write_bytes(mask_to_png_bytes(mask))
        return ref

    def get_mask(self, ref: str) -> RegionMask:
        path = self.artifacts / "masks" / f"{ref}.png"
        if not path.exists():
            raise InputError(f"no stored mask for reference {ref!r}")
        return mask_from_png_bytes(path.read_bytes())

    def put_blob(self, data: bytes, suffix: str = ".bin") -> Path:
        import hashlib

        digest = hashlib.sha256(data).hexdigest()
        path = self.artifacts / "blobs" / f"{digest}{suffix}"
        if not path.exists():
            path.write_bytes(data)
        return path

    # ---- sessions --------------------------------------------------------

    def create_session(self, img: ImageGrid) -> SessionRecord:
        ref = self.put_image(img)
        now = _now()
        record = SessionRecord(
            id=uuid.uuid4().hex,
            source_ref=ref,
            plan=EditPlan(source_ref=ref),
            active_steps=0,
            created_at=now,
            updated_at=now,
        )
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT INTO sessions VALUES (?, ?, ?, ?, ?, ?)",
                (record.id, ref, json.dumps(record.plan.to_json()), 0, now, now),
            )
        return record

    def get_session(self, session_id: str) -> SessionRecord:
        with self._lock:
            row = self._conn.execute(
                "SELECT * FROM sessions WHERE id = ?", (session_id,)
            ).fetchone()
        if row is None:
            raise SessionNotFoundError(f"no session {session_id!r}")
        return SessionRecord(
            id=row["id"],
            source_ref=row["source_ref"],
            plan=EditPlan.from_json(json.loads(row["plan_json"])),
            active_steps=row["active_steps"],
            created_at=row["created_at"],
            updated_at=row["updated_at"],
        )

    def update_session(self, record: SessionRecord) -> None:
        record.updated_at = _now()
        with self._lock, self._conn:
            cur = self._conn.execute(
                "UPDATE sessions SET plan_json = ?, active_steps = ?, updated_at = ? "
                "WHERE id = ?",
                (
                    json.dumps(record.plan.to_json()),
                    record.active_steps,
                    record.updated_at,
                    record.id,
                ),
            )
        if cur.rowcount == 0:
            raise SessionNotFoundError(f"no session {record.id!r}")

    # ---- jobs ------------------------------------------------------------

    def create_job(self, kind: str, config: dict) -> JobRecord:
        if kind not in JOB_KINDS:
            raise InputError(f"unknown job kind {kind!r}; expected one of {JOB_KINDS}")
        now = _now()
        record = JobRecord(
            id=uuid.uuid4().hex,
            kind=kind,
            status="queued",
            progress=0.0,
            config=dict(config),
            created_at=now,
            updated_at=now,
        )
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT INTO jobs VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)",
                (record.id, kind, "queued", 0.0, json.dumps(record.config), "[]", "", now, now),
            )
        return record

    def get_job(self, job_id: str) -> JobRecord:
        with self._lock:
            row = self._conn.execute("SELECT * FROM jobs WHERE id = ?", (job_id,)).fetchone()
        if row is None:
            raise JobNotFoundError(f"no job {job_id!r}")
        return JobRecord(
            id=row["id"],
            kind=row["kind"],
            status=row["status"],
            progress=row["progress"],
            config=json.loads(row["config_json"]),
            artifacts=json.loads(row["artifacts_json"]),
            log_tail=row["log_tail"],
            created_at=row["created_at"],
            updated_at=row["updated_at"],
        )

    def update_job(
        self,
        job_id: str,
        status: str | None = None,
        progress: float | None = None,
        artifacts: list | None = None,
        log_tail: str | None = None,
    ) -> JobRecord:
        """Apply field updates under the forward-only transition rule."""
        with self._lock, self._conn:
            row = self._conn.execute(
                "SELECT status FROM jobs WHERE id = ?", (job_id,)
            ).fetchone()
            if row is None:
                raise JobNotFoundError(f"no job {job_id!r}")
            current = row["status"]
            if not _TRANSITIONS[current]:
                raise StateError(f"job in terminal state {current!r} is immutable")
            if status is not None and status != current:
                if status not in JOB_STATUSES:
                    raise InputError(f"unknown job status {status!r}")
                if status not in _TRANSITIONS[current]:
                    raise StateError(f"job cannot move from {current!r} to {status!r}")
            sets, args = ["updated_at = ?"], [_now()]
            for column, value in (
                ("status", status),
                ("progress", progress),
                ("artifacts_json", None if artifacts is None else json.dumps(artifacts)),
                ("log_tail", log_tail),
            ):
                if value is not None:
                    sets.append(f"{column} = ?")
                    args.append(value)
            args.append(job_id)
            self._conn.execute(f"UPDATE jobs SET {', '.join(sets)} WHERE id = ?", args)
        return self.get_job(job_id)

    def try_cancel(self, job_id: str) -> bool:
        """Cancel a queued job; running/terminal jobs are left alone."""
        with self._lock, self._conn:
            cur = self._conn.execute(
                "UPDATE jobs SET status = 'cancelled', updated_at = ? "
                "WHERE id = ? AND status = 'queued'",
                (_now(), job_id),
            )
            if cur.rowcount:
                return True
            exists = self._conn.execute(
                "SELECT 1 FROM jobs WHERE id = ?", (job_id,)
            ).fetchone()
        if exists is None:
            raise JobNotFoundError(f"no job {job_id!r}")
        return False
