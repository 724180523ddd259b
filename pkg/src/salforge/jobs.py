"""Background execution of dataset generation and training.

One worker thread keeps heavy jobs off the request path (and off each
other: desk hardware). Records live in the Store; a queued job that gets
cancelled before the worker picks it up never runs.
"""

from __future__ import annotations

import traceback
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .errors import ConfigurationError, InputError, StateError
from .store import JOB_KINDS, JobRecord, Store

_LOG_LINES = 40


def _require(payload: dict, *keys: str) -> None:
    missing = [k for k in keys if not payload.get(k)]
    if missing:
        raise InputError(f"job payload missing required keys: {missing}")


def _dataset_gen(payload: dict, store: Store, progress, log) -> list[str]:
    from .sampling import generate_dataset, write_dataset

    _require(payload, "corpus_dir", "out_dir")
    count = int(payload.get("count_per_class", 100))
    seed = int(payload.get("rng_seed", 0))
    total = 2 * count

    def counted():
        for i, sample in enumerate(
            generate_dataset(payload["corpus_dir"], count, rng_seed=seed)
        ):
            if (i + 1) % 50 == 0 or i + 1 == total:
                progress((i + 1) / total)
            yield sample

    write_dataset(counted(), payload["out_dir"])
    log.append(f"wrote {total} samples to {payload['out_dir']}")
    return [str(Path(payload["out_dir"]) / "manifest.json")]


def _critic_train(payload: dict, store: Store, progress, log) -> list[str]:
    from .critic import CriticConfig, save_critic, train_critic
    from .report import write_training_report

    _require(payload, "dataset_dir", "out")
    try:
        config = CriticConfig(**payload.get("config", {}))
    except TypeError as exc:
        raise ConfigurationError(f"bad critic config: {exc}") from exc
    model, report = train_critic(payload["dataset_dir"], config, progress=progress)
    out = Path(payload["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_critic(out, model)
    log.append(f"holdout auc {report.final_auc:.3f} after {config.epochs} epochs")
    artifacts = [str(out)]
    report_dir = payload.get("report_dir")
    if report_dir:
        artifacts += [str(p) for p in write_training_report(report, report_dir, "critic")]
    return artifacts


def _estimator_train(payload: dict, store: Store, progress, log) -> list[str]:
    from .config import build_backend
    from .critic import load_critic
    from .estimator import EstimatorConfig, save_estimator, train_estimator
    from .objective import ObjectiveConfig
    from .report import write_training_report

    _require(payload, "corpus_dir", "critic", "out")
    try:
        config = EstimatorConfig(**payload.get("config", {}))
        objective = ObjectiveConfig(**payload.get("objective", {}))
    except TypeError as exc:
        raise ConfigurationError(f"bad estimator config: {exc}") from exc
    critic = load_critic(payload["critic"])
    backend = build_backend(payload.get("saliency", {"backend": "analytic"}))
    model, report = train_estimator(
        payload["corpus_dir"], critic, backend, config, objective, progress=progress
    )
    out = Path(payload["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_estimator(out, model)
    holdout = report.holdout
    log.append(
        f"direction {config.direction}: aligned "
        f"{holdout.get('direction_aligned_fraction', float('nan')):.2f}, "
        f"within margin {holdout.get('within_margin_fraction', float('nan')):.2f}"
    )
    if report.diverged:
        log.append(report.divergence_note)
    artifacts = [str(out)]
    report_dir = payload.get("report_dir")
    if report_dir:
        artifacts += [
            str(p) for p in write_training_report(report, report_dir, "estimator")
        ]
    return artifacts


_HANDLERS = {
    "dataset_gen": _dataset_gen,
    "critic_train": _critic_train,
    "estimator_train": _estimator_train,
}

# every advertised kind must have a handler
assert set(_HANDLERS) == set(JOB_KINDS)

_VALIDATED_KEYS = {
    "dataset_gen": ("corpus_dir", "out_dir"),
    "critic_train": ("dataset_dir", "out"),
    "estimator_train": ("corpus_dir", "critic", "out"),
}


class JobRunner:
    """Submits job records and executes them on a small worker pool."""

    def __init__(self, store: Store, max_workers: int = 1):
        self.store = store
        self._executor = ThreadPoolExecutor(
            max_workers=max_workers, thread_name_prefix="forge-job"
        )

    def submit(self, kind: str, payload: dict) -> JobRecord:
        """Validate the payload shape up front, then queue the work."""
        if kind not in _HANDLERS:
            raise InputError(f"unknown job kind {kind!r}; expected one of {JOB_KINDS}")
        _require(payload, *_VALIDATED_KEYS[kind])
        record = self.store.create_job(kind, payload)
        self._executor.submit(self._run, record.id)
        return record

    def _run(self, job_id: str) -> None:
        job = self.store.get_job(job_id)
        if job.status != "queued":
            return
        try:
            self.store.update_job(job_id, status="running")
        except StateError:
            # cancelled between the status check and the transition
            return
        log: deque = deque(maxlen=_LOG_LINES)

        def progress(fraction: float) -> None:
            self.store.update_job(job_id, progress=min(max(fraction, 0.0), 1.0))

        try:
            artifacts = _HANDLERS[job.kind](job.config, self.store, progress, log)
            self.store.update_job(
                job_id,
                status="done",
                progress=1.0,
                artifacts=artifacts,
                log_tail="\n".join(log),
            )
        except Exception:
            tail = traceback.format_exc().splitlines()[-12:]
            self.store.update_job(
                job_id, status="failed", log_tail="\n".join([*log, *tail])
            )

    def shutdown(self, wait: bool = True) -> None:
        self._executor.shutdown(wait=wait)
