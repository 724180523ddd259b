"""HTTP face of the editor: scoring, saliency, estimation, one-shot edits,
undoable sessions, and background training jobs.

Images and masks arrive either as base64 PNG strings in a JSON body or as
multipart file uploads; both are accepted on every image endpoint. Domain
errors map onto machine-readable {"error": {"code", "message"}} payloads.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import __version__
from .config import ForgeConfig, load_bundle
from .critic import score
from .errors import (
    CheckpointError,
    ConfigurationError,
    ForgeError,
    InputError,
    InvalidParameterError,
    InvalidPlanError,
    ModeError,
    NotFoundError,
    PlanExecutionError,
    SessionConflictError,
    ShapeError,
    StateError,
    TrainingError,
)
from .estimator import estimate_params
from .io import (
    b64_encode,
    image_from_b64,
    image_from_png_bytes,
    image_hash,
    image_to_b64,
    mask_from_b64,
    mask_from_png_bytes,
    saliency_to_png_bytes,
)
from .jobs import JobRunner
from .pipeline import edit_region, replay_plan
from .saliency import predict
from .store import Store
from .types import EditPermutation, EditPlan, ImageGrid, RegionMask

_ERROR_STATUS = {
    ShapeError: (422, "shape_mismatch"),
    InvalidParameterError: (422, "invalid_parameter"),
    InvalidPlanError: (422, "invalid_plan"),
    InputError: (422, "invalid_input"),
    ConfigurationError: (422, "invalid_configuration"),
    ModeError: (422, "invalid_mode"),
    PlanExecutionError: (422, "plan_execution_failed"),
    NotFoundError: (404, "not_found"),
    SessionConflictError: (409, "session_busy"),
    StateError: (409, "state_conflict"),
    CheckpointError: (500, "checkpoint_error"),
    TrainingError: (500, "training_error"),
}


def _classify(exc: ForgeError) -> tuple[int, str]:
    for cls in type(exc).__mro__:
        if cls in _ERROR_STATUS:
            return _ERROR_STATUS[cls]
    return 500, "internal_error"


class _SessionLocks:
    """Per-session non-blocking mutual exclusion (one in-flight step)."""

    def __init__(self):
        self._guard = threading.Lock()
        self._locks: dict[str, threading.Lock] = {}

    @contextmanager
    def hold(self, session_id: str):
        with self._guard:
            lock = self._locks.setdefault(session_id, threading.Lock())
        if not lock.acquire(blocking=False):
            raise SessionConflictError(f"session {session_id} has a step in flight")
        try:
            yield
        finally:
            lock.release()


async def _read_image_and_mask(request: Request):
    """Pull (image, mask, fields) out of a JSON or multipart request body."""
    content_type = request.headers.get("content-type", "")
    img = mask = None
    payload: dict = {}
    if content_type.startswith("multipart/"):
        form = await request.form()
        payload = {k: v for k, v in form.items() if isinstance(v, str)}
        if "image" in form and not isinstance(form["image"], str):
            img = image_from_png_bytes(await form["image"].read())
        if "mask" in form and not isinstance(form["mask"], str):
            mask = mask_from_png_bytes(await form["mask"].read())
    else:
        try:
            payload = await request.json()
        except Exception as exc:
            raise InputError(f"request body is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise InputError("JSON body must be an object")
    if img is None and payload.get("image"):
        img = image_from_b64(payload["image"])
    if mask is None and payload.get("mask"):
        mask = mask_from_b64(payload["mask"])
    return img, mask, payload


def _require_image(img) -> ImageGrid:
    if img is None:
        raise InputError("request is missing an image")
    return img


def _require_mask(mask) -> RegionMask:
    if mask is None:
        raise InputError("request is missing a mask")
    return mask


def _perm_from_payload(payload: dict) -> EditPermutation:
    order = payload.get("perm")
    if order is None:
        return EditPermutation.canonical()
    return EditPermutation(tuple(order))


def _direction_from_payload(payload: dict) -> str:
    # nonsense direction is the caller's error (422); a known direction with
    # no model loaded stays a state conflict (409)
    direction = payload.get("direction", "attenuate")
    if direction not in ("attenuate", "amplify"):
        raise InputError(f"direction must be 'attenuate' or 'amplify', got {direction!r}")
    return direction


def create_app(
    config: ForgeConfig | None = None,
    bundle=None,
    store: Store | None = None,
    runner: JobRunner | None = None,
) -> FastAPI:
    """Build the service; pass pre-built collaborators in tests."""
    config = config or ForgeConfig()
    if bundle is None:
        bundle = load_bundle(config)
    if store is None:
        config.home.mkdir(parents=True, exist_ok=True)
        store = Store(config.home)
    if runner is None:
        runner = JobRunner(store)
    locks = _SessionLocks()
    app = FastAPI(title="salforge", version=__version__)
    app.state.bundle = bundle
    app.state.store = store
    app.state.runner = runner

    @app.exception_handler(ForgeError)
    async def forge_error_handler(request: Request, exc: ForgeError):
        status, code = _classify(exc)
        return JSONResponse(
            status_code=status,
            content={"error": {"code": code, "message": str(exc)}},
        )

    def _critic():
        if bundle.critic is None:
            raise StateError("no critic checkpoint configured")
        return bundle.critic

    def _backend():
        if bundle.backend is None:
            raise StateError("no saliency backend configured")
        return bundle.backend

    # ---- inference -------------------------------------------------------

    @app.get("/healthz")
    async def healthz():
        estimators = {
            direction: {
                "resolution": model.config.resolution,
                "param_count": model.param_count(),
            }
            for direction, model in bundle.estimators.items()
        }
        return {
            "status": "ok",
            "version": __version__,
            "models": {
                "critic": None
                if bundle.critic is None
                else {"resolution": bundle.critic.config.resolution},
                "estimators": estimators,
            },
            "saliency": getattr(bundle.backend, "identifier", None),
        }

    @app.post("/score_realism")
    async def score_realism(request: Request):
        img, mask, _ = await _read_image_and_mask(request)
        return {"r": score(_require_image(img), _require_mask(mask), _critic())}

    @app.post("/saliency")
    async def saliency_endpoint(request: Request):
        img, _, _ = await _read_image_and_mask(request)
        sal = predict(_require_image(img), _backend())
        return {
            "saliency_png": b64_encode(saliency_to_png_bytes(sal)),
            "min": float(sal.values.min()),
            "max": float(sal.values.max()),
        }

    @app.post("/estimate")
    async def estimate(request: Request):
        img, mask, payload = await _read_image_and_mask(request)
        direction = _direction_from_payload(payload)
        perm = _perm_from_payload(payload)
        params = estimate_params(
            _require_image(img),
            _require_mask(mask),
            perm,
            bundle.estimator_for(direction),
        )
        return {"direction": direction, "perm": list(perm.order), "params": params.present()}

    @app.post("/edit")
    async def edit(request: Request):
        img, mask, payload = await _read_image_and_mask(request)
        result = edit_region(
            _require_image(img),
            _require_mask(mask),
            _direction_from_payload(payload),
            payload.get("strategy", "random"),
            bundle,
            rng_seed=int(payload.get("seed", 0)),
        )
        return {
            "step": result.step.to_json(),
            "edited": image_to_b64(result.image),
        }

    # ---- sessions ----------------------------------------------------------

    def _session_image(record, upto: int | None = None) -> ImageGrid:
        """Current (or prefix) image rebuilt by replaying the stored plan."""
        source = store.get_image(record.source_ref)
        count = record.active_steps if upto is None else upto
        prefix = record.plan.steps[:count]
        if not prefix:
            return source
        partial = EditPlan(
            source_ref=record.plan.source_ref,
            steps=list(prefix),
            rng_seed=record.plan.rng_seed,
        )
        return replay_plan(source, partial, store.get_mask)

    def _session_payload(record) -> dict:
        current = _session_image(record)
        return {
            **record.to_json(),
            "current_ref": image_hash(current),
            "current_png": image_to_b64(current),
        }

    @app.post("/sessions")
    async def create_session(request: Request):
        img, _, _ = await _read_image_and_mask(request)
        record = store.create_session(_require_image(img))
        return _session_payload(record)

    @app.get("/sessions/{session_id}")
    async def get_session(session_id: str):
        return _session_payload(store.get_session(session_id))

    @app.post("/sessions/{session_id}/step")
    async def session_step(session_id: str, request: Request):
        store.get_session(session_id)  # 404 before any payload validation
        _, mask, payload = await _read_image_and_mask(request)
        mask = _require_mask(mask)
        with locks.hold(session_id):
            record = store.get_session(session_id)
            current = _session_image(record)
            result = edit_region(
                current,
                mask,
                _direction_from_payload(payload),
                payload.get("strategy", "random"),
                bundle,
                rng_seed=int(payload.get("seed", 0)),
            )
            store.put_mask(mask)
            # stepping after undo drops the inactive tail (linear history)
            record.plan.steps = record.plan.steps[: record.active_steps]
            record.plan.steps.append(result.step)
            record.active_steps = len(record.plan.steps)
            store.update_session(record)
            sal_pre = predict(current, _backend())
            sal_post = predict(result.image, _backend())
            return {
                "step": result.step.to_json(),
                "active_steps": record.active_steps,
                "current_ref": image_hash(result.image),
                "preview_png": image_to_b64(result.image),
                "saliency_pre_png": b64_encode(saliency_to_png_bytes(sal_pre)),
                "saliency_post_png": b64_encode(saliency_to_png_bytes(sal_post)),
                "delta_r": result.step.delta_r,
                "s_change": result.step.s_change,
            }

    @app.post("/sessions/{session_id}/undo")
    async def session_undo(session_id: str):
        with locks.hold(session_id):
            record = store.get_session(session_id)
            if record.active_steps == 0:
                raise StateError("nothing to undo")
            record.active_steps -= 1
            store.update_session(record)
            current = _session_image(record)
            return {
                "active_steps": record.active_steps,
                "current_ref": image_hash(current),
                "current_png": image_to_b64(current),
            }

    # ---- jobs --------------------------------------------------------------

    @app.post("/jobs")
    async def create_job(request: Request):
        try:
            payload = await request.json()
        except Exception as exc:
            raise InputError(f"request body is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict) or "kind" not in payload:
            raise InputError('job request must be an object with "kind" and "config"')
        record = runner.submit(payload["kind"], payload.get("config", {}))
        return record.to_json()

    @app.get("/jobs/{job_id}")
    async def get_job(job_id: str):
        return store.get_job(job_id).to_json()

    @app.post("/jobs/{job_id}/cancel")
    async def cancel_job(job_id: str):
        cancelled = store.try_cancel(job_id)
        return {"cancelled": cancelled, **store.get_job(job_id).to_json()}

    return app


def serve(config: ForgeConfig) -> None:  # pragma: no cover - thin wrapper
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port)
