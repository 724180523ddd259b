"""Single- and multi-region editing on top of the trained models.

Strategies follow the three selection modes of the evaluation protocol:
a random permutation, the permutation with the best saliency shift, or the
one the critic likes most. Multi-region plans apply steps sequentially so
later steps see earlier edits; replay reproduces outputs bit-exactly.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter

from . import ops
from .critic import RealismCritic, score
from .errors import (
    ConfigurationError,
    ForgeError,
    InputError,
    InvalidParameterError,
    InvalidPlanError,
    PlanExecutionError,
    StateError,
)
from .estimator import ParamEstimator, estimate_params
from .io import image_hash, mask_hash
from .objective import ObjectiveConfig
from .saliency import masked_mean, predict, relative_saliency_change
from .types import (
    EditParams,
    EditPlan,
    EditPermutation,
    EditStep,
    ImageGrid,
    RegionMask,
    all_full_permutations,
    check_pair,
    validate_op_value,
)

logger = logging.getLogger(__name__)

STRATEGIES = ("random", "best_saliency", "best_realism")

_HASH_RE = re.compile(r"^[0-9a-f]{64}$")


@dataclass
class ModelBundle:
    """Everything edit_region needs: critic, per-direction estimators,
    saliency backend, and the objective settings."""

    critic: RealismCritic
    estimators: dict[str, ParamEstimator] = field(default_factory=dict)
    backend: object = None
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)

    def estimator_for(self, direction: str) -> ParamEstimator:
        model = self.estimators.get(direction)
        if model is None:
            raise StateError(f"no estimator loaded for direction {direction!r}")
        if model.config.direction != direction:
            raise StateError(
                f"estimator trained for {model.config.direction!r} "
                f"cannot serve direction {direction!r}"
            )
        return model


@dataclass
class EditResult:
    step: EditStep
    image: ImageGrid


@dataclass
class PlanResult:
    plan: EditPlan
    image: ImageGrid


def _evaluate_candidate(img, mask, perm, params, bundle):
    edited = ops.compose_edits(img, params, perm, mask)
    s = relative_saliency_change(img, edited, mask, bundle.backend)
    dr = score(edited, mask, bundle.critic) - score(img, mask, bundle.critic)
    return edited, s, dr


def edit_region(
    img: ImageGrid,
    mask: RegionMask,
    direction: str,
    strategy: str,
    models: ModelBundle,
    rng_seed: int = 0,
) -> EditResult:
    """Estimate and apply one regional edit.

    random draws one permutation uniformly; best_saliency and best_realism
    evaluate all 24 full orders and pick the argmax of direction-aligned S
    or of dR respectively, ties falling to the lowest canonical index. The
    best_* candidates are kept on the returned step for inspection.
    """
    check_pair(img, mask)
    if strategy not in STRATEGIES:
        raise ConfigurationError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if models.backend is None:
        raise StateError("model bundle has no saliency backend")
    estimator = models.estimator_for(direction)

    perms = all_full_permutations()
    candidates = None
    if strategy == "random":
        rng = np.random.default_rng(rng_seed)
        chosen = int(rng.integers(len(perms)))
        perm = perms[chosen]
        params = estimate_params(img, mask, perm, estimator)
        edited, s_change, delta_r = _evaluate_candidate(img, mask, perm, params, models)
    else:
        evals = []
        for idx, perm in enumerate(perms):
            params = estimate_params(img, mask, perm, estimator)
            edited, s, dr = _evaluate_candidate(img, mask, perm, params, models)
            evals.append((perm, params, edited, s, dr))
        if strategy == "best_saliency":
            keyed = [e[3] for e in evals]
            # attenuate wants the largest drop, amplify the largest gain
            chosen = int(np.argmax(keyed)) if direction == "attenuate" else int(np.argmin(keyed))
        else:
            chosen = int(np.argmax([e[4] for e in evals]))
        perm, params, edited, s_change, delta_r = evals[chosen]
        candidates = [
            {
                "index": i,
                "perm": list(e[0].order),
                "params": e[1].present(),
                "s": float(e[3]),
                "delta_r": float(e[4]),
            }
            for i, e in enumerate(evals)
        ]

    sal_pre = predict(img, models.backend)
    sal_post = predict(edited, models.backend)
    step = EditStep(
        mask_ref=mask_hash(mask),
        direction=direction,
        strategy=strategy,
        perm=perm,
        params=params,
        r_pre=score(img, mask, models.critic),
        r_post=score(edited, mask, models.critic),
        delta_r=float(delta_r),
        s_change=float(s_change),
        sal_pre_mean=masked_mean(sal_pre.values, mask.weights),
        sal_post_mean=masked_mean(sal_post.values, mask.weights),
        candidates=candidates,
    )
    return EditResult(step=step, image=edited)


def _child_seed(rng_seed: int, index: int) -> int:
    return int(np.random.SeedSequence((rng_seed, index)).generate_state(1)[0])


def edit_multi(
    img: ImageGrid,
    plan_spec: list[tuple[RegionMask, str]],
    strategy: str,
    models: ModelBundle,
    rng_seed: int = 0,
) -> PlanResult:
    """Apply edit_region over a list of (mask, direction) pairs in order.

    Each step edits the previous step's output. A failing step aborts with
    PlanExecutionError carrying the completed prefix for inspection.
    """
    plan = EditPlan(source_ref=image_hash(img), rng_seed=rng_seed)
    current = img
    for i, (mask, direction) in enumerate(plan_spec):
        try:
            result = edit_region(
                current, mask, direction, strategy, models, _child_seed(rng_seed, i)
            )
        except ForgeError as exc:
            raise PlanExecutionError(
                f"step {i} ({direction}) failed: {exc}",
                partial_plan=plan,
                failed_index=i,
            ) from exc
        plan.steps.append(result.step)
        current = result.image
    return PlanResult(plan=plan, image=current)


def replay_plan(img: ImageGrid, plan: EditPlan, masks) -> ImageGrid:
    """Re-run a plan's recorded edits through the same compose path.

    ``masks`` maps each step's mask_ref to a RegionMask (a dict or a
    callable). Hash-shaped references are verified against the resolved
    mask and against the source image.
    """
    if _HASH_RE.match(plan.source_ref) and image_hash(img) != plan.source_ref:
        raise InvalidPlanError("source image does not match the plan's source_ref")
    resolve = masks.get if hasattr(masks, "get") else masks
    current = img
    for i, step in enumerate(plan.steps):
        mask = resolve(step.mask_ref)
        if mask is None:
            raise InvalidPlanError(f"step {i}: no mask for reference {step.mask_ref!r}")
        if _HASH_RE.match(step.mask_ref) and mask_hash(mask) != step.mask_ref:
            raise InvalidPlanError(f"step {i}: mask does not match its reference")
        check_pair(current, mask)
        current = ops.compose_edits(current, step.params, step.perm, mask)
    return current


@dataclass(frozen=True)
class HeatmapResult:
    """dR over a 2-D grid of additive offsets applied to two parameters.

    Cells whose perturbed value leaves the operator's validity range are
    NaN rather than clamped. The zero-offset cell sits at ``center``.
    """

    param_rows: str
    param_cols: str
    offsets_rows: tuple[float, ...]
    offsets_cols: tuple[float, ...]
    delta_r: np.ndarray

    @property
    def center(self) -> tuple[int, int]:
        return (
            int(np.argmin(np.abs(np.asarray(self.offsets_rows)))),
            int(np.argmin(np.abs(np.asarray(self.offsets_cols)))),
        )

    def center_in_top_quartile(self) -> bool:
        valid = self.delta_r[np.isfinite(self.delta_r)]
        center = self.delta_r[self.center]
        if not np.isfinite(center):
            return False
        return float((valid > center).sum()) < valid.size / 4.0


DEFAULT_HEATMAP_OFFSETS = tuple(np.linspace(-0.5, 0.5, 5))


def optimality_heatmap(
    img: ImageGrid,
    mask: RegionMask,
    step: EditStep,
    critic: RealismCritic,
    params: tuple[str, str] = ("saturation", "exposure"),
    offsets_rows=None,
    offsets_cols=None,
) -> HeatmapResult:
    """Perturb two of the step's parameters additively and score each cell.

    ``img`` must be the step's pre-image so the center cell reproduces the
    recorded dR exactly.
    """
    check_pair(img, mask)
    present = step.params.present()
    row_p, col_p = params
    for name in (row_p, col_p):
        if name not in present:
            raise InvalidPlanError(f"step has no {name!r} parameter to perturb")
    rows = tuple(float(v) for v in (DEFAULT_HEATMAP_OFFSETS if offsets_rows is None else offsets_rows))
    cols = tuple(float(v) for v in (DEFAULT_HEATMAP_OFFSETS if offsets_cols is None else offsets_cols))
    if not rows or not cols:
        raise InputError("offset grids must be non-empty")

    base = score(img, mask, critic)
    grid = np.full((len(rows), len(cols)), np.nan)
    for i, dr_ in enumerate(rows):
        for j, dc in enumerate(cols):
            vals = dict(present)
            vals[row_p] = present[row_p] + dr_
            vals[col_p] = present[col_p] + dc
            try:
                for op, v in vals.items():
                    validate_op_value(op, v)
                perturbed = EditParams(**vals)
            except InvalidParameterError:
                continue
            edited = ops.compose_edits(img, perturbed, step.perm, mask)
            grid[i, j] = score(edited, mask, critic) - base
    return HeatmapResult(
        param_rows=row_p,
        param_cols=col_p,
        offsets_rows=rows,
        offsets_cols=cols,
        delta_r=grid,
    )


def feather_mask(mask: RegionMask, radius: int) -> RegionMask:
    """Box-blur the mask weights to soften the edit boundary.

    Radius 0 returns the mask unchanged. The blur keeps weights in [0, 1]
    and spreads any hard edge over a 2*radius+1 ramp, which removes the
    slope jump of the composed edit at the old boundary.
    """
    radius = int(radius)
    if radius < 0:
        raise InvalidParameterError("feather radius must be >= 0")
    if radius == 0:
        return mask
    blurred = uniform_filter(mask.weights, size=2 * radius + 1, mode="nearest")
    return RegionMask(
        weights=np.clip(blurred, 0.0, 1.0),
        contains_face=mask.contains_face,
        feather_radius=float(radius),
    )
