"""Core value types: images, region masks, edit parameters and permutations."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, InvalidParameterError, InvalidPlanError, ShapeError

#: Operator identifiers in canonical order. Permutations enumerate
#: lexicographically with respect to this tuple.
CANONICAL_OPERATORS: tuple[str, ...] = (
    "exposure",
    "saturation",
    "color_curve",
    "white_balance",
)

MIN_SIDE = 8


def _as_float_array(arr, name: str) -> np.ndarray:
    out = np.asarray(arr)
    if out.dtype not in (np.float32, np.float64):
        out = out.astype(np.float64)
    if not np.isfinite(out).all():
        raise InputError(f"{name} contains non-finite values")
    return out


@dataclass(frozen=True, eq=False)
class ImageGrid:
    """H×W×3 array of intensities in [0, 1]; the unit of all editing.

    The pixel buffer is normalized to float32/float64 and marked read-only so
    instances can be shared freely across threads.
    """

    pixels: np.ndarray

    def __post_init__(self):
        arr = _as_float_array(self.pixels, "pixels")
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ShapeError(f"expected H×W×3 pixels, got shape {arr.shape}")
        if arr.shape[0] < MIN_SIDE or arr.shape[1] < MIN_SIDE:
            raise ShapeError(f"image must be at least {MIN_SIDE}×{MIN_SIDE}, got {arr.shape[:2]}")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise InputError("pixel values must lie in [0, 1]")
        if arr is self.pixels or arr.base is self.pixels:
            arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True, eq=False)
class RegionMask:
    """H×W soft mask in [0, 1] selecting where edits apply.

    ``contains_face`` is dataset metadata (never detected at runtime) and
    switches the fake-sample generator to its face-specific ranges.
    """

    weights: np.ndarray
    contains_face: bool = False
    feather_radius: float = 0.0

    def __post_init__(self):
        arr = _as_float_array(self.weights, "weights")
        if arr.ndim != 2:
            raise ShapeError(f"expected H×W mask, got shape {arr.shape}")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise InputError("mask weights must lie in [0, 1]")
        if arr.max() <= 0.0:
            raise InputError("mask must have at least one positive weight")
        if self.feather_radius < 0:
            raise InvalidParameterError("feather_radius must be non-negative")
        if arr is self.weights or arr.base is self.weights:
            arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "weights", arr)

    def matches(self, img: ImageGrid) -> bool:
        return self.weights.shape == img.pixels.shape[:2]


def check_pair(img: ImageGrid, mask: RegionMask) -> None:
    """Raise ShapeError unless mask and image share a spatial shape."""
    if not mask.matches(img):
        raise ShapeError(
            f"mask shape {mask.weights.shape} does not match image {img.pixels.shape[:2]}"
        )


# Operator validity ranges. White balance must stay below 2 because the blue
# channel is scaled by (2 - temp).
def validate_op_value(op: str, value: float) -> float:
    value = float(value)
    if not np.isfinite(value):
        raise InvalidParameterError(f"{op} must be finite, got {value}")
    if op == "exposure" and value <= 0:
        raise InvalidParameterError(f"exposure gain must be positive, got {value}")
    if op == "saturation" and value < 0:
        raise InvalidParameterError(f"saturation must be non-negative, got {value}")
    if op == "color_curve" and value <= 0:
        raise InvalidParameterError(f"color curve exponent must be positive, got {value}")
    if op == "white_balance" and not 0 < value < 2:
        raise InvalidParameterError(f"white balance must lie in (0, 2), got {value}")
    return value


@dataclass(frozen=True)
class EditParams:
    """Scalar parameters for the four operators; ``None`` marks an operator
    as skipped."""

    exposure: float | None = None
    saturation: float | None = None
    color_curve: float | None = None
    white_balance: float | None = None

    def __post_init__(self):
        for op in CANONICAL_OPERATORS:
            value = getattr(self, op)
            if value is not None:
                object.__setattr__(self, op, validate_op_value(op, value))

    def present(self) -> dict[str, float]:
        """Operators with a value, in canonical order."""
        return {
            op: getattr(self, op)
            for op in CANONICAL_OPERATORS
            if getattr(self, op) is not None
        }

    @classmethod
    def identity(cls) -> "EditParams":
        return cls(exposure=1.0, saturation=1.0, color_curve=1.0, white_balance=1.0)


@dataclass(frozen=True)
class EditPermutation:
    """Order in which operators compose. Operators listed here but absent
    from the paired EditParams are skipped. An empty order is a no-op."""

    order: tuple[str, ...] = ()

    def __post_init__(self):
        order = tuple(self.order)
        for op in order:
            if op not in CANONICAL_OPERATORS:
                raise InvalidPlanError(f"unknown operator {op!r}")
        if len(set(order)) != len(order):
            raise InvalidPlanError(f"duplicate operator in permutation {order}")
        object.__setattr__(self, "order", order)

    def __len__(self) -> int:
        return len(self.order)

    @classmethod
    def canonical(cls) -> "EditPermutation":
        return cls(CANONICAL_OPERATORS)


def all_full_permutations() -> list[EditPermutation]:
    """The 24 length-4 permutations in canonical (lexicographic) order."""
    return [EditPermutation(p) for p in itertools.permutations(CANONICAL_OPERATORS)]


def edit_to_json(perm: EditPermutation, params: EditParams) -> dict:
    """Serialize a (permutation, params) pair to one JSON object."""
    out: dict = {"order": list(perm.order)}
    out.update(params.present())
    return out


def edit_from_json(obj: dict) -> tuple[EditPermutation, EditParams]:
    if "order" not in obj:
        raise InvalidPlanError("edit object missing 'order'")
    perm = EditPermutation(tuple(obj["order"]))
    values = {op: obj[op] for op in CANONICAL_OPERATORS if op in obj}
    return perm, EditParams(**values)


@dataclass(frozen=True)
class TrainingSample:
    """One (base, mask, edited) triple emitted by the sample generator."""

    base: ImageGrid
    mask: RegionMask
    edited: ImageGrid
    label: str  # "real" | "fake"
    perm: EditPermutation
    params: EditParams
    rng_seed: int = 0

    def __post_init__(self):
        if self.label not in ("real", "fake"):
            raise InputError(f"label must be 'real' or 'fake', got {self.label!r}")


@dataclass
class EditStep:
    """Replayable record of one region edit plus its diagnostics.

    ``mask_ref`` points at the mask by path or content hash; the raw weights
    are not embedded so plans stay small. ``candidates`` holds the 24
    per-permutation evaluations logged by the best_* strategies.
    """

    mask_ref: str
    direction: str  # "attenuate" | "amplify"
    strategy: str
    perm: EditPermutation
    params: EditParams
    r_pre: float
    r_post: float
    delta_r: float
    s_change: float
    sal_pre_mean: float
    sal_post_mean: float
    candidates: list[dict] | None = None

    def to_json(self) -> dict:
        out = {
            "mask_ref": self.mask_ref,
            "direction": self.direction,
            "strategy": self.strategy,
            "edit": edit_to_json(self.perm, self.params),
            "r_pre": self.r_pre,
            "r_post": self.r_post,
            "delta_r": self.delta_r,
            "s_change": self.s_change,
            "sal_pre_mean": self.sal_pre_mean,
            "sal_post_mean": self.sal_post_mean,
        }
        if self.candidates is not None:
            out["candidates"] = self.candidates
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "EditStep":
        perm, params = edit_from_json(obj["edit"])
        return cls(
            mask_ref=obj["mask_ref"],
            direction=obj["direction"],
            strategy=obj.get("strategy", "random"),
            perm=perm,
            params=params,
            r_pre=obj.get("r_pre", 0.0),
            r_post=obj.get("r_post", 0.0),
            delta_r=obj.get("delta_r", 0.0),
            s_change=obj.get("s_change", 0.0),
            sal_pre_mean=obj.get("sal_pre_mean", 0.0),
            sal_post_mean=obj.get("sal_post_mean", 0.0),
            candidates=obj.get("candidates"),
        )


PLAN_VERSION = 1


@dataclass
class EditPlan:
    """Ordered multi-region edit record; replays bit-exactly from JSON."""

    source_ref: str
    steps: list[EditStep] = field(default_factory=list)
    rng_seed: int = 0
    version: int = PLAN_VERSION

    def to_json(self) -> dict:
        return {
            "version": self.version,
            "source_ref": self.source_ref,
            "rng_seed": self.rng_seed,
            "steps": [s.to_json() for s in self.steps],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EditPlan":
        version = obj.get("version", PLAN_VERSION)
        if version != PLAN_VERSION:
            raise InvalidPlanError(f"unsupported plan version {version}")
        return cls(
            source_ref=obj.get("source_ref", ""),
            steps=[EditStep.from_json(s) for s in obj.get("steps", [])],
            rng_seed=obj.get("rng_seed", 0),
            version=version,
        )
