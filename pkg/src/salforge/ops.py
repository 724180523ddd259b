"""Differentiable parametric edit operators applied inside a region mask.

The four operators (exposure, saturation, color curve, white balance) are
implemented once as kernels that accept either numpy arrays or torch tensors,
so the public numpy API and the torch training path share the same math.
Kernels expect channels-last images ``(..., H, W, 3)`` and masks
``(..., H, W)``; parameters may be python scalars or arrays already shaped
for broadcasting (e.g. ``(B, 1, 1, 1)`` for a batch).

Conventions that golden values depend on:

* every operator clamps its edited values to [0, 1] before blending;
* blending is written ``v + m * (edited - v)`` so that fully unmasked pixels
  and identity parameters reproduce the input bit-exactly;
* saturation interpolates against the Rec.601 luma.
"""
from __future__ import annotations

import numpy as np

from .errors import InvalidParameterError, InvalidPlanError
from .types import (
    CANONICAL_OPERATORS,
    EditParams,
    EditPermutation,
    ImageGrid,
    RegionMask,
    check_pair,
    validate_op_value,
)

REC601 = (0.299, 0.587, 0.114)


def _lib(x):
    """numpy or torch, chosen by the array type (torch imported lazily)."""
    if type(x).__module__.split(".")[0] == "torch":
        import torch

        return torch
    return np


def as_tensor(arr, dtype=None):
    """numpy -> torch tensor, copying when the buffer is read-only."""
    import torch

    a = np.asarray(arr)
    if not a.flags.writeable:
        a = a.copy()
    t = torch.from_numpy(a)
    return t.to(dtype) if dtype is not None else t


def _clip01(x):
    return x.clip(0.0, 1.0)


def _blend(img, edited, weights):
    # v + m*(e - v): bit-exact for m == 0 and for edited == v. The outer clip
    # guards against float round-off nudging a convex combination past 1.
    m = weights[..., None]
    return _clip01(img + m * (edited - img))


def _channel_basis(img):
    lib = _lib(img)
    if lib is np:
        eye = np.eye(3, dtype=img.dtype)
    else:
        eye = lib.eye(3, dtype=img.dtype, device=img.device)
    return eye[0], eye[1], eye[2]


def exposure_kernel(img, gain, weights):
    return _blend(img, _clip01(img * gain), weights)


def saturation_kernel(img, sat, weights):
    luma = img[..., 0:1] * REC601[0] + img[..., 1:2] * REC601[1] + img[..., 2:3] * REC601[2]
    # luma*(1-sat) + sat*v rather than luma + sat*(v-luma): identical math,
    # but bit-exact at sat == 1.
    edited = _clip01(luma * (1.0 - sat) + img * sat)
    return _blend(img, edited, weights)


def color_curve_kernel(img, curve, weights):
    lib = _lib(img)
    # v**curve with v == 0 routed around the pow so the exponent gradient
    # stays finite (d 0^p / dp = 0 for p > 0).
    positive = img > 0.0
    safe = lib.where(positive, img, _ones_like(img))
    edited = _clip01(lib.where(positive, safe**curve, _zeros_like(img)))
    return _blend(img, edited, weights)


def white_balance_kernel(img, temp, weights):
    er, eg, eb = _channel_basis(img)
    scale = er * temp + eg + eb * (2.0 - temp)
    return _blend(img, _clip01(img * scale), weights)


def _ones_like(x):
    return _lib(x).ones_like(x)


def _zeros_like(x):
    return _lib(x).zeros_like(x)


KERNELS = {
    "exposure": exposure_kernel,
    "saturation": saturation_kernel,
    "color_curve": color_curve_kernel,
    "white_balance": white_balance_kernel,
}


def compose_kernel(img, weights, order, values):
    """Apply ``order``'s kernels sequentially with parameters from ``values``.

    ``values`` maps operator id -> scalar/array; operators missing from it
    are skipped. Works on numpy arrays and torch tensors alike.
    """
    out = img
    for op in order:
        if op in values:
            out = KERNELS[op](out, values[op], weights)
    return out


# Public, ImageGrid-level API -------------------------------------------------


def apply_exposure(img: ImageGrid, gain: float, mask: RegionMask) -> ImageGrid:
    """Multiplicative gain on all channels inside the mask."""
    check_pair(img, mask)
    gain = validate_op_value("exposure", gain)
    return ImageGrid(exposure_kernel(img.pixels, gain, mask.weights))


def apply_saturation(img: ImageGrid, sat: float, mask: RegionMask) -> ImageGrid:
    """Interpolate (sat < 1) or extrapolate (sat > 1) away from Rec.601 luma."""
    check_pair(img, mask)
    sat = validate_op_value("saturation", sat)
    return ImageGrid(saturation_kernel(img.pixels, sat, mask.weights))


def apply_color_curve(img: ImageGrid, curve: float, mask: RegionMask) -> ImageGrid:
    """Per-channel power curve; 0 and 1 are fixed points."""
    check_pair(img, mask)
    curve = validate_op_value("color_curve", curve)
    return ImageGrid(color_curve_kernel(img.pixels, curve, mask.weights))


def apply_white_balance(img: ImageGrid, temp: float, mask: RegionMask) -> ImageGrid:
    """Scale R by temp and B by (2 - temp); G is untouched."""
    check_pair(img, mask)
    temp = validate_op_value("white_balance", temp)
    return ImageGrid(white_balance_kernel(img.pixels, temp, mask.weights))


APPLY = {
    "exposure": apply_exposure,
    "saturation": apply_saturation,
    "color_curve": apply_color_curve,
    "white_balance": apply_white_balance,
}


def _effective_values(params: EditParams, perm: EditPermutation) -> dict[str, float]:
    values = {}
    for op in perm.order:
        v = getattr(params, op)
        if v is not None:
            values[op] = v
    return values


def compose_edits(
    img: ImageGrid, params: EditParams, perm: EditPermutation, mask: RegionMask
) -> ImageGrid:
    """Apply the permutation's operators in order; skipped operators (params
    value None) are left out. The composition is non-commutative."""
    check_pair(img, mask)
    values = _effective_values(params, perm)
    if not values:
        return img
    return ImageGrid(compose_kernel(img.pixels, mask.weights, perm.order, values))


def gradient_of_composition(
    img: ImageGrid,
    params: EditParams,
    perm: EditPermutation,
    mask: RegionMask,
    cotangent: np.ndarray,
) -> dict[str, float]:
    """Per-parameter gradient of ``sum(cotangent * compose_edits(...))``.

    Runs the shared kernels under torch autograd in float64; matches central
    finite differences away from clamp boundaries.
    """
    import torch

    check_pair(img, mask)
    cot = np.asarray(cotangent, dtype=np.float64)
    if cot.shape != img.pixels.shape:
        raise InvalidPlanError(
            f"cotangent shape {cot.shape} does not match image {img.pixels.shape}"
        )
    values = _effective_values(params, perm)
    t_img = as_tensor(img.pixels, torch.float64)
    t_mask = as_tensor(mask.weights, torch.float64)
    leaves = {
        op: torch.tensor(v, dtype=torch.float64, requires_grad=True)
        for op, v in values.items()
    }
    out = compose_kernel(t_img, t_mask, perm.order, leaves)
    contracted = (out * as_tensor(cot)).sum()
    grads = torch.autograd.grad(contracted, list(leaves.values()), allow_unused=True)
    return {
        op: float(g) if g is not None else 0.0
        for op, g in zip(leaves.keys(), grads)
    }


def random_params(rng: np.random.Generator, perm: EditPermutation, spread: float = 0.2) -> EditParams:
    """Random near-identity parameters for every operator in ``perm``;
    handy for fuzzing clamp-free gradient checks."""
    values = {}
    for op in perm.order:
        values[op] = float(rng.uniform(1.0 - spread, 1.0 + spread))
    return EditParams(**values)
