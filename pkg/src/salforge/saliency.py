"""Pluggable saliency prediction plus the relative-change metric and its
exponential loss.

Two backends ship: a built-in analytic proxy (differentiable, deterministic,
no weights) and an adapter that loads any TorchScript saliency model. Both
expose ``saliency_tensor`` for the differentiable training path and are
wrapped by :func:`predict` for the numpy API.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CheckpointError, ConfigurationError, InputError, ShapeError
from .ops import REC601, as_tensor
from .types import ImageGrid, RegionMask

#: Loss weights per editing direction: attenuation rewards positive relative
#: change (region got less salient), amplification rewards negative change.
W_SAL = {"attenuate": -1.0, "amplify": 5.0}

#: Guard added to the relative-change denominator; saliency maps may be zero.
EPS_RELATIVE = 1e-6


@dataclass(frozen=True, eq=False)
class SaliencyMap:
    """Non-negative per-pixel attention heatmap."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeError(f"expected H×W saliency map, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise InputError("saliency map contains non-finite values")
        if arr.min() < 0:
            raise InputError("saliency map must be non-negative")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)


def _box_filter(x, radius: int):
    """Separable mean filter with replicate padding; x is (B, 1, H, W)."""
    import torch
    import torch.nn.functional as F

    h, w = x.shape[-2], x.shape[-1]
    r = min(radius, h - 1, w - 1)
    if r <= 0:
        return x
    k = 2 * r + 1
    pad = F.pad(x, (r, r, r, r), mode="replicate")
    kv = torch.full((1, 1, k, 1), 1.0 / k, dtype=x.dtype, device=x.device)
    kh = torch.full((1, 1, 1, k), 1.0 / k, dtype=x.dtype, device=x.device)
    return F.conv2d(F.conv2d(pad, kv), kh)


class AnalyticSaliency:
    """Center-surround contrast of luma plus local chroma magnitude.

    Contrast is the absolute difference of two box-filtered luma maps
    (radii 2 and 8), Weber-normalized by the surround. The base level keeps
    relative-change denominators well conditioned on near-flat regions and
    sets a floor on how far edits can push a region's saliency down.
    """

    identifier = "analytic"
    differentiable = True

    def __init__(self, center_radius: int = 2, surround_radius: int = 8,
                 base_level: float = 0.01):
        if center_radius < 1 or surround_radius <= center_radius:
            raise ConfigurationError("need 1 <= center_radius < surround_radius")
        if not (0.0 < base_level < 1.0):
            raise ConfigurationError("base_level must lie in (0, 1)")
        self.center_radius = int(center_radius)
        self.surround_radius = int(surround_radius)
        self.base_level = float(base_level)

    def saliency_tensor(self, img):
        """img: (..., H, W, 3) torch tensor in [0,1] -> (..., H, W) map."""
        batched = img.dim() == 4
        x = img if batched else img[None]
        luma = (
            x[..., 0] * REC601[0] + x[..., 1] * REC601[1] + x[..., 2] * REC601[2]
        )
        # sqrt(e + m) - sqrt(e): zero on gray pixels, finite gradient there.
        chroma = (((x - luma[..., None]) ** 2).mean(-1) + 1e-12) ** 0.5 - 1e-6
        l4 = luma[:, None]
        center = _box_filter(l4, self.center_radius)
        surround = _box_filter(l4, self.surround_radius)
        contrast = (center - surround).abs() / (surround + 0.1)
        sal = contrast[:, 0] + _box_filter(chroma[:, None], self.center_radius)[:, 0]
        sal = sal + self.base_level
        return sal if batched else sal[0]

    def predict_array(self, pixels: np.ndarray) -> np.ndarray:
        import torch

        with torch.no_grad():
            t = as_tensor(np.asarray(pixels, dtype=np.float64))
            return self.saliency_tensor(t).numpy()


class ExternalSaliency:
    """Adapter around an external TorchScript saliency model.

    The module must map (B, 3, H, W) images in [0,1] to a (B, 1, H, W)
    heatmap. Inputs are resized to the configured resolution and the map is
    returned at that resolution (the backend's resize policy).
    """

    identifier = "external"

    def __init__(self, checkpoint: str, resolution: int = 256, differentiable: bool = True):
        import torch

        self.resolution = int(resolution)
        self.differentiable = bool(differentiable)
        try:
            self.module = torch.jit.load(str(checkpoint), map_location="cpu")
        except (OSError, RuntimeError, ValueError) as exc:
            raise CheckpointError(f"cannot load saliency checkpoint {checkpoint}: {exc}") from exc
        self.module.eval()

    def saliency_tensor(self, img):
        import torch.nn.functional as F

        batched = img.dim() == 4
        x = img if batched else img[None]
        x = x.permute(0, 3, 1, 2).float()
        if x.shape[-2:] != (self.resolution, self.resolution):
            x = F.interpolate(
                x, size=(self.resolution, self.resolution), mode="bilinear", align_corners=False
            )
        out = self.module(x)
        if out.dim() == 4:
            out = out[:, 0]
        out = out.clamp(min=0.0)
        return out if batched else out[0]

    def predict_array(self, pixels: np.ndarray) -> np.ndarray:
        import torch

        with torch.no_grad():
            t = as_tensor(np.asarray(pixels, dtype=np.float32))
            return self.saliency_tensor(t).double().numpy()


def get_backend(name: str = "analytic", checkpoint: str | None = None, **kwargs):
    if name == "analytic":
        return AnalyticSaliency(**kwargs)
    if name == "external":
        if not checkpoint:
            raise ConfigurationError("external saliency backend requires a checkpoint path")
        return ExternalSaliency(checkpoint, **kwargs)
    raise ConfigurationError(f"unknown saliency backend {name!r}")


def predict(img: ImageGrid, backend) -> SaliencyMap:
    """Run the backend on a full image and wrap the non-negative heatmap."""
    return SaliencyMap(backend.predict_array(img.pixels))


def relative_change_from_maps(sal_before, sal_after, weights, eps: float = EPS_RELATIVE):
    """Mask-weighted mean of (before - after) / (before + eps).

    Positive values mean the region lost saliency. Works on numpy arrays
    (returns a scalar) and batched torch tensors (returns shape (B,)).
    """
    rel = (sal_before - sal_after) / (sal_before + eps)
    num = (weights * rel).sum((-2, -1))
    den = weights.sum((-2, -1))
    return num / den


def _resize_weights_to(weights: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if weights.shape == shape:
        return weights
    import torch
    import torch.nn.functional as F

    t = as_tensor(np.asarray(weights, dtype=np.float64))[None, None]
    out = F.interpolate(t, size=shape, mode="bilinear", align_corners=False)[0, 0]
    return out.numpy()


def relative_saliency_change(
    original: ImageGrid,
    edited: ImageGrid,
    mask: RegionMask,
    backend,
    eps: float = EPS_RELATIVE,
) -> float:
    """Relative saliency change of the masked region between two images."""
    if original.pixels.shape != edited.pixels.shape:
        raise ShapeError("original and edited images must share a shape")
    before = backend.predict_array(original.pixels)
    after = backend.predict_array(edited.pixels)
    weights = _resize_weights_to(mask.weights, before.shape)
    if weights.sum() <= 0:
        raise InputError("mask is empty after resizing to the saliency resolution")
    return float(relative_change_from_maps(before, after, weights, eps))


def saliency_loss(s, direction: str, w_sal: float | None = None):
    """Exponential soft-margin loss exp(w_sal * s).

    Accepts floats or torch tensors; the weight defaults to the built-in
    per-direction constants.
    """
    if direction not in W_SAL:
        raise ConfigurationError(f"direction must be 'attenuate' or 'amplify', got {direction!r}")
    w = W_SAL[direction] if w_sal is None else float(w_sal)
    if type(s).__module__.split(".")[0] == "torch":
        return (w * s).exp()
    return float(np.exp(w * float(s)))


def masked_mean(map_values: np.ndarray, weights: np.ndarray) -> float:
    """Mask-weighted mean saliency, resizing the mask to the map if needed."""
    w = _resize_weights_to(weights, map_values.shape)
    total = w.sum()
    if total <= 0:
        raise InputError("mask is empty after resizing to the saliency resolution")
    return float((w * map_values).sum() / total)
