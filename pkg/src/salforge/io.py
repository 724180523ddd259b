"""Image, mask, and heatmap file handling plus wire encodings.

Pixel convention: files store 8-bit sRGB-ish values; in memory everything is
float64 in [0, 1]. Decoding divides by 255, encoding rounds half up. Hashes
are computed over the quantized bytes so they are stable across a
save/load round trip.
"""
from __future__ import annotations

import base64
import hashlib
import io as _stdio
import struct
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import InputError
from .saliency import SaliencyMap
from .types import ImageGrid, RegionMask


def _quantize(values: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(values, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def load_image(path) -> ImageGrid:
    """Read a PNG/JPEG file as an RGB image grid."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise InputError(f"cannot read image {path}: {exc}") from exc
    return ImageGrid(arr / 255.0)


def save_image(img: ImageGrid, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(_quantize(img.pixels), mode="RGB").save(path)
    return path


def load_mask(path, contains_face: bool = False, feather_radius: float = 0.0) -> RegionMask:
    """Read a grayscale mask; 255 means full edit weight."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"), dtype=np.float64)
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise InputError(f"cannot read mask {path}: {exc}") from exc
    return RegionMask(arr / 255.0, contains_face=contains_face, feather_radius=feather_radius)


def save_mask(mask: RegionMask, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(_quantize(mask.weights), mode="L").save(path)
    return path


def save_saliency_png(sal: SaliencyMap, path) -> Path:
    """Write a max-normalized grayscale heatmap."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    peak = sal.values.max()
    normed = sal.values / peak if peak > 0 else np.zeros_like(sal.values)
    Image.fromarray(_quantize(normed), mode="L").save(path)
    return path


def image_hash(img: ImageGrid) -> str:
    """Content hash of the image at 8-bit precision, including dimensions."""
    digest = hashlib.sha256()
    digest.update(struct.pack(">II", img.height, img.width))
    digest.update(_quantize(img.pixels).tobytes())
    return digest.hexdigest()


def mask_hash(mask: RegionMask) -> str:
    digest = hashlib.sha256()
    digest.update(struct.pack(">II", *mask.weights.shape))
    digest.update(_quantize(mask.weights).tobytes())
    return digest.hexdigest()


def image_to_png_bytes(img: ImageGrid) -> bytes:
    buf = _stdio.BytesIO()
    Image.fromarray(_quantize(img.pixels), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def mask_to_png_bytes(mask: RegionMask) -> bytes:
    buf = _stdio.BytesIO()
    Image.fromarray(_quantize(mask.weights), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def saliency_to_png_bytes(sal: SaliencyMap) -> bytes:
    peak = sal.values.max()
    normed = sal.values / peak if peak > 0 else np.zeros_like(sal.values)
    buf = _stdio.BytesIO()
    Image.fromarray(_quantize(normed), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def image_from_png_bytes(data: bytes) -> ImageGrid:
    try:
        with Image.open(_stdio.BytesIO(data)) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise InputError(f"cannot decode image bytes: {exc}") from exc
    return ImageGrid(arr / 255.0)


def mask_from_png_bytes(data: bytes, contains_face: bool = False) -> RegionMask:
    try:
        with Image.open(_stdio.BytesIO(data)) as im:
            arr = np.asarray(im.convert("L"), dtype=np.float64)
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise InputError(f"cannot decode mask bytes: {exc}") from exc
    return RegionMask(arr / 255.0, contains_face=contains_face)


def b64_encode(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def b64_decode(text: str) -> bytes:
    try:
        return base64.b64decode(text, validate=True)
    except (ValueError, TypeError) as exc:
        raise InputError(f"invalid base64 payload: {exc}") from exc


def image_from_b64(text: str) -> ImageGrid:
    return image_from_png_bytes(b64_decode(text))


def image_to_b64(img: ImageGrid) -> str:
    return b64_encode(image_to_png_bytes(img))


def mask_from_b64(text: str, contains_face: bool = False) -> RegionMask:
    return mask_from_png_bytes(b64_decode(text), contains_face=contains_face)


def mask_to_b64(mask: RegionMask) -> str:
    return b64_encode(mask_to_png_bytes(mask))
