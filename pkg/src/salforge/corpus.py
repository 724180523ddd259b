"""Synthetic photo corpus for desk-scale training runs.

Scenes are gradient backgrounds with noise plus a handful of bright,
saturated shapes, so masked regions genuinely stand out against their
surroundings and attenuation/amplification have measurable effect. A corpus
directory holds ``images/``, ``masks/`` and a ``meta.jsonl`` with one row per
(image, mask) pair.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import InputError
from .io import load_image, load_mask, save_image, save_mask
from .types import ImageGrid, RegionMask


@dataclass(frozen=True)
class CorpusItem:
    image_path: Path
    mask_path: Path | None
    contains_face: bool


def _draw_shape(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Boolean region: an ellipse or an axis-aligned rectangle."""
    yy, xx = np.mgrid[0:h, 0:w]
    cy = rng.uniform(0.25, 0.75) * h
    cx = rng.uniform(0.25, 0.75) * w
    ry = rng.uniform(0.10, 0.22) * h
    rx = rng.uniform(0.10, 0.22) * w
    if rng.random() < 0.5:
        return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    return (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)


def _background(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    c1 = rng.uniform(0.25, 0.55, 3)
    c2 = rng.uniform(0.25, 0.55, 3)
    axis = rng.integers(2)
    t = np.linspace(0.0, 1.0, h if axis == 0 else w)
    ramp = t[:, None, None] if axis == 0 else t[None, :, None]
    bg = c1 + ramp * (c2 - c1)
    noise = gaussian_filter(rng.normal(0.0, 0.05, (h, w, 3)), sigma=(3, 3, 0))
    return np.clip(bg + noise, 0.0, 1.0)


def _object_color(rng: np.random.Generator) -> np.ndarray:
    # one dominant channel: bright and saturated against the muted background
    color = rng.uniform(0.05, 0.35, 3)
    color[rng.integers(3)] = rng.uniform(0.75, 0.95)
    return color


def build_toy_corpus(
    out_dir,
    n_images: int = 60,
    size: int = 96,
    seed: int = 0,
    face_fraction: float = 0.2,
    maskless_fraction: float = 0.1,
) -> list[dict]:
    """Generate a corpus directory; returns the meta rows that were written.

    A ``maskless_fraction`` of images get a row with a null mask to exercise
    downstream synthetic-mask fallbacks.
    """
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    rows = []
    for i in range(n_images):
        rng = np.random.default_rng([seed, i])
        px = _background(rng, size, size)
        name = f"img_{i:04d}"
        maskless = rng.random() < maskless_fraction
        n_objects = 0 if maskless else int(rng.integers(1, 4))
        regions = []
        occupied = np.zeros((size, size), dtype=bool)
        for _ in range(n_objects):
            for _attempt in range(8):
                region = _draw_shape(rng, size, size)
                if not (region & occupied).any():
                    break
            else:
                continue
            occupied |= region
            color = _object_color(rng)
            texture = gaussian_filter(rng.normal(0.0, 0.04, (size, size, 3)), sigma=(2, 2, 0))
            px = np.where(region[..., None], np.clip(color + texture, 0.0, 1.0), px)
            regions.append(region)
        save_image(ImageGrid(px), out_dir / "images" / f"{name}.png")
        if not regions:
            rows.append({"image": f"images/{name}.png", "mask": None, "contains_face": False})
        for k, region in enumerate(regions):
            mask_rel = f"masks/{name}_{k}.png"
            save_mask(RegionMask(region.astype(np.float64)), out_dir / mask_rel)
            rows.append(
                {
                    "image": f"images/{name}.png",
                    "mask": mask_rel,
                    "contains_face": bool(rng.random() < face_fraction),
                }
            )
    with open(out_dir / "meta.jsonl", "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return rows


def load_corpus_index(corpus_dir) -> list[CorpusItem]:
    """Parse ``meta.jsonl``; without one, every ``images/*.png`` is indexed
    mask-free. An empty corpus is an error."""
    corpus_dir = Path(corpus_dir)
    meta = corpus_dir / "meta.jsonl"
    items: list[CorpusItem] = []
    if meta.exists():
        with open(meta) as fh:
            for line_no, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise InputError(f"{meta}:{line_no}: bad JSON: {exc}") from exc
                if "image" not in row:
                    raise InputError(f"{meta}:{line_no}: missing 'image' key")
                mask = row.get("mask")
                items.append(
                    CorpusItem(
                        image_path=corpus_dir / row["image"],
                        mask_path=corpus_dir / mask if mask else None,
                        contains_face=bool(row.get("contains_face", False)),
                    )
                )
    else:
        for path in sorted((corpus_dir / "images").glob("*.png")):
            items.append(CorpusItem(image_path=path, mask_path=None, contains_face=False))
    if not items:
        raise InputError(f"corpus at {corpus_dir} is empty")
    return items


def load_item(item: CorpusItem) -> tuple[ImageGrid, RegionMask | None]:
    """Read an indexed pair from disk; the mask may be absent."""
    img = load_image(item.image_path)
    mask = None
    if item.mask_path is not None:
        mask = load_mask(item.mask_path, contains_face=item.contains_face)
        if mask.weights.shape != img.pixels.shape[:-1]:
            raise InputError(
                f"mask {item.mask_path} shape {mask.weights.shape} does not match "
                f"image {item.image_path}"
            )
    return img, mask
