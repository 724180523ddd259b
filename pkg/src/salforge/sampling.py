"""Edit-plan sampling for critic training data.

"Real" samples get subtle edits near identity; "fake" samples get blatant
ones, with a separate, gentler blatant class for regions containing faces
(humans notice facial artifacts sooner). Parameter values are drawn from
unions of closed intervals, weighted by interval length; the operator subset
and its order are uniform over the allowed operators.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import ConfigurationError, InputError
from .corpus import CorpusItem, load_corpus_index, load_item
from .ops import compose_edits
from .types import (
    CANONICAL_OPERATORS,
    EditParams,
    EditPermutation,
    ImageGrid,
    RegionMask,
    TrainingSample,
    edit_from_json,
    edit_to_json,
)

logger = logging.getLogger(__name__)

LABELS = ("real", "fake")
DATASET_FORMAT = 1


@dataclass(frozen=True)
class ClassRanges:
    """Sampling spec for one realism class.

    ``intervals`` maps operator id to a union of closed [lo, hi] intervals;
    operators missing from it are never applied for this class. ``count``
    bounds (inclusive) how many operators an edit uses.
    """

    intervals: dict[str, tuple[tuple[float, float], ...]]
    count: tuple[int, int]

    def __post_init__(self):
        for op, spans in self.intervals.items():
            if op not in CANONICAL_OPERATORS:
                raise ConfigurationError(f"unknown operator {op!r} in range table")
            if not spans:
                raise ConfigurationError(f"operator {op!r} has no intervals")
            for lo, hi in spans:
                if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
                    raise ConfigurationError(f"bad interval [{lo}, {hi}] for {op!r}")
        lo, hi = self.count
        if not (1 <= lo <= hi <= len(self.intervals)):
            raise ConfigurationError(
                f"count range {self.count} incompatible with {len(self.intervals)} operators"
            )

    @property
    def operators(self) -> tuple[str, ...]:
        return tuple(op for op in CANONICAL_OPERATORS if op in self.intervals)


@dataclass(frozen=True)
class RangeTable:
    """Per-class sampling ranges, hashable for dataset provenance."""

    classes: dict[str, ClassRanges]

    def __post_init__(self):
        missing = {"real", "fake", "fake_face"} - set(self.classes)
        if missing:
            raise ConfigurationError(f"range table missing classes: {sorted(missing)}")

    def for_class(self, key: str) -> ClassRanges:
        try:
            return self.classes[key]
        except KeyError:
            raise ConfigurationError(f"unknown realism class {key!r}") from None

    def table_hash(self) -> str:
        canon = {
            key: {
                "intervals": {op: list(map(list, spans)) for op, spans in sorted(cr.intervals.items())},
                "count": list(cr.count),
            }
            for key, cr in sorted(self.classes.items())
        }
        return hashlib.sha256(json.dumps(canon, sort_keys=True).encode()).hexdigest()


def default_range_table() -> RangeTable:
    subtle = ((0.85, 1.15),)
    return RangeTable(
        classes={
            "real": ClassRanges(
                intervals={"exposure": subtle, "saturation": subtle, "color_curve": subtle},
                count=(1, 3),
            ),
            "fake": ClassRanges(
                intervals={
                    "exposure": ((0.5, 0.75), (1.5, 2.0)),
                    "saturation": ((0.0, 0.5), (1.5, 2.0)),
                    "color_curve": ((0.5, 2.0),),
                    "white_balance": ((0.9, 1.0),),
                },
                count=(2, 4),
            ),
            "fake_face": ClassRanges(
                intervals={
                    "exposure": ((0.5, 0.75), (1.25, 1.5)),
                    "saturation": ((0.5, 0.75), (1.25, 1.5)),
                    "color_curve": ((0.5, 2.0),),
                },
                count=(2, 3),
            ),
        }
    )


def class_key(label: str, contains_face: bool) -> str:
    if label == "real":
        return "real"
    if label == "fake":
        return "fake_face" if contains_face else "fake"
    raise ConfigurationError(f"label must be 'real' or 'fake', got {label!r}")


def _sample_value(rng: np.random.Generator, spans: tuple[tuple[float, float], ...]) -> float:
    lengths = np.array([hi - lo for lo, hi in spans], dtype=np.float64)
    if lengths.sum() == 0:
        lo, hi = spans[int(rng.integers(len(spans)))]
        return float(lo)
    idx = int(rng.choice(len(spans), p=lengths / lengths.sum()))
    lo, hi = spans[idx]
    return float(rng.uniform(lo, hi))


def _sample_plan(
    rng: np.random.Generator, label: str, contains_face: bool, table: RangeTable
) -> tuple[EditPermutation, EditParams]:
    ranges = table.for_class(class_key(label, contains_face))
    allowed = ranges.operators
    lo, hi = ranges.count
    count = int(rng.integers(lo, hi + 1))
    picks = rng.permutation(len(allowed))[:count]
    order = tuple(allowed[i] for i in picks)
    values = {op: _sample_value(rng, ranges.intervals[op]) for op in order}
    return EditPermutation(order), EditParams(**values)


def sample_plan(
    rng_seed: int, label: str, contains_face: bool = False, table: RangeTable | None = None
) -> tuple[EditPermutation, EditParams]:
    """Deterministically sample (permutation, parameters) for one edit."""
    rng = np.random.default_rng(rng_seed)
    return _sample_plan(rng, label, contains_face, table or default_range_table())


def synthetic_mask(rng: np.random.Generator, h: int, w: int) -> RegionMask:
    """Random ellipse or rectangle covering 2-30% of the frame."""
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(100):
        cy, cx = rng.uniform(0.2, 0.8) * h, rng.uniform(0.2, 0.8) * w
        ry, rx = rng.uniform(0.05, 0.35) * h, rng.uniform(0.05, 0.35) * w
        if rng.random() < 0.5:
            region = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        else:
            region = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        frac = region.mean()
        if 0.02 <= frac <= 0.30:
            return RegionMask(region.astype(np.float64))
    # fall back to a centered rectangle of ~10% area
    ry, rx = int(h * 0.16), int(w * 0.16)
    region = (np.abs(yy - h / 2) <= ry) & (np.abs(xx - w / 2) <= rx)
    return RegionMask(region.astype(np.float64))


def _child_seed(*entropy: int) -> int:
    return int(np.random.SeedSequence(list(entropy)).generate_state(1)[0])


def generate_dataset(
    corpus_dir,
    count_per_class: int,
    rng_seed: int = 0,
    table: RangeTable | None = None,
) -> Iterator[TrainingSample]:
    """Yield balanced real/fake samples drawn from a corpus directory.

    Sample k of either class depends only on (rng_seed, class, k), so a run
    can be resumed or parallelized without changing its output. Unreadable
    corpus entries are logged and skipped by redrawing.
    """
    table = table or default_range_table()
    index = load_corpus_index(corpus_dir)
    if count_per_class <= 0:
        raise InputError(f"count_per_class must be positive, got {count_per_class}")
    for k in range(count_per_class):
        for label_idx, label in enumerate(LABELS):
            yield _generate_one(index, rng_seed, label_idx, label, k, table)


def _generate_one(
    index: list[CorpusItem],
    rng_seed: int,
    label_idx: int,
    label: str,
    k: int,
    table: RangeTable,
) -> TrainingSample:
    last_error: Exception | None = None
    for attempt in range(20):
        rng = np.random.default_rng([rng_seed, label_idx, k, attempt])
        item = index[int(rng.integers(len(index)))]
        try:
            img, mask = load_item(item)
        except InputError as exc:
            logger.warning("skipping unreadable corpus entry %s: %s", item.image_path, exc)
            last_error = exc
            continue
        if mask is None:
            mask = synthetic_mask(rng, img.height, img.width)
        perm, params = _sample_plan(rng, label, mask.contains_face, table)
        edited = compose_edits(img, params, perm, mask)
        return TrainingSample(
            base=img,
            mask=mask,
            edited=edited,
            label=label,
            perm=perm,
            params=params,
            rng_seed=_child_seed(rng_seed, label_idx, k, attempt),
        )
    raise InputError(
        f"could not draw a usable corpus entry after 20 attempts: {last_error}"
    )


# Dataset shards ---------------------------------------------------------------


def write_dataset(
    samples: Iterable[TrainingSample],
    out_dir,
    shard_size: int = 64,
    manifest_extra: dict | None = None,
) -> dict:
    """Persist samples as .npz shards plus records.jsonl and manifest.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if shard_size <= 0:
        raise InputError(f"shard_size must be positive, got {shard_size}")
    shards: list[str] = []
    counts = {label: 0 for label in LABELS}
    pending: dict[str, np.ndarray] = {}
    pending_n = 0
    total = 0

    def flush():
        nonlocal pending, pending_n
        if not pending_n:
            return
        name = f"shard_{len(shards):04d}.npz"
        np.savez_compressed(out_dir / name, **pending)
        shards.append(name)
        pending = {}
        pending_n = 0

    with open(out_dir / "records.jsonl", "w") as records:
        for sample in samples:
            slot = pending_n
            pending[f"base_{slot}"] = sample.base.pixels.astype(np.float32)
            pending[f"mask_{slot}"] = sample.mask.weights.astype(np.float32)
            pending[f"edited_{slot}"] = sample.edited.pixels.astype(np.float32)
            pending_n += 1
            counts[sample.label] += 1
            records.write(
                json.dumps(
                    {
                        "index": total,
                        "shard": len(shards),
                        "slot": slot,
                        "label": sample.label,
                        "contains_face": sample.mask.contains_face,
                        "edit": edit_to_json(sample.perm, sample.params),
                        "rng_seed": sample.rng_seed,
                    }
                )
                + "\n"
            )
            total += 1
            if pending_n >= shard_size:
                flush()
        flush()
    manifest = {
        "format": DATASET_FORMAT,
        "total": total,
        "counts": counts,
        "shards": shards,
        **(manifest_extra or {}),
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest


def load_dataset(dataset_dir) -> list[TrainingSample]:
    """Read back every sample written by :func:`write_dataset`."""
    dataset_dir = Path(dataset_dir)
    manifest_path = dataset_dir / "manifest.json"
    if not manifest_path.exists():
        raise InputError(f"no manifest.json under {dataset_dir}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != DATASET_FORMAT:
        raise InputError(f"unsupported dataset format {manifest.get('format')!r}")
    shards = [np.load(dataset_dir / name) for name in manifest["shards"]]
    samples: list[TrainingSample] = []
    with open(dataset_dir / "records.jsonl") as fh:
        for line in fh:
            row = json.loads(line)
            shard = shards[row["shard"]]
            slot = row["slot"]
            perm, params = edit_from_json(row["edit"])
            samples.append(
                TrainingSample(
                    base=ImageGrid(shard[f"base_{slot}"].astype(np.float64)),
                    mask=RegionMask(
                        shard[f"mask_{slot}"].astype(np.float64),
                        contains_face=row["contains_face"],
                    ),
                    edited=ImageGrid(shard[f"edited_{slot}"].astype(np.float64)),
                    label=row["label"],
                    perm=perm,
                    params=params,
                    rng_seed=row["rng_seed"],
                )
            )
    for shard in shards:
        shard.close()
    return samples
