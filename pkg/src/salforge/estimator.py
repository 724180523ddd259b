"""Editing network: predicts operator parameters for a masked region.

A depthwise-separable conv backbone embeds the (image, mask) pair; one small
MLP decoder per operator then reads the embedding, a 16-dim encoding of the
requested operator order, and the parameters decoded so far, in that order
(a cascade, so later operators can compensate for earlier ones). Outputs are
squashed into per-operator bounds by a scaled sigmoid whose head is
initialized to output exactly 1.0 (the identity edit) everywhere, so an
untrained model is a no-op and training starts from total loss 1.

Attenuation and amplification are separate checkpoints; the direction lives
in the config and is enforced on load.
"""
from __future__ import annotations

import copy
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigurationError, InputError, StateError
from .objective import AdversarialCritic, ObjectiveConfig, adversarial_step, objective_terms
from .ops import as_tensor, compose_kernel
from .corpus import load_corpus_index, load_item
from .sampling import synthetic_mask
from .types import (
    CANONICAL_OPERATORS,
    EditParams,
    EditPermutation,
    ImageGrid,
    RegionMask,
    all_full_permutations,
    check_pair,
)

logger = logging.getLogger(__name__)

CHECKPOINT_KIND = "param_estimator"
DIRECTIONS = ("attenuate", "amplify")

#: Scaled-sigmoid output ranges; each must straddle 1.0 so the identity
#: initialization exists.
DEFAULT_BOUNDS = {
    "exposure": (0.25, 4.0),
    "saturation": (0.0, 3.0),
    "color_curve": (0.3, 3.0),
    "white_balance": (0.6, 1.4),
}

_OP_INDEX = {op: i for i, op in enumerate(CANONICAL_OPERATORS)}


def encode_permutation(perm: EditPermutation) -> np.ndarray:
    """Flattened 4x4 position-by-operator one-hot, float32, length 16."""
    grid = np.zeros((4, 4), dtype=np.float32)
    for pos, op in enumerate(perm.order):
        grid[pos, _OP_INDEX[op]] = 1.0
    return grid.reshape(-1)


@dataclass(frozen=True)
class EstimatorConfig:
    direction: str = "attenuate"
    resolution: int = 256
    width_mult: float = 1.0
    feat_dim: int = 1280
    decoder_hidden: tuple[int, ...] = (256, 128)
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    lr: float = 1e-4
    weight_decay: float = 0.0
    batch_size: int = 8
    epochs: int = 10
    rng_seed: int = 0
    holdout_fraction: float = 0.15
    grad_clip: float = 5.0

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ConfigurationError(
                f"direction must be one of {DIRECTIONS}, got {self.direction!r}"
            )
        if self.resolution < 32 or self.resolution % 32 != 0:
            raise ConfigurationError("resolution must be a positive multiple of 32")
        if not (0.05 <= self.width_mult <= 4.0):
            raise ConfigurationError(f"width_mult out of range: {self.width_mult}")
        if set(self.bounds) != set(CANONICAL_OPERATORS):
            raise ConfigurationError("bounds must cover exactly the four operators")
        for op, (lo, hi) in self.bounds.items():
            if not (lo < 1.0 < hi):
                raise ConfigurationError(
                    f"{op} bounds ({lo}, {hi}) must straddle 1.0 for identity init"
                )
            if op in ("exposure", "color_curve") and lo <= 0:
                raise ConfigurationError(f"{op} lower bound must be positive")
            if op == "saturation" and lo < 0:
                raise ConfigurationError("saturation lower bound must be >= 0")
            if op == "white_balance" and not (0 < lo and hi < 2):
                raise ConfigurationError("white_balance bounds must sit inside (0, 2)")
        if self.batch_size < 1 or self.epochs < 1 or self.lr <= 0:
            raise ConfigurationError("batch_size, epochs must be >= 1 and lr > 0")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be >= 0")
        if not (0.0 < self.holdout_fraction < 0.5):
            raise ConfigurationError("holdout_fraction must be in (0, 0.5)")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["decoder_hidden"] = list(self.decoder_hidden)
        out["bounds"] = {op: list(v) for op, v in self.bounds.items()}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "EstimatorConfig":
        data = dict(data)
        data["decoder_hidden"] = tuple(data.get("decoder_hidden", (256, 128)))
        data["bounds"] = {op: tuple(v) for op, v in data.get("bounds", DEFAULT_BOUNDS).items()}
        return cls(**data)


def _round8(x: float) -> int:
    return max(8, int(round(x / 8)) * 8)


def _dw_block(in_ch: int, out_ch: int, stride: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, in_ch, 3, stride=stride, padding=1, groups=in_ch, bias=False),
        nn.BatchNorm2d(in_ch),
        nn.ReLU(inplace=True),
        nn.Conv2d(in_ch, out_ch, 1, bias=False),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(inplace=True),
    )


class _Backbone(nn.Module):
    """Depthwise-separable encoder from (B, 4, H, W) to a feature vector."""

    BASE_WIDTHS = (48, 96, 192, 384, 768)

    def __init__(self, width_mult: float, feat_dim: int):
        super().__init__()
        w = [_round8(b * width_mult) for b in self.BASE_WIDTHS]
        feat = _round8(feat_dim * min(1.0, width_mult)) if width_mult < 1.0 else feat_dim
        self.out_dim = feat
        self.stem = nn.Sequential(
            nn.Conv2d(4, w[0], 3, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(w[0]),
            nn.ReLU(inplace=True),
        )
        blocks = []
        prev = w[0]
        for width in w[1:]:
            blocks.append(_dw_block(prev, width, stride=2))
            blocks.append(_dw_block(width, width, stride=1))
            prev = width
        blocks.append(_dw_block(prev, prev, stride=1))
        self.blocks = nn.Sequential(*blocks)
        self.head = nn.Sequential(
            nn.Conv2d(prev, feat, 1, bias=False),
            nn.BatchNorm2d(feat),
            nn.ReLU(inplace=True),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.blocks(self.stem(x))).mean((-2, -1))


def _logit(q: float) -> float:
    return float(np.log(q / (1.0 - q)))


class _Decoder(nn.Module):
    """Per-operator MLP; the zero-initialized final layer starts the whole
    model at the identity edit."""

    def __init__(self, in_dim: int, hidden: tuple[int, ...], lo: float, hi: float):
        super().__init__()
        self.lo, self.hi = float(lo), float(hi)
        layers: list[nn.Module] = []
        prev = in_dim
        for width in hidden:
            layers.append(nn.Linear(prev, width))
            layers.append(nn.ReLU(inplace=True))
            prev = width
        final = nn.Linear(prev, 1)
        # near-zero weights + calibrated bias: outputs start within ~1e-2 of
        # the identity parameter, yet still depend on the permutation input
        nn.init.normal_(final.weight, std=1e-3)
        nn.init.constant_(final.bias, _logit((1.0 - self.lo) / (self.hi - self.lo)))
        layers.append(final)
        self.mlp = nn.Sequential(*layers)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        raw = self.mlp(z)[:, 0]
        return self.lo + (self.hi - self.lo) * torch.sigmoid(raw)


class ParamEstimator(nn.Module):
    def __init__(self, config: EstimatorConfig):
        super().__init__()
        self.config = config
        self.backbone = _Backbone(config.width_mult, config.feat_dim)
        in_dim = self.backbone.out_dim + 16 + len(CANONICAL_OPERATORS)
        self.decoders = nn.ModuleDict(
            {
                op: _Decoder(in_dim, config.decoder_hidden, *config.bounds[op])
                for op in CANONICAL_OPERATORS
            }
        )

    @property
    def direction(self) -> str:
        return self.config.direction

    def forward(self, x: torch.Tensor, perm: EditPermutation) -> dict[str, torch.Tensor]:
        """x: (B, 4, H, W). Returns op -> (B,) bounded parameter values,
        decoded in the permutation's order."""
        feats = self.backbone(x)
        batch = feats.shape[0]
        enc = as_tensor(encode_permutation(perm)).to(feats.dtype)
        enc = enc[None].expand(batch, -1)
        # parameters decoded so far, offset from identity, one slot per op
        prev = torch.zeros(batch, len(CANONICAL_OPERATORS), dtype=feats.dtype)
        out: dict[str, torch.Tensor] = {}
        for op in perm.order:
            value = self.decoders[op](torch.cat([feats, enc, prev], dim=1))
            out[op] = value
            slot = torch.zeros(len(CANONICAL_OPERATORS), dtype=feats.dtype)
            slot[_OP_INDEX[op]] = 1.0
            prev = prev + (value - 1.0)[:, None] * slot[None]
        return out

    def param_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def _input_planes(img: ImageGrid, mask: RegionMask, resolution: int) -> torch.Tensor:
    x = torch.cat(
        [
            as_tensor(img.pixels.astype(np.float32)).permute(2, 0, 1),
            as_tensor(mask.weights.astype(np.float32))[None],
        ]
    )[None]
    if x.shape[-2:] != (resolution, resolution):
        x = F.interpolate(x, size=(resolution, resolution), mode="bilinear", align_corners=False)
    return x


def estimate_params(
    img: ImageGrid, mask: RegionMask, perm: EditPermutation, model: ParamEstimator
) -> EditParams:
    """Predict parameters for exactly the operators in ``perm``."""
    if model is None:
        raise StateError("no estimator model loaded")
    check_pair(img, mask)
    model.eval()
    with torch.no_grad():
        x = _input_planes(img, mask, model.config.resolution)
        values = model(x, perm)
    return EditParams(**{op: float(v[0]) for op, v in values.items()})


@dataclass
class EstimatorReport:
    direction: str
    config: dict
    param_count: int
    n_train: int
    n_holdout: int
    epochs: list[dict] = field(default_factory=list)
    holdout: dict = field(default_factory=dict)
    diverged: bool = False
    divergence_note: str = ""
    critic_updates: int = 0
    wall_time_s: float = 0.0

    def to_json(self) -> dict:
        return asdict(self)


def _load_region_batch(corpus_dir, resolution: int, rng: np.random.Generator):
    """All usable (image, mask) pairs resized to the training resolution,
    channels-last float32 tensors."""
    items = load_corpus_index(corpus_dir)
    imgs, weights = [], []
    for item in items:
        try:
            img, mask = load_item(item)
        except InputError as exc:
            logger.warning("skipping corpus entry %s: %s", item.image_path, exc)
            continue
        if mask is None:
            mask = synthetic_mask(rng, img.height, img.width)
        x = _input_planes(img, mask, resolution)[0]
        imgs.append(x[:3].permute(1, 2, 0))
        weights.append(x[3])
    if not imgs:
        raise InputError(f"no usable images in corpus {corpus_dir}")
    return torch.stack(imgs), torch.stack(weights)


def train_estimator(
    corpus_dir,
    critic,
    backend,
    config: EstimatorConfig | None = None,
    objective_config: ObjectiveConfig | None = None,
    progress=None,
) -> tuple[ParamEstimator, EstimatorReport]:
    """Optimize the estimator against the frozen (or adversarial) critic.

    Every step samples one operator order shared by the whole batch, runs
    the predicted edit through the differentiable compose path, and descends
    the realism-gated saliency objective. A non-finite loss aborts the run:
    the last epoch-end state is restored and the report flags divergence.
    ``progress``, if given, receives the completed fraction per epoch.
    """
    config = config or EstimatorConfig()
    obj_cfg = objective_config or ObjectiveConfig()
    start = time.monotonic()
    torch.manual_seed(config.rng_seed)
    rng = np.random.default_rng(config.rng_seed)

    imgs, weights = _load_region_batch(corpus_dir, config.resolution, rng)
    n = imgs.shape[0]
    order = rng.permutation(n)
    n_hold = max(1, round(config.holdout_fraction * n)) if n > 1 else 0
    hold_idx = order[:n_hold]
    train_idx = order[n_hold:]
    if len(train_idx) == 0:
        raise InputError("corpus too small to leave any training images")

    model = ParamEstimator(config)
    optimizer = torch.optim.Adam(
        model.parameters(), lr=config.lr, weight_decay=config.weight_decay
    )

    # the caller's critic is never mutated: train against a private copy
    critic_local = copy.deepcopy(critic).float()
    critic_local.eval()
    adv_state = None
    if obj_cfg.mode == "adversarial":
        adv_state = AdversarialCritic(model=critic_local, config=obj_cfg)
    else:
        for p in critic_local.parameters():
            p.requires_grad_(False)

    perms = all_full_permutations()
    report = EstimatorReport(
        direction=config.direction,
        config=config.to_dict(),
        param_count=model.param_count(),
        n_train=len(train_idx),
        n_holdout=len(hold_idx),
    )
    steps = max(1, int(np.ceil(len(train_idx) / config.batch_size)))
    last_good = copy.deepcopy(model.state_dict())
    global_step = 0

    for epoch in range(config.epochs):
        model.train()
        epoch_order = rng.permutation(train_idx)
        sums = {"loss": 0.0, "l_sal": 0.0, "l_realism": 0.0, "s": 0.0, "delta_r": 0.0}
        count = 0
        diverged = False
        for step in range(steps):
            batch = epoch_order[step * config.batch_size : (step + 1) * config.batch_size]
            if len(batch) == 0:
                continue
            idx = torch.from_numpy(np.asarray(batch))
            orig = imgs[idx]
            w = weights[idx]
            perm = perms[int(rng.integers(len(perms)))]
            x = torch.cat([orig.permute(0, 3, 1, 2), w[:, None]], dim=1)
            params = model(x, perm)
            values = {op: v[:, None, None, None] for op, v in params.items()}
            edited = compose_kernel(orig, w, perm.order, values)
            terms = objective_terms(
                orig, edited, w, config.direction, critic_local, backend, obj_cfg
            )
            loss = terms["loss"].mean()
            if not torch.isfinite(loss):
                report.diverged = True
                report.divergence_note = (
                    f"non-finite loss at epoch {epoch} step {step}; "
                    "restored last epoch-end weights"
                )
                logger.error(report.divergence_note)
                model.load_state_dict(last_good)
                diverged = True
                break
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
            optimizer.step()
            global_step += 1
            for key in sums:
                sums[key] += float(terms[key].mean().detach())
            count += 1
            if adv_state is not None and global_step % obj_cfg.critic_update_every == 0:
                adversarial_step(adv_state, orig, edited.detach(), w)
                report.critic_updates = adv_state.steps
        if count:
            report.epochs.append(
                {"epoch": epoch, **{k: v / count for k, v in sums.items()}}
            )
        if diverged:
            break
        last_good = copy.deepcopy(model.state_dict())
        if progress is not None:
            progress((epoch + 1) / config.epochs)

    model.eval()
    eval_idx = hold_idx if len(hold_idx) else train_idx
    report.holdout = _evaluate(
        model, critic_local, backend, imgs[eval_idx], weights[eval_idx], config, obj_cfg, rng
    )
    report.wall_time_s = time.monotonic() - start
    return model, report


def _evaluate(model, critic, backend, imgs, weights, config, obj_cfg, rng) -> dict:
    """Held-out metrics: mean S and dR plus margin/direction hit fractions."""
    perms = all_full_permutations()
    s_vals, dr_vals = [], []
    with torch.no_grad():
        for i in range(imgs.shape[0]):
            perm = perms[int(rng.integers(len(perms)))]
            orig = imgs[i : i + 1]
            w = weights[i : i + 1]
            x = torch.cat([orig.permute(0, 3, 1, 2), w[:, None]], dim=1)
            params = model(x, perm)
            values = {op: v[:, None, None, None] for op, v in params.items()}
            edited = compose_kernel(orig, w, perm.order, values)
            terms = objective_terms(orig, edited, w, config.direction, critic, backend, obj_cfg)
            s_vals.append(float(terms["s"][0]))
            dr_vals.append(float(terms["delta_r"][0]))
    s_arr = np.asarray(s_vals)
    dr_arr = np.asarray(dr_vals)
    aligned = s_arr > 0 if config.direction == "attenuate" else s_arr < 0
    return {
        "n": int(s_arr.size),
        "s_mean": float(s_arr.mean()),
        "delta_r_mean": float(dr_arr.mean()),
        "direction_aligned_fraction": float(aligned.mean()),
        "within_margin_fraction": float((dr_arr >= -obj_cfg.b_r).mean()),
    }


@dataclass(frozen=True)
class ParamDistribution:
    direction: str
    bins: int
    histograms: dict  # op -> {"counts": [...], "edges": [...], "mean": float, "std": float}

    def operators(self) -> tuple[str, ...]:
        return tuple(self.histograms)


def export_param_distribution(
    model: ParamEstimator, corpus_dir, bins: int = 20, rng_seed: int = 0
) -> ParamDistribution:
    """Histogram of predicted values per operator over a corpus, one random
    full-length order per image. Degenerate (all-identical) outputs raise."""
    if model is None:
        raise StateError("no estimator model loaded")
    if bins < 2:
        raise ConfigurationError("bins must be >= 2")
    rng = np.random.default_rng(rng_seed)
    imgs, weights = _load_region_batch(corpus_dir, model.config.resolution, rng)
    perms = all_full_permutations()
    collected: dict[str, list[float]] = {op: [] for op in CANONICAL_OPERATORS}
    model.eval()
    with torch.no_grad():
        for i in range(imgs.shape[0]):
            perm = perms[int(rng.integers(len(perms)))]
            x = torch.cat(
                [imgs[i : i + 1].permute(0, 3, 1, 2), weights[i : i + 1][:, None]], dim=1
            )
            for op, v in model(x, perm).items():
                collected[op].append(float(v[0]))
    stds = [np.std(vals) for vals in collected.values() if vals]
    if stds and max(stds) == 0.0:
        raise StateError(
            "estimator emits identical parameters for every image; "
            "it looks untrained or collapsed"
        )
    histograms = {}
    for op, vals in collected.items():
        lo, hi = model.config.bounds[op]
        counts, edges = np.histogram(np.asarray(vals), bins=bins, range=(lo, hi))
        histograms[op] = {
            "counts": counts.tolist(),
            "edges": edges.tolist(),
            "mean": float(np.mean(vals)) if vals else float("nan"),
            "std": float(np.std(vals)) if vals else float("nan"),
            "n": len(vals),
        }
    return ParamDistribution(direction=model.direction, bins=bins, histograms=histograms)


def save_estimator(path, model: ParamEstimator) -> Path:
    return save_checkpoint(path, CHECKPOINT_KIND, model.config.to_dict(), model.state_dict())


def load_estimator(path, expect_direction: str | None = None) -> ParamEstimator:
    """Load a checkpoint; ``expect_direction`` guards against mixing the
    attenuate and amplify models up."""
    _, config, state = load_checkpoint(path, expected_kind=CHECKPOINT_KIND)
    cfg = EstimatorConfig.from_dict(config)
    if expect_direction is not None and cfg.direction != expect_direction:
        raise StateError(
            f"checkpoint {path} is a {cfg.direction!r} model, expected {expect_direction!r}"
        )
    model = ParamEstimator(cfg)
    model.load_state_dict(state)
    model.eval()
    return model
