"""Learned realism critic.

A strided conv encoder over the 4-channel (RGB + mask) input, global average
pooling, and a two-layer MLP head producing one unbounded scalar. Higher
scores mean more plausible; only score DIFFERENCES between an edit and its
source are calibrated, absolute values carry no meaning.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigurationError, InputError, InvalidParameterError, TrainingError
from .objective import critic_pair_loss
from .ops import APPLY, as_tensor
from .types import ImageGrid, RegionMask, TrainingSample, check_pair, validate_op_value

CHECKPOINT_KIND = "realism_critic"


@dataclass(frozen=True)
class CriticConfig:
    resolution: int = 256
    base_width: int = 64
    depth: int = 4
    mlp_hidden: int = 256
    lr: float = 2e-4
    batch_size: int = 16
    epochs: int = 20
    rng_seed: int = 0
    holdout_fraction: float = 0.2
    dropout: float = 0.2
    weight_decay: float = 1e-4
    augment: bool = True

    def __post_init__(self):
        if self.resolution < 16:
            raise ConfigurationError(f"resolution must be >= 16, got {self.resolution}")
        if self.depth < 1 or self.base_width < 4 or self.mlp_hidden < 4:
            raise ConfigurationError("critic architecture too small")
        if self.resolution % (2**self.depth) != 0:
            raise ConfigurationError(
                f"resolution {self.resolution} not divisible by 2^depth = {2 ** self.depth}"
            )
        if self.batch_size < 2 or self.batch_size % 2 != 0:
            raise ConfigurationError("batch_size must be even and >= 2")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if not (0.0 < self.holdout_fraction < 0.5):
            raise ConfigurationError("holdout_fraction must be in (0, 0.5)")
        if self.lr <= 0:
            raise ConfigurationError("lr must be positive")
        if not (0.0 <= self.dropout < 1.0) or self.weight_decay < 0:
            raise ConfigurationError("dropout must be in [0, 1) and weight_decay >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "CriticConfig":
        return cls(**data)


class RealismCritic(nn.Module):
    def __init__(self, config: CriticConfig):
        super().__init__()
        self.config = config
        layers: list[nn.Module] = []
        in_ch = 4
        out_ch = config.base_width
        for i in range(config.depth):
            out_ch = min(config.base_width * 2**i, config.base_width * 8)
            layers.append(nn.Conv2d(in_ch, out_ch, 4, stride=2, padding=1))
            if i > 0:
                # instance norm: identical statistics at train and eval time,
                # so single-image scoring matches training behavior
                layers.append(nn.InstanceNorm2d(out_ch, affine=True))
            layers.append(nn.LeakyReLU(0.2, inplace=True))
            in_ch = out_ch
        self.encoder = nn.Sequential(*layers)
        self.head = nn.Sequential(
            nn.Linear(out_ch, config.mlp_hidden),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Dropout(config.dropout),
            nn.Linear(config.mlp_hidden, 1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feats = self.encoder(x)
        pooled = feats.mean((-2, -1))
        return self.head(pooled)[:, 0]

    def score_batch(self, img: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
        """img: (B, H, W, 3); weights: (B, H, W). Returns (B,) scores.

        Inputs are resized to the configured resolution; dtype follows the
        module parameters so float64 verification runs work unchanged.
        """
        dtype = next(self.parameters()).dtype
        x = torch.cat([img.permute(0, 3, 1, 2), weights[:, None]], dim=1).to(dtype)
        res = self.config.resolution
        if x.shape[-2:] != (res, res):
            x = F.interpolate(x, size=(res, res), mode="bilinear", align_corners=False)
        return self(x)


def score(img: ImageGrid, mask: RegionMask, model: RealismCritic) -> float:
    check_pair(img, mask)
    model.eval()
    with torch.no_grad():
        img_t = as_tensor(img.pixels)[None]
        w_t = as_tensor(mask.weights)[None]
        return float(model.score_batch(img_t, w_t)[0])


def delta_realism(edited: ImageGrid, original: ImageGrid, mask: RegionMask, model) -> float:
    """Score change of the edit; an identical image pair gives exactly 0."""
    return score(edited, mask, model) - score(original, mask, model)


@dataclass
class CriticReport:
    config: dict
    n_train: int
    n_holdout: int
    epochs: list[dict] = field(default_factory=list)
    final_auc: float = float("nan")
    separation: float = float("nan")
    wall_time_s: float = 0.0

    def to_json(self) -> dict:
        return asdict(self)


def roc_auc(pos: np.ndarray, neg: np.ndarray) -> float:
    """Probability a positive outranks a negative (ties count half)."""
    pos = np.asarray(pos)[:, None]
    neg = np.asarray(neg)[None, :]
    return float((pos > neg).mean() + 0.5 * (pos == neg).mean())


def _planes(samples: list[TrainingSample], which: str, resolution: int) -> torch.Tensor:
    """Stack [RGB, mask] planes at the training resolution."""
    outs = []
    for s in samples:
        img = getattr(s, which)
        x = torch.cat(
            [
                as_tensor(img.pixels.astype(np.float32)).permute(2, 0, 1),
                as_tensor(s.mask.weights.astype(np.float32))[None],
            ]
        )[None]
        if x.shape[-2:] != (resolution, resolution):
            x = F.interpolate(x, size=(resolution, resolution), mode="bilinear", align_corners=False)
        outs.append(x)
    return torch.cat(outs)


def _split_holdout(indices: list[int], fraction: float, rng: np.random.Generator):
    order = rng.permutation(len(indices))
    n_hold = max(1, round(fraction * len(indices)))
    hold = [indices[i] for i in order[:n_hold]]
    train = [indices[i] for i in order[n_hold:]]
    return train, hold


def train_critic(
    samples, config: CriticConfig | None = None, progress=None
) -> tuple[RealismCritic, CriticReport]:
    """Train from TrainingSample triples (or a dataset directory path).

    Real samples are pushed toward score 1, fakes toward 0, with the
    least-squares pair loss. Classes must be non-empty and balanced.
    ``progress``, if given, is called with the completed fraction after
    every epoch.
    """
    config = config or CriticConfig()
    if isinstance(samples, (str, Path)):
        from .sampling import load_dataset

        samples = load_dataset(samples)
    samples = list(samples)
    real_idx = [i for i, s in enumerate(samples) if s.label == "real"]
    fake_idx = [i for i, s in enumerate(samples) if s.label == "fake"]
    if not real_idx or not fake_idx:
        raise InputError("critic training needs both real and fake samples")
    if len(real_idx) != len(fake_idx):
        raise InputError(
            f"unbalanced classes: {len(real_idx)} real vs {len(fake_idx)} fake"
        )
    if len(real_idx) < 2:
        raise InputError("need at least 2 samples per class")

    start = time.monotonic()
    torch.manual_seed(config.rng_seed)
    rng = np.random.default_rng(config.rng_seed)
    model = RealismCritic(config)
    optimizer = torch.optim.Adam(
        model.parameters(), lr=config.lr, betas=(0.5, 0.999), weight_decay=config.weight_decay
    )

    train_real, hold_real = _split_holdout(real_idx, config.holdout_fraction, rng)
    train_fake, hold_fake = _split_holdout(fake_idx, config.holdout_fraction, rng)
    planes = _planes(samples, "edited", config.resolution)

    half = config.batch_size // 2
    steps = max(1, int(np.ceil(len(train_real) / half)))
    report = CriticReport(
        config=config.to_dict(),
        n_train=len(train_real) + len(train_fake),
        n_holdout=len(hold_real) + len(hold_fake),
    )

    def holdout_scores():
        model.eval()
        with torch.no_grad():
            pos = model(planes[hold_real]).numpy()
            neg = model(planes[hold_fake]).numpy()
        return pos, neg

    for epoch in range(config.epochs):
        model.train()
        real_order = rng.permutation(train_real)
        fake_order = rng.permutation(train_fake)
        losses = []
        for step in range(steps):
            r = real_order[(step * half) % len(train_real) :][:half]
            f = fake_order[(step * half) % len(train_fake) :][:half]
            if len(r) == 0 or len(f) == 0:
                continue
            batch = planes[np.concatenate([r, f])]
            if config.augment:
                # random flips break any image-identity shortcut
                flip_h = torch.from_numpy(rng.random(len(batch)) < 0.5)
                flip_v = torch.from_numpy(rng.random(len(batch)) < 0.5)
                batch = torch.where(flip_h[:, None, None, None], batch.flip(-1), batch)
                batch = torch.where(flip_v[:, None, None, None], batch.flip(-2), batch)
            scores = model(batch)
            scores_r, scores_f = scores[: len(r)], scores[len(r) :]
            loss = critic_pair_loss(scores_r, scores_f)
            if not torch.isfinite(loss):
                raise TrainingError(
                    f"critic loss became non-finite at epoch {epoch} step {step}"
                )
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
        pos, neg = holdout_scores()
        epoch_row = {
            "epoch": epoch,
            "train_loss": float(np.mean(losses)) if losses else float("nan"),
            "holdout_auc": roc_auc(pos, neg),
            "holdout_loss": float(
                critic_pair_loss(torch.from_numpy(pos), torch.from_numpy(neg))
            ),
        }
        report.epochs.append(epoch_row)
        if progress is not None:
            progress((epoch + 1) / config.epochs)

    pos, neg = holdout_scores()
    report.final_auc = roc_auc(pos, neg)
    report.separation = float(pos.mean() - neg.mean())
    report.wall_time_s = time.monotonic() - start
    model.eval()
    return model, report


@dataclass(frozen=True)
class SweepResult:
    operator: str
    values: tuple[float, ...]
    delta_r: tuple[float, ...]
    r_base: float


def realism_sweep(
    img: ImageGrid, mask: RegionMask, operator: str, values, model: RealismCritic
) -> SweepResult:
    """Score change as one operator's value sweeps a grid, all else fixed."""
    check_pair(img, mask)
    if operator not in APPLY:
        raise InvalidParameterError(f"unknown operator {operator!r}")
    cleaned = [validate_op_value(operator, v) for v in values]
    if not cleaned:
        raise InvalidParameterError("sweep needs at least one value")
    r_base = score(img, mask, model)
    deltas = []
    for v in cleaned:
        edited = APPLY[operator](img, v, mask)
        deltas.append(score(edited, mask, model) - r_base)
    return SweepResult(
        operator=operator,
        values=tuple(cleaned),
        delta_r=tuple(deltas),
        r_base=r_base,
    )


def save_critic(path, model: RealismCritic) -> Path:
    return save_checkpoint(path, CHECKPOINT_KIND, model.config.to_dict(), model.state_dict())


def load_critic(path) -> RealismCritic:
    _, config, state = load_checkpoint(path, expected_kind=CHECKPOINT_KIND)
    model = RealismCritic(CriticConfig.from_dict(config))
    model.load_state_dict(state)
    model.eval()
    return model
