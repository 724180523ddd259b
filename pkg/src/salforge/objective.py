"""Loss composition for saliency-guided editing.

The total objective multiplies the exponential saliency term by a realism
gate: L = (1 + L_realism) * L_sal, where L_realism = max(0, -dR - b_r)
hinges on the critic score drop dR = R(edited) - R(original) staying above
the margin -b_r. When realism is satisfied the objective reduces to L_sal
alone; at an identity edit dR = 0 and S = 0, so L = 1 exactly.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, ModeError, ShapeError
from .ops import as_tensor
from .saliency import W_SAL, EPS_RELATIVE, relative_change_from_maps, saliency_loss
from .types import ImageGrid, RegionMask

MODES = ("fixed_critic", "adversarial")


@dataclass(frozen=True)
class ObjectiveConfig:
    """Knobs of the training objective.

    b_r is the realism slack margin; the per-direction saliency weights
    default to the attenuate/amplify constants. In adversarial mode the
    critic is refreshed every ``critic_update_every`` editing steps with its
    own optimizer at ``critic_lr``.
    """

    b_r: float = 0.1
    w_sal_attenuate: float = W_SAL["attenuate"]
    w_sal_amplify: float = W_SAL["amplify"]
    eps: float = EPS_RELATIVE
    mode: str = "fixed_critic"
    critic_update_every: int = 1
    critic_lr: float = 2e-4

    def __post_init__(self):
        if self.b_r < 0:
            raise ConfigurationError(f"b_r must be non-negative, got {self.b_r}")
        if self.eps <= 0:
            raise ConfigurationError(f"eps must be positive, got {self.eps}")
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "adversarial" and self.critic_update_every < 1:
            raise ConfigurationError("critic_update_every must be >= 1 in adversarial mode")

    def w_sal(self, direction: str) -> float:
        if direction == "attenuate":
            return self.w_sal_attenuate
        if direction == "amplify":
            return self.w_sal_amplify
        raise ConfigurationError(f"direction must be 'attenuate' or 'amplify', got {direction!r}")

    def with_mode(self, mode: str) -> "ObjectiveConfig":
        return replace(self, mode=mode)


def realism_loss(delta_r, b_r: float = 0.1):
    """Hinge max(0, -delta_r - b_r); zero while the score drop stays within
    the margin. Floats in, float out; torch tensors in, tensor out."""
    if b_r < 0:
        raise ConfigurationError(f"b_r must be non-negative, got {b_r}")
    x = -delta_r - b_r
    if type(x).__module__.split(".")[0] == "torch":
        return x.clamp(min=0.0)
    return max(0.0, float(x))


def combined_loss(l_realism, l_sal):
    """Realism-gated total (1 + L_realism) * L_sal."""
    return (1.0 + l_realism) * l_sal


def critic_pair_loss(real_scores, fake_scores):
    """Least-squares critic objective: 0.5*mean(R_fake^2) + 0.5*mean((R_real-1)^2)."""
    return 0.5 * (fake_scores**2).mean() + 0.5 * ((real_scores - 1.0) ** 2).mean()


def objective_terms(
    original,
    edited,
    weights,
    direction: str,
    critic,
    backend,
    config: ObjectiveConfig | None = None,
):
    """Differentiable per-sample loss terms on torch batches.

    original/edited: (B, H, W, 3); weights: (B, H, W). Returns a dict of
    (B,) tensors: delta_r, s, l_sal, l_realism, loss. Gradients flow into
    ``edited`` (and, in adversarial setups, the critic parameters).
    """
    cfg = config or ObjectiveConfig()
    if original.shape != edited.shape:
        raise ShapeError(
            f"original/edited shapes differ: {tuple(original.shape)} vs {tuple(edited.shape)}"
        )
    if weights.shape != original.shape[:-1]:
        raise ShapeError(
            f"weights shape {tuple(weights.shape)} does not match images {tuple(original.shape)}"
        )
    r_orig = critic.score_batch(original, weights)
    r_edit = critic.score_batch(edited, weights)
    delta_r = r_edit - r_orig
    s = relative_change_from_maps(
        backend.saliency_tensor(original),
        backend.saliency_tensor(edited),
        weights,
        cfg.eps,
    )
    l_sal = saliency_loss(s, direction, cfg.w_sal(direction))
    l_realism = realism_loss(delta_r, cfg.b_r)
    return {
        "delta_r": delta_r,
        "s": s,
        "l_sal": l_sal,
        "l_realism": l_realism,
        "loss": combined_loss(l_realism, l_sal),
    }


def full_objective(
    original: ImageGrid,
    edited: ImageGrid,
    mask: RegionMask,
    direction: str,
    critic,
    backend,
    config: ObjectiveConfig | None = None,
):
    """Total loss and its gradient with respect to the edited pixels.

    Evaluates in float64 (the critic is copied and widened) so the returned
    gradient is verification grade. Returns (loss, grad) with grad shaped
    like the image. Requires a differentiable saliency backend.
    """
    import torch

    if not getattr(backend, "differentiable", False):
        raise ConfigurationError(
            "full_objective needs a differentiable saliency backend; "
            f"{getattr(backend, 'identifier', backend)!r} is not"
        )
    if original.pixels.shape != edited.pixels.shape:
        raise ShapeError("original and edited images must share a shape")
    if mask.weights.shape != original.pixels.shape[:-1]:
        raise ShapeError("mask shape does not match the images")

    wide_critic = copy.deepcopy(critic).double().eval()
    orig_t = as_tensor(original.pixels)[None]
    edit_t = as_tensor(edited.pixels)[None].requires_grad_(True)
    weights = as_tensor(mask.weights)[None]
    terms = objective_terms(orig_t, edit_t, weights, direction, wide_critic, backend, config)
    loss = terms["loss"].sum()
    loss.backward()
    return float(loss.detach()), edit_t.grad[0].numpy()


@dataclass
class AdversarialCritic:
    """Critic plus optimizer state for alternating updates."""

    model: object
    config: ObjectiveConfig
    optimizer: object = None
    steps: int = 0
    last_loss: float = float("nan")
    _history: list = field(default_factory=list)

    def __post_init__(self):
        if self.config.mode != "adversarial":
            raise ModeError("adversarial critic updates require mode='adversarial'")
        if self.optimizer is None:
            import torch

            self.optimizer = torch.optim.Adam(
                self.model.parameters(), lr=self.config.critic_lr, betas=(0.5, 0.999)
            )


def adversarial_step(state: AdversarialCritic, original, edited, weights) -> float:
    """One least-squares critic update: originals are the real samples,
    generated edits (detached) the fakes. Returns the pre-update loss."""
    if state.config.mode != "adversarial":
        raise ModeError("adversarial critic updates require mode='adversarial'")
    state.model.train()
    real_scores = state.model.score_batch(original.detach(), weights.detach())
    fake_scores = state.model.score_batch(edited.detach(), weights.detach())
    loss = critic_pair_loss(real_scores, fake_scores)
    state.optimizer.zero_grad(set_to_none=True)
    loss.backward()
    state.optimizer.step()
    state.model.eval()
    state.steps += 1
    state.last_loss = float(loss.detach())
    state._history.append(state.last_loss)
    return state.last_loss


def score_components(s: float, delta_r: float, direction: str, config: ObjectiveConfig | None = None):
    """Scalar loss breakdown from precomputed S and dR (reporting helper)."""
    cfg = config or ObjectiveConfig()
    l_sal = float(np.exp(cfg.w_sal(direction) * s))
    l_real = realism_loss(delta_r, cfg.b_r)
    return {
        "s": s,
        "delta_r": delta_r,
        "l_sal": l_sal,
        "l_realism": l_real,
        "loss": combined_loss(l_real, l_sal),
    }
