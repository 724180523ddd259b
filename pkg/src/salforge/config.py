"""Service/CLI configuration: TOML or JSON file with [models], [saliency],
[objective], and [server] sections. FORGE_HOME overrides the artifact root."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - 3.10 fallback
    import tomli as tomllib

from .errors import CheckpointError, ConfigurationError
from .objective import ObjectiveConfig

DEFAULT_HOME = Path.home() / ".forge"
KNOWN_SECTIONS = ("models", "saliency", "objective", "server")


@dataclass(frozen=True)
class ForgeConfig:
    critic_path: str | None = None
    estimator_paths: dict = field(default_factory=dict)  # direction -> path
    saliency: dict = field(default_factory=lambda: {"backend": "analytic"})
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    host: str = "127.0.0.1"
    port: int = 8321
    home: Path = DEFAULT_HOME

    def __post_init__(self):
        if not (0 < self.port < 65536):
            raise ConfigurationError(f"port out of range: {self.port}")
        for direction in self.estimator_paths:
            if direction not in ("attenuate", "amplify"):
                raise ConfigurationError(f"unknown estimator direction {direction!r}")
        object.__setattr__(self, "home", Path(self.home))


def resolve_home(configured=None) -> Path:
    """Artifact root: FORGE_HOME env var beats the config, which beats the
    per-user default."""
    env = os.environ.get("FORGE_HOME")
    if env:
        return Path(env)
    return Path(configured) if configured else DEFAULT_HOME


def _read_raw(path: Path) -> dict:
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    suffix = path.suffix.lower()
    try:
        if suffix == ".toml":
            with open(path, "rb") as fh:
                return tomllib.load(fh)
        if suffix == ".json":
            with open(path) as fh:
                return json.load(fh)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"could not parse {path}: {exc}") from exc
    raise ConfigurationError(f"config must be .toml or .json, got {path.name!r}")


def load_config(path=None) -> ForgeConfig:
    """Build a ForgeConfig from a file; no file means all defaults."""
    if path is None:
        return ForgeConfig(home=resolve_home())
    raw = _read_raw(Path(path))
    unknown = set(raw) - set(KNOWN_SECTIONS)
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
    models = dict(raw.get("models", {}))
    critic_path = models.pop("critic", None)
    estimators = dict(models.pop("estimators", {}))
    # also accept flat keys like attenuate = "path"
    for key in list(models):
        if key in ("attenuate", "amplify"):
            estimators[key] = models.pop(key)
    if models:
        raise ConfigurationError(f"unknown [models] keys: {sorted(models)}")

    objective_raw = raw.get("objective", {})
    try:
        objective = ObjectiveConfig(**objective_raw)
    except TypeError as exc:
        raise ConfigurationError(f"bad [objective] section: {exc}") from exc

    server = dict(raw.get("server", {}))
    home = resolve_home(server.pop("home", None))
    host = server.pop("host", "127.0.0.1")
    port = int(server.pop("port", 8321))
    if server:
        raise ConfigurationError(f"unknown [server] keys: {sorted(server)}")

    return ForgeConfig(
        critic_path=critic_path,
        estimator_paths=estimators,
        saliency=dict(raw.get("saliency", {"backend": "analytic"})),
        objective=objective,
        host=host,
        port=port,
        home=home,
    )


def build_backend(saliency: dict):
    from .saliency import get_backend

    kwargs = dict(saliency)
    name = kwargs.pop("backend", "analytic")
    checkpoint = kwargs.pop("checkpoint", None)
    try:
        return get_backend(name, checkpoint=checkpoint, **kwargs)
    except TypeError as exc:
        raise ConfigurationError(f"bad [saliency] section: {exc}") from exc


def load_bundle(config: ForgeConfig):
    """Load every checkpoint the config names into a ModelBundle.

    A missing file fails loudly with its path so service startup errors
    are actionable.
    """
    from .critic import load_critic
    from .estimator import load_estimator
    from .pipeline import ModelBundle

    critic = None
    if config.critic_path:
        if not Path(config.critic_path).exists():
            raise CheckpointError(f"critic checkpoint not found: {config.critic_path}")
        critic = load_critic(config.critic_path)
    estimators = {}
    for direction, path in config.estimator_paths.items():
        if not Path(path).exists():
            raise CheckpointError(f"{direction} estimator checkpoint not found: {path}")
        estimators[direction] = load_estimator(path, expect_direction=direction)
    return ModelBundle(
        critic=critic,
        estimators=estimators,
        backend=build_backend(config.saliency),
        objective=config.objective,
    )
