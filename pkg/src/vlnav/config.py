"""Run configuration: flat key=value files, overrides, and hashing."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass


class ConfigError(ValueError):
    """Bad config text or field value; the CLI maps this to a usage error."""


_CHOICES = {
    "progress_loss": ("bce", "mse"),
    "angle_norm": ("l2", "l1"),
    "vision_query": ("cross_modal", "vision_history"),
    "selection_split": ("val-seen", "val-unseen"),
    "distance_metric": ("geodesic", "euclidean"),
}


@dataclass(frozen=True)
class Config:
    # Dataset geometry.
    seed: int = 0
    n_worlds: int = 4
    n_nodes: int = 10
    avg_degree: float = 3.0
    episodes_per_world: int = 50
    train_frac: float = 0.5
    val_seen_frac: float = 0.1
    val_unseen_frac: float = 0.2
    test_unseen_frac: float = 0.2
    # Model shape.
    d_v: int = 32
    d_h: int = 64
    vocab_size: int = 64
    t_max: int = 10
    l_max: int = 40
    vision_query: str = "cross_modal"
    # Objectives.
    success_radius: float = 1.0
    lr: float = 0.003
    momentum: float = 0.9
    gamma: float = 0.9
    value_loss_weight: float = 0.5
    speaker_weight: float = 1.0
    progress_weight: float = 1.0
    matching_weight: float = 1.0
    angle_weight: float = 1.0
    progress_loss: str = "bce"
    angle_norm: str = "l2"
    # Training schedule (desk-scale defaults; raise for longer runs).
    iterations: int = 2000
    batch_size: int = 8
    eval_every: int = 200
    probe_episodes: int = 8
    selection_split: str = "val-unseen"
    distance_metric: str = "geodesic"
    # Back-translation.
    augment_samples: int = 50
    mix_labeled: int = 1  # labeled batches per augmented batch in finetuning

    def __post_init__(self):
        for key, allowed in _CHOICES.items():
            value = getattr(self, key)
            if value not in allowed:
                raise ConfigError(
                    f"{key} must be one of {allowed}, got {value!r}")
        for key in ("n_worlds", "n_nodes", "batch_size", "eval_every",
                    "t_max", "l_max", "d_v", "d_h", "vocab_size"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be positive")
        for key in ("episodes_per_world", "iterations", "probe_episodes",
                    "augment_samples", "mix_labeled"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be nonnegative")
        fracs = self.splits
        if any(f < 0 for f in fracs):
            raise ConfigError("split fractions must be nonnegative")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigError(
                f"split fractions must sum to 1, got {sum(fracs)}")

    @property
    def splits(self) -> tuple:
        return (self.train_frac, self.val_seen_frac,
                self.val_unseen_frac, self.test_unseen_frac)

    @property
    def aux_weights(self) -> tuple:
        return (self.speaker_weight, self.progress_weight,
                self.matching_weight, self.angle_weight)

    def with_overrides(self, **kw) -> "Config":
        for key in kw:
            if key not in _FIELD_TYPES:
                raise ConfigError(f"unknown config key {key!r}")
        return dataclasses.replace(self, **kw)


_FIELD_TYPES = {f.name: type(f.default) for f in dataclasses.fields(Config)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    if kind is str:
        return raw
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(
            f"config key {key!r} expects {kind.__name__}, got {raw!r}")


def parse_config(text: str, base: Config | None = None) -> Config:
    """Parse `key=value` lines; '#' comments and blanks are skipped.

    Unknown and duplicate keys are hard errors so typos cannot silently
    fall back to defaults.
    """
    overrides: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, "
                              f"got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in overrides:
            raise ConfigError(f"line {lineno}: duplicate config key {key!r}")
        overrides[key] = _coerce(key, raw)
    return (base or Config()).with_overrides(**overrides)


def load_config(path: str, base: Config | None = None) -> Config:
    with open(path) as fh:
        return parse_config(fh.read(), base)


def to_text(cfg: Config) -> str:
    """Canonical emission: declaration order, repr-exact floats."""
    lines = []
    for f in dataclasses.fields(Config):
        value = getattr(cfg, f.name)
        lines.append(f"{f.name}={value!r}" if isinstance(value, float)
                     else f"{f.name}={value}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: Config) -> str:
    return hashlib.sha256(to_text(cfg).encode()).hexdigest()
