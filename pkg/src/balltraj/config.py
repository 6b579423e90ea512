"""Dataclass configs and the flat ``key = value`` config-file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """Raised for invalid or incompatible configuration."""


class Variant(str, Enum):
    H_LSTM = "H_LSTM"
    LSTM = "LSTM"
    H_TRANSFORMER = "H_TRANSFORMER"
    TRANSFORMER = "TRANSFORMER"
    VRNN = "VRNN"

    @property
    def hierarchical(self) -> bool:
        return self in (Variant.H_LSTM, Variant.H_TRANSFORMER)


EMBEDDINGS = ("PPE", "FPE", "FPI")

# Number of leading per-agent features fed to the networks, keyed by feature set.
FEATURE_SETS = {"xy": 2, "xy_v": 4, "all": 6}


@dataclass(frozen=True)
class PitchConfig:
    length: float = 105.0
    width: float = 68.0

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0):
            raise ConfigError(f"pitch dimensions must be positive, got {self.length}x{self.width}")


@dataclass(frozen=True)
class SetEncoderConfig:
    embed_dim: int
    num_heads: int = 4
    num_blocks: int = 2
    use_pma_decoder: bool = False

    def __post_init__(self):
        if self.embed_dim <= 0 or self.num_heads <= 0 or self.num_blocks <= 0:
            raise ConfigError("set encoder sizes must be positive")
        if self.embed_dim % self.num_heads:
            raise ConfigError(
                f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}"
            )


@dataclass(frozen=True)
class ModelConfig:
    variant: Variant = Variant.H_LSTM
    n_players: int = 11  # per team
    d_g: int = 16
    d_btr: int = 128
    lstm_hidden: int = 256
    lstm_layers: int = 2
    dropout: float = 0.2
    heads: int = 4
    transformer_dim: int = 256
    transformer_layers: int = 2
    latent_dim: int = 16
    embeddings: tuple[str, ...] = EMBEDDINGS
    features: str = "all"
    imputation: bool = False
    pitch: PitchConfig = field(default_factory=PitchConfig)

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        embeddings = tuple(e.upper() for e in self.embeddings)
        object.__setattr__(self, "embeddings", embeddings)
        if isinstance(self.pitch, dict):
            object.__setattr__(self, "pitch", PitchConfig(**self.pitch))
        unknown = set(embeddings) - set(EMBEDDINGS)
        if unknown:
            raise ConfigError(f"unknown embeddings {sorted(unknown)}")
        if self.variant.hierarchical:
            if not embeddings:
                raise ConfigError("hierarchical variants need at least one context embedding")
            if set(embeddings) == {"FPI"}:
                raise ConfigError("FPI alone cannot drive per-player classification")
        if self.features not in FEATURE_SETS:
            raise ConfigError(f"features must be one of {sorted(FEATURE_SETS)}")
        if self.n_players < 1:
            raise ConfigError("n_players must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")

    @property
    def n_agents(self) -> int:
        return 2 * self.n_players + 4

    @property
    def n_features(self) -> int:
        return FEATURE_SETS[self.features]

    @property
    def tag(self) -> str:
        """Model name in the results-table style, without the -RL/-PP suffixes."""
        return self.variant.value.replace("_", "-")

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["variant"] = self.variant.value
        d["embeddings"] = list(self.embeddings)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ModelConfig":
        d = dict(d)
        if "pitch" in d and isinstance(d["pitch"], dict):
            d["pitch"] = PitchConfig(**d["pitch"])
        if "embeddings" in d:
            d["embeddings"] = tuple(d["embeddings"])
        return cls(**d)


@dataclass(frozen=True)
class LossWeights:
    lambda_real: float = 1.0
    lambda_ce: float = 20.0

    def __post_init__(self):
        if self.lambda_real < 0 or self.lambda_ce < 0:
            raise ConfigError("loss weights must be nonnegative")


@dataclass(frozen=True)
class PostprocessConfig:
    touch_threshold: float = 0.5
    peak_threshold: float = 0.2
    d_min: float = 0.5  # meters
    smooth_frames: int = 5
    peak_radius: int = 5  # frames on either side

    def __post_init__(self):
        if self.d_min <= 0:
            raise ConfigError("d_min must be positive")
        if not self.peak_threshold <= self.touch_threshold:
            raise ConfigError("peak_threshold must not exceed touch_threshold")


@dataclass
class TrainConfig:
    learning_rate: float = 5e-4
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    window: int = 100
    stride: int = 5
    flip: bool = True
    weights: LossWeights = field(default_factory=LossWeights)
    # imputation regime: this fraction of batches sees partial ball observations
    masked_batch_fraction: float = 0.5
    train_keep_probability: float = 0.2
    grad_clip: float | None = 10.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")


def run_tag(model: ModelConfig, weights: LossWeights, postprocess: bool = False) -> str:
    """``H-LSTM-RL-PP`` style label: ``-RL`` iff lambda_real > 0, ``-PP`` if postprocessed."""
    tag = model.tag
    if weights.lambda_real > 0 and model.variant.hierarchical:
        tag += "-RL"
    if postprocess:
        tag += "-PP"
    return tag


def _coerce(raw: str) -> Any:
    low = raw.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", ""):
        return None
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    return raw


def read_flat_config(path: str | Path) -> dict[str, Any]:
    """Parse ``key = value`` lines; ``#`` starts a comment. Keys are normalised to snake_case."""
    out: dict[str, Any] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = _coerce(value)
    return out


def write_flat_config(values: dict[str, Any], path: str | Path) -> None:
    lines = [f"{k} = {v}" for k, v in values.items()]
    Path(path).write_text("\n".join(lines) + "\n")
