"""Ball trajectory inference from multi-agent tracking data."""

from .config import LossWeights, ModelConfig, PitchConfig, PostprocessConfig, TrainConfig, Variant

__all__ = ["LossWeights", "ModelConfig", "PitchConfig", "PostprocessConfig", "TrainConfig", "Variant"]
