from ..config import ConfigError, ModelConfig, Variant
from .baselines import SequenceBaseline
from .goalkeeper import GKOutput, GoalkeeperModel, gk_forward
from .hierarchical import BallPrediction, HierarchicalModel, ModelOutput, NumericError, PossessionOutput
from .vrnn import ContextVRNN, VRNNOutputs, vrnn_generate


def build_model(cfg: ModelConfig):
    if cfg.variant.hierarchical:
        return HierarchicalModel(cfg)
    if cfg.variant in (Variant.LSTM, Variant.TRANSFORMER):
        return SequenceBaseline(cfg)
    if cfg.variant is Variant.VRNN:
        return ContextVRNN(cfg)
    raise ConfigError(f"unknown variant {cfg.variant}")


__all__ = [
    "BallPrediction",
    "ContextVRNN",
    "GKOutput",
    "GoalkeeperModel",
    "HierarchicalModel",
    "ModelOutput",
    "NumericError",
    "PossessionOutput",
    "SequenceBaseline",
    "VRNNOutputs",
    "build_model",
    "gk_forward",
    "vrnn_generate",
]
