"""Non-hierarchical baselines: context encoder straight into a sequence model."""

from __future__ import annotations

import torch
from torch import nn

from ..config import ConfigError, ModelConfig, Variant
from ..set_encoders import PPIEncoder
from .hierarchical import BallPrediction, ModelOutput, _check_inputs, apply_observations
from .layers import FeatureScaler, sequence_model


class SequenceBaseline(nn.Module):
    """LSTM or Transformer baseline over the partially permutation-invariant context."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        if cfg.variant not in (Variant.LSTM, Variant.TRANSFORMER):
            raise ConfigError(f"baseline variant must be LSTM or TRANSFORMER, got {cfg.variant}")
        self.cfg = cfg
        kind = "lstm" if cfg.variant is Variant.LSTM else "transformer"
        self.scaler = FeatureScaler(cfg.pitch, cfg.n_features)
        self.ppi = PPIEncoder(cfg.n_players, cfg.n_features, cfg.d_btr, cfg.heads)
        self.seq = sequence_model(kind, cfg.d_btr + (3 if cfg.imputation else 0), cfg)
        self.out = nn.Linear(self.seq.dim_out, 2)

    def forward(self, features: torch.Tensor, ball_obs: torch.Tensor | None = None, **_) -> ModelOutput:
        _check_inputs(features, self.cfg)
        z = self.ppi(self.scaler(features)).fused
        if self.cfg.imputation:
            obs = (self.scaler.observation(ball_obs) if ball_obs is not None
                   else torch.zeros(*z.shape[:-1], 3, dtype=z.dtype, device=z.device))
            z = torch.cat([z, obs], dim=-1)
        h = self.seq(z)
        pred = self.scaler.positions_out(self.out(h))
        if self.cfg.imputation:
            pred = apply_observations(pred, ball_obs)
        return ModelOutput(BallPrediction(pred, h))
