"""Hierarchical model: a possession classifier (PPC) feeding a ball trajectory regressor (BTR)."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from ..config import ModelConfig, Variant
from ..set_encoders import FPEEncoder, FPIEncoder, PPEEncoder, PPIEncoder, ShapeError
from .layers import FeatureScaler, per_agent, sequence_model


class NumericError(ValueError):
    pass


@dataclass
class PossessionOutput:
    probs: torch.Tensor  # [B, T, K]
    logits: torch.Tensor  # [B, T, K]
    hidden: torch.Tensor  # [B, T, K, H]


@dataclass
class BallPrediction:
    positions: torch.Tensor  # [B, T, 2] meters
    hidden: torch.Tensor  # [B, T, H]


@dataclass
class ModelOutput:
    ball: BallPrediction
    possession: PossessionOutput | None = None
    extras: object = None


def _check_inputs(features: torch.Tensor, cfg: ModelConfig):
    if features.dim() != 4 or features.shape[2] != cfg.n_agents:
        raise ShapeError(f"expected [B, T, {cfg.n_agents}, F] features, got {tuple(features.shape)}")
    if not torch.isfinite(features).all():
        raise NumericError("non-finite input features")


def apply_observations(pred: torch.Tensor, ball_obs: torch.Tensor | None) -> torch.Tensor:
    """Replace predictions by the observed ball wherever the observation flag is set."""
    if ball_obs is None:
        return pred
    seen = ball_obs[..., 2:3] > 0.5
    return torch.where(seen, ball_obs[..., :2], pred)


class PossessionClassifier(nn.Module):
    def __init__(self, cfg: ModelConfig, kind: str = "lstm"):
        super().__init__()
        self.cfg = cfg
        F, n, d = cfg.n_features, cfg.n_players, cfg.d_g
        self.ppe = PPEEncoder(n, F, d, cfg.heads) if "PPE" in cfg.embeddings else None
        self.fpe = FPEEncoder(n, F, d, cfg.heads) if "FPE" in cfg.embeddings else None
        self.fpi = FPIEncoder(n, F, d, cfg.heads) if "FPI" in cfg.embeddings else None
        self.seq = sequence_model(kind, F + d * len(cfg.embeddings), cfg)
        self.head = nn.Linear(self.seq.dim_out, 1)

    @property
    def hidden_dim(self) -> int:
        return self.seq.dim_out

    def forward(self, x: torch.Tensor) -> PossessionOutput:
        """``x`` holds normalised features ``[B, T, K, F]``."""
        parts = [x]
        if self.ppe is not None:
            parts.append(self.ppe(x))
        if self.fpe is not None:
            parts.append(self.fpe(x))
        if self.fpi is not None:
            parts.append(self.fpi(x).unsqueeze(-2).expand(*x.shape[:-1], -1))
        h = per_agent(self.seq, torch.cat(parts, dim=-1))
        logits = self.head(h).squeeze(-1)
        return PossessionOutput(torch.softmax(logits, dim=-1), logits, h)


class TrajectoryRegressor(nn.Module):
    def __init__(self, cfg: ModelConfig, poss_hidden: int, kind: str = "lstm"):
        super().__init__()
        self.cfg = cfg
        dim_in = cfg.n_features + poss_hidden + 1
        self.ppi = PPIEncoder(cfg.n_players, dim_in, cfg.d_btr, cfg.heads)
        self.seq = sequence_model(kind, cfg.d_btr + (3 if cfg.imputation else 0), cfg)
        self.out = nn.Linear(self.seq.dim_out, 2)

    def forward(self, x, possession: PossessionOutput, obs_norm: torch.Tensor | None = None):
        aug = torch.cat([x, possession.hidden, possession.probs.unsqueeze(-1)], dim=-1)
        z = self.ppi(aug).fused
        if self.cfg.imputation:
            if obs_norm is None:
                obs_norm = torch.zeros(*z.shape[:-1], 3, dtype=z.dtype, device=z.device)
            z = torch.cat([z, obs_norm], dim=-1)
        h = self.seq(z)
        return self.out(h), h


class HierarchicalModel(nn.Module):
    """H-LSTM (Bi-LSTM sequence models) or H-Transformer (temporal self-attention)."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        if not cfg.variant.hierarchical:
            raise ValueError(f"{cfg.variant} is not hierarchical")
        self.cfg = cfg
        kind = "lstm" if cfg.variant is Variant.H_LSTM else "transformer"
        self.scaler = FeatureScaler(cfg.pitch, cfg.n_features)
        self.ppc = PossessionClassifier(cfg, kind)
        self.btr = TrajectoryRegressor(cfg, self.ppc.hidden_dim, kind)

    def forward(self, features: torch.Tensor, ball_obs: torch.Tensor | None = None, **_) -> ModelOutput:
        _check_inputs(features, self.cfg)
        x = self.scaler(features)
        poss = self.ppc(x)
        obs = None
        if self.cfg.imputation and ball_obs is not None:
            obs = self.scaler.observation(ball_obs)
        z, h = self.btr(x, poss, obs)
        pred = self.scaler.positions_out(z)
        if self.cfg.imputation:
            pred = apply_observations(pred, ball_obs)
        return ModelOutput(BallPrediction(pred, h), poss)
