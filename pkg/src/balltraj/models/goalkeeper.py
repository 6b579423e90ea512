"""Goalkeeper trajectory model: team possession classifier feeding a GK position regressor."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch
from torch import nn

from ..config import ConfigError, ModelConfig
from ..set_encoders import PPIEncoder, ShapeError
from .layers import BiLSTM, FeatureScaler


@dataclass
class GKOutput:
    team_probs: torch.Tensor  # [B, T, 2]
    team_logits: torch.Tensor
    gk_positions: torch.Tensor  # [B, T, 2, 2] meters, one (x, y) per team


class GoalkeeperModel(nn.Module):
    """Inputs are outfield players only: ``[B, T, 2n, F]`` with team 1 first."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.scaler = FeatureScaler(cfg.pitch, cfg.n_features)
        self.context = PPIEncoder(cfg.n_players, cfg.n_features, cfg.d_btr, cfg.heads, with_ball_out=False)
        self.tpc = BiLSTM(cfg.d_btr, cfg.lstm_hidden, cfg.lstm_layers, cfg.dropout)
        self.tpc_head = nn.Linear(self.tpc.dim_out, 2)
        self.gtr = BiLSTM(cfg.d_btr + 2, cfg.lstm_hidden, cfg.lstm_layers, cfg.dropout)
        self.gtr_head = nn.Linear(self.gtr.dim_out, 4)

    def forward(self, features: torch.Tensor) -> GKOutput:
        if features.dim() != 4 or features.shape[2] != 2 * self.cfg.n_players:
            raise ShapeError(f"expected [B, T, {2 * self.cfg.n_players}, F], got {tuple(features.shape)}")
        z = self.context(self.scaler(features)).fused
        logits = self.tpc_head(self.tpc(z))
        probs = torch.softmax(logits, dim=-1)
        out = self.gtr_head(self.gtr(torch.cat([z, probs], dim=-1)))
        B, T, _ = out.shape
        pos = self.scaler.positions_out(out.view(B, T, 2, 2))
        return GKOutput(probs, logits, pos)


def check_outfield_only(agent_ids: Sequence[str], goalkeepers: Sequence[str]):
    """Raise if any goalkeeper is present in the roster fed to the GK model."""
    present = sorted(set(agent_ids) & set(goalkeepers))
    if present:
        raise ConfigError(f"goalkeeper model expects outfield players only; found {present}")


def gk_forward(model: GoalkeeperModel, features, agent_ids, goalkeepers) -> GKOutput:
    check_outfield_only(agent_ids, goalkeepers)
    return model(features)


def gk_loss(out: GKOutput, team_labels: torch.Tensor, gk_truth: torch.Tensor, lambda_ce: float = 20.0):
    """Team-possession CE (labels 0/1) plus MSE on both goalkeepers' positions."""
    ce = nn.functional.cross_entropy(out.team_logits.reshape(-1, 2), team_labels.reshape(-1).long())
    mse = ((out.gk_positions - gk_truth) ** 2).sum(-1).mean()
    return mse + lambda_ce * ce
