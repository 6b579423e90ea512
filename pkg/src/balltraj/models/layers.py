"""Building blocks shared by the sequence models."""

from __future__ import annotations

import math

import torch
from torch import nn

from ..config import PitchConfig

VEL_SCALE = 10.0  # m/s
ACC_SCALE = 5.0  # m/s^2


class FeatureScaler(nn.Module):
    """Fixed affine normalisation: positions to [-1, 1], kinematics divided by typical scales."""

    def __init__(self, pitch: PitchConfig, n_features: int = 6):
        super().__init__()
        half = torch.tensor([pitch.length / 2, pitch.width / 2])
        shift = torch.tensor([pitch.length / 2, pitch.width / 2, 0, 0, 0, 0])
        scale = torch.tensor([half[0], half[1], VEL_SCALE, VEL_SCALE, VEL_SCALE, ACC_SCALE])
        self.n_features = n_features
        self.register_buffer("shift", shift[:n_features].clone())
        self.register_buffer("scale", scale[:n_features].clone())
        self.register_buffer("half_pitch", half)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        x = features[..., : self.n_features]
        return (x - self.shift) / self.scale

    def positions_in(self, xy: torch.Tensor) -> torch.Tensor:
        return (xy - self.half_pitch) / self.half_pitch

    def positions_out(self, z: torch.Tensor) -> torch.Tensor:
        return z * self.half_pitch + self.half_pitch

    def observation(self, ball_obs: torch.Tensor) -> torch.Tensor:
        """Normalise ``(x, y, flag)`` rows; masked rows stay exactly zero."""
        flag = ball_obs[..., 2:3]
        return torch.cat([self.positions_in(ball_obs[..., :2]) * flag, flag], dim=-1)


class BiLSTM(nn.Module):
    def __init__(self, dim_in: int, hidden: int, layers: int = 2, dropout: float = 0.0):
        super().__init__()
        self.lstm = nn.LSTM(
            dim_in, hidden, num_layers=layers, batch_first=True, bidirectional=True,
            dropout=dropout if layers > 1 else 0.0,
        )
        self.dim_out = 2 * hidden

    def forward(self, x):
        return self.lstm(x)[0]


def sinusoidal_encoding(T: int, d: int, dtype=torch.float32, device=None) -> torch.Tensor:
    pos = torch.arange(T, dtype=dtype, device=device)[:, None]
    div = torch.exp(torch.arange(0, d, 2, dtype=dtype, device=device) * (-math.log(10000.0) / d))
    pe = torch.zeros(T, d, dtype=dtype, device=device)
    pe[:, 0::2] = torch.sin(pos * div)
    pe[:, 1::2] = torch.cos(pos * div)[:, : d // 2]
    return pe


class TemporalTransformer(nn.Module):
    """Self-attention over time with sinusoidal positions; a drop-in for ``BiLSTM``."""

    def __init__(self, dim_in: int, dim: int = 256, heads: int = 4, layers: int = 2, dropout: float = 0.0):
        super().__init__()
        self.inp = nn.Linear(dim_in, dim)
        layer = nn.TransformerEncoderLayer(
            dim, heads, dim_feedforward=2 * dim, dropout=dropout, batch_first=True
        )
        self.encoder = nn.TransformerEncoder(layer, layers, enable_nested_tensor=False)
        self.dim_out = dim

    def forward(self, x):
        h = self.inp(x)
        h = h + sinusoidal_encoding(h.shape[1], h.shape[2], h.dtype, h.device)
        return self.encoder(h)


def sequence_model(kind: str, dim_in: int, cfg) -> nn.Module:
    if kind == "lstm":
        return BiLSTM(dim_in, cfg.lstm_hidden, cfg.lstm_layers, cfg.dropout)
    return TemporalTransformer(dim_in, cfg.transformer_dim, cfg.heads, cfg.transformer_layers, cfg.dropout)


def per_agent(seq: nn.Module, x: torch.Tensor) -> torch.Tensor:
    """Run a shared sequence model over every agent: ``[B, T, K, F] -> [B, T, K, H]``."""
    B, T, K, F = x.shape
    h = seq(x.permute(0, 2, 1, 3).reshape(B * K, T, F))
    return h.reshape(B, K, T, -1).permute(0, 2, 1, 3)
