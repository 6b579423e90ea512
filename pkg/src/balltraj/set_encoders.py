"""Set-attention blocks and the game-context encoders built from them.

All modules accept arbitrary leading batch dimensions: an input of shape
``[..., m, d_in]`` is treated as a batch of sets of ``m`` elements.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .config import SetEncoderConfig


class EmptySetError(ValueError):
    pass


class ShapeError(ValueError):
    pass


def _flatten_sets(x: torch.Tensor):
    if x.dim() < 2:
        raise ShapeError(f"expected [..., m, d], got shape {tuple(x.shape)}")
    if x.shape[-2] == 0:
        raise EmptySetError("cannot encode an empty set")
    lead = x.shape[:-2]
    return x.reshape(-1, *x.shape[-2:]), lead


class MAB(nn.Module):
    """Multihead attention block: ``LN(H + rFF(H))`` with ``H = LN(Q' + Attn(Q', K, K))``."""

    def __init__(self, dim_q: int, dim_k: int, dim: int, num_heads: int, ln: bool = True):
        super().__init__()
        self.dim, self.num_heads = dim, num_heads
        self.fc_q = nn.Linear(dim_q, dim)
        self.fc_k = nn.Linear(dim_k, dim)
        self.fc_v = nn.Linear(dim_k, dim)
        self.fc_o = nn.Linear(dim, dim)
        self.ln0 = nn.LayerNorm(dim) if ln else nn.Identity()
        self.ln1 = nn.LayerNorm(dim) if ln else nn.Identity()

    def forward(self, q: torch.Tensor, k: torch.Tensor) -> torch.Tensor:
        q = self.fc_q(q)
        key, value = self.fc_k(k), self.fc_v(k)
        B, mq, _ = q.shape
        mk = key.shape[1]
        h, dh = self.num_heads, self.dim // self.num_heads
        qh = q.view(B, mq, h, dh).transpose(1, 2)
        kh = key.view(B, mk, h, dh).transpose(1, 2)
        vh = value.view(B, mk, h, dh).transpose(1, 2)
        attn = torch.softmax(qh @ kh.transpose(-1, -2) / self.dim**0.5, dim=-1)
        out = q + (attn @ vh).transpose(1, 2).reshape(B, mq, self.dim)
        out = self.ln0(out)
        return self.ln1(out + F.relu(self.fc_o(out)))


class SAB(nn.Module):
    def __init__(self, dim_in: int, dim: int, num_heads: int, ln: bool = True):
        super().__init__()
        self.mab = MAB(dim_in, dim_in, dim, num_heads, ln)

    def forward(self, x):
        return self.mab(x, x)


class PMA(nn.Module):
    """Attention pooling onto learned seed vectors."""

    def __init__(self, dim: int, num_heads: int, num_seeds: int = 1, ln: bool = True):
        super().__init__()
        self.seeds = nn.Parameter(torch.empty(1, num_seeds, dim))
        nn.init.xavier_uniform_(self.seeds)
        self.mab = MAB(dim, dim, dim, num_heads, ln)

    def forward(self, x):
        return self.mab(self.seeds.expand(x.shape[0], -1, -1), x)


class STEncoder(nn.Module):
    """Permutation-equivariant stack of self-attention blocks: ``[..., m, d_in] -> [..., m, d]``."""

    def __init__(self, dim_in: int, config: SetEncoderConfig):
        super().__init__()
        d, h = config.embed_dim, config.num_heads
        blocks = [SAB(dim_in, d, h)] + [SAB(d, d, h) for _ in range(config.num_blocks - 1)]
        self.blocks = nn.Sequential(*blocks)
        self.dim_out = d

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        flat, lead = _flatten_sets(x)
        return self.blocks(flat).reshape(*lead, flat.shape[1], self.dim_out)


class SetTransformer(nn.Module):
    """Encoder plus attention-pooling decoder: ``[..., m, d_in] -> [..., d_out]``, permutation-invariant."""

    def __init__(self, dim_in: int, config: SetEncoderConfig, dim_out: int | None = None):
        super().__init__()
        d, h = config.embed_dim, config.num_heads
        self.encoder = STEncoder(dim_in, config)
        self.pool = PMA(d, h, num_seeds=1)
        self.refine = SAB(d, d, h)
        self.dim_out = dim_out or d
        self.proj = nn.Linear(d, self.dim_out)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        flat, lead = _flatten_sets(x)
        z = self.encoder.blocks(flat)
        z = self.refine(self.pool(z)).squeeze(1)
        return self.proj(z).reshape(*lead, self.dim_out)


def st_encode(elements: torch.Tensor, encoder: STEncoder) -> torch.Tensor:
    return encoder(elements)


def st_full(elements: torch.Tensor, model: SetTransformer) -> torch.Tensor:
    return model(elements)


def _check_agents(x: torch.Tensor, n: int):
    if x.shape[-2] != 2 * n + 4:
        raise ShapeError(f"expected {2 * n + 4} agents (n={n} per team), got {x.shape[-2]}")


class PPEEncoder(nn.Module):
    """Teammate-aware embeddings: one shared set encoder applied to each team separately;
    ball-out states pass through an agent-wise linear map of their own features."""

    def __init__(self, n: int, dim_in: int, d: int = 16, num_heads: int = 4):
        super().__init__()
        self.n = n
        self.team = STEncoder(dim_in, SetEncoderConfig(d, num_heads))
        self.ball_out = nn.Sequential(nn.Linear(dim_in, d), nn.ReLU())

    def forward(self, x):
        _check_agents(x, self.n)
        n = self.n
        return torch.cat(
            [self.team(x[..., :n, :]), self.team(x[..., n : 2 * n, :]), self.ball_out(x[..., 2 * n :, :])],
            dim=-2,
        )


class FPEEncoder(nn.Module):
    """Set encoder over every agent, fully permutation-equivariant."""

    def __init__(self, n: int, dim_in: int, d: int = 16, num_heads: int = 4):
        super().__init__()
        self.n = n
        self.encoder = STEncoder(dim_in, SetEncoderConfig(d, num_heads))

    def forward(self, x):
        _check_agents(x, self.n)
        return self.encoder(x)


class FPIEncoder(nn.Module):
    """Whole-context embedding, invariant to any permutation of the agents."""

    def __init__(self, n: int, dim_in: int, d: int = 16, num_heads: int = 4):
        super().__init__()
        self.n = n
        self.model = SetTransformer(dim_in, SetEncoderConfig(d, num_heads))

    def forward(self, x):
        _check_agents(x, self.n)
        return self.model(x)


@dataclass
class PPIEmbedding:
    team1: torch.Tensor
    team2: torch.Tensor
    ball_out: torch.Tensor | None
    fused: torch.Tensor


class PPIEncoder(nn.Module):
    """Partially permutation-invariant context: a set transformer per team, a linear map of
    the concatenated ball-out features, and a linear fusion of the three parts.

    With ``with_ball_out=False`` the input holds only the ``2n`` players.
    """

    def __init__(self, n: int, dim_in: int, d: int = 128, num_heads: int = 4, with_ball_out: bool = True):
        super().__init__()
        self.n, self.with_ball_out = n, with_ball_out
        cfg = SetEncoderConfig(d, num_heads)
        self.team1 = SetTransformer(dim_in, cfg)
        self.team2 = SetTransformer(dim_in, cfg)
        parts = 2
        if with_ball_out:
            self.ball_out = nn.Sequential(nn.Linear(4 * dim_in, d), nn.ReLU())
            parts = 3
        self.fuse = nn.Linear(parts * d, d)

    def forward(self, x) -> PPIEmbedding:
        n = self.n
        expected = 2 * n + 4 if self.with_ball_out else 2 * n
        if x.shape[-2] != expected:
            raise ShapeError(f"expected {expected} agents, got {x.shape[-2]}")
        z1, z2 = self.team1(x[..., :n, :]), self.team2(x[..., n : 2 * n, :])
        parts = [z1, z2]
        z0 = None
        if self.with_ball_out:
            z0 = self.ball_out(x[..., 2 * n :, :].flatten(-2))
            parts.append(z0)
        return PPIEmbedding(z1, z2, z0, self.fuse(torch.cat(parts, dim=-1)))
