"""Training losses. All three terms are nonnegative penalties.

Tensors may carry leading batch dimensions; per-sequence values are averaged
over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .config import LossWeights
from .tracking import InsufficientDataError

EPS_STEP = 1e-6  # meters per frame below which the heading is undefined


def _as_tensor(x):
    if isinstance(x, np.ndarray):
        return torch.from_numpy(np.asarray(x, dtype=np.float64)), True
    return x, False


def mse_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean over time of squared Euclidean error."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {tuple(pred.shape)} vs {tuple(target.shape)}")
    return ((pred - target) ** 2).sum(-1).mean()


def _safe_norm(v: torch.Tensor) -> torch.Tensor:
    sq = (v**2).sum(-1)
    pos = sq > 0
    return torch.where(pos, torch.sqrt(torch.where(pos, sq, torch.ones_like(sq))), torch.zeros_like(sq))


def turning_angles(traj: torch.Tensor, eps: float = EPS_STEP) -> torch.Tensor:
    """Heading change at every interior frame, ``[..., T-2]``; zero where a step is shorter than ``eps``."""
    v = traj[..., 1:, :] - traj[..., :-1, :]
    a, b = v[..., :-1, :], v[..., 1:, :]
    cross = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    dot = (a * b).sum(-1)
    ok = (_safe_norm(a) >= eps) & (_safe_norm(b) >= eps)
    cross = torch.where(ok, cross, torch.zeros_like(cross))
    dot = torch.where(ok, dot, torch.ones_like(dot))
    return torch.atan2(cross.abs(), dot)


def reality_loss(pred, players, eps: float = EPS_STEP):
    """Mean of ``tanh(turn angle) * distance to nearest player`` over interior frames.

    ``pred`` is ``[..., T, 2]``, ``players`` is ``[..., T, P, 2]``. NumPy inputs
    return a Python float computed at 64-bit precision.
    """
    pred, was_np = _as_tensor(pred)
    players, _ = _as_tensor(players)
    if pred.shape[-2] < 3:
        raise InsufficientDataError("reality loss needs at least three frames")
    theta = turning_angles(pred, eps)
    dist = _safe_norm(pred[..., 1:-1, None, :] - players[..., 1:-1, :, :]).min(-1).values
    value = (torch.tanh(theta) * dist).mean(-1).mean()
    return float(value) if was_np else value


def ce_loss(probs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Negative log-probability of the true class, averaged over frames."""
    K = probs.shape[-1]
    if labels.numel() and (labels.min() < 0 or labels.max() >= K):
        raise ValueError(f"labels must lie in [0, {K})")
    picked = probs.gather(-1, labels.long().unsqueeze(-1)).squeeze(-1)
    return -torch.log(picked.clamp_min(torch.finfo(probs.dtype).tiny)).mean()


def ce_from_logits(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Same value as ``ce_loss(softmax(logits), labels)``, computed stably."""
    return F.cross_entropy(logits.reshape(-1, logits.shape[-1]), labels.reshape(-1).long())


@dataclass
class LossParts:
    mse: torch.Tensor
    real: torch.Tensor
    ce: torch.Tensor | None = None

    def as_floats(self) -> dict[str, float]:
        val = lambda v: float(v.detach()) if isinstance(v, torch.Tensor) else float(v)
        out = {"mse": val(self.mse), "real": val(self.real)}
        if self.ce is not None:
            out["ce"] = val(self.ce)
        return out


def total_loss(parts: LossParts, weights: LossWeights = LossWeights()) -> torch.Tensor:
    loss = parts.mse + weights.lambda_real * parts.real
    if parts.ce is not None:
        loss = loss + weights.lambda_ce * parts.ce
    return loss
