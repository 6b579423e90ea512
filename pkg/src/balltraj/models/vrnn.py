"""Context-conditioned VRNN baseline with a backward context recurrence."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from ..config import ModelConfig
from ..set_encoders import PPIEncoder
from .hierarchical import BallPrediction, ModelOutput, NumericError, _check_inputs
from .layers import FeatureScaler

SIGMA_FLOOR = 1e-4


def _mlp(dim_in: int, dim_hidden: int, dim_out: int) -> nn.Sequential:
    return nn.Sequential(nn.Linear(dim_in, dim_hidden), nn.ReLU(), nn.Linear(dim_hidden, dim_out))


def _gaussian(params: torch.Tensor):
    mu, raw = params.chunk(2, dim=-1)
    sigma = F.softplus(raw) + SIGMA_FLOOR
    return mu, sigma


def gaussian_kl(mu_q, sigma_q, mu_p, sigma_p) -> torch.Tensor:
    """KL(q || p) for diagonal Gaussians, summed over the last axis."""
    return (
        torch.log(sigma_p / sigma_q) + (sigma_q**2 + (mu_q - mu_p) ** 2) / (2 * sigma_p**2) - 0.5
    ).sum(-1)


def gaussian_nll(x, mu, sigma) -> torch.Tensor:
    return (0.5 * ((x - mu) / sigma) ** 2 + torch.log(sigma) + 0.5 * math.log(2 * math.pi)).sum(-1)


@dataclass
class VRNNOutputs:
    prior_mu: torch.Tensor
    prior_sigma: torch.Tensor
    enc_mu: torch.Tensor | None
    enc_sigma: torch.Tensor | None
    dec_mu: torch.Tensor  # normalised coordinates
    dec_sigma: torch.Tensor
    context: torch.Tensor
    latent: torch.Tensor

    def kl(self) -> torch.Tensor:
        """Per-frame KL(q || p), ``[B, T]``."""
        if self.enc_mu is None:
            raise ValueError("KL needs encoder outputs (posterior sampling)")
        return gaussian_kl(self.enc_mu, self.enc_sigma, self.prior_mu, self.prior_sigma)


class ContextVRNN(nn.Module):
    """Ball-trajectory VRNN conditioned on a per-frame player context.

    The forward recurrence consumes (context, ball, latent); the backward one
    consumes the context only, so every distribution at frame t sees the future
    context through the backward state at t.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        H, zd, d = cfg.lstm_hidden, cfg.latent_dim, cfg.d_btr
        self.scaler = FeatureScaler(cfg.pitch, cfg.n_features)
        self.context = PPIEncoder(cfg.n_players, cfg.n_features, d, cfg.heads, with_ball_out=False)
        self.backward_rnn = nn.LSTM(d, H, batch_first=True)
        self.cell = nn.LSTMCell(d + 2 + zd, H)
        self.prior = _mlp(2 * H, H, 2 * zd)
        self.encoder = _mlp(2 * H + 2, H, 2 * zd)
        self.decoder = _mlp(2 * H + zd, H, 4)

    def forward(
        self,
        features: torch.Tensor,
        target: torch.Tensor | None = None,
        sample_source: str = "POSTERIOR",
        sample: bool = True,
        generator: torch.Generator | None = None,
        **_,
    ) -> ModelOutput:
        _check_inputs(features, self.cfg)
        source = sample_source.upper()
        if source not in ("PRIOR", "POSTERIOR"):
            raise ValueError(f"sample_source must be PRIOR or POSTERIOR, got {sample_source!r}")
        if source == "POSTERIOR" and target is None:
            raise ValueError("posterior sampling needs the target ball trajectory")
        n2 = 2 * self.cfg.n_players
        o = self.context(self.scaler(features)[..., :n2, :]).fused
        B, T, _ = o.shape
        hb = self.backward_rnn(o.flip(1))[0].flip(1)
        H = self.cfg.lstm_hidden
        hf = o.new_zeros(B, H)
        cf = o.new_zeros(B, H)
        x_true = self.scaler.positions_in(target) if target is not None else None

        def noise(like):
            return torch.randn(like.shape, generator=generator, dtype=like.dtype, device=like.device)

        rec = {k: [] for k in ("pm", "ps", "qm", "qs", "dm", "ds", "z", "hf")}
        for t in range(T):
            ctx = torch.cat([hf, hb[:, t]], dim=-1)
            pm, ps = _gaussian(self.prior(ctx))
            if source == "POSTERIOR":
                qm, qs = _gaussian(self.encoder(torch.cat([ctx, x_true[:, t]], dim=-1)))
                z = qm + qs * noise(qm) if sample else qm
                rec["qm"].append(qm)
                rec["qs"].append(qs)
            else:
                z = pm + ps * noise(pm) if sample else pm
            dm, ds = _gaussian(self.decoder(torch.cat([ctx, z], dim=-1)))
            x_in = x_true[:, t] if source == "POSTERIOR" else dm
            hf, cf = self.cell(torch.cat([o[:, t], x_in, z], dim=-1), (hf, cf))
            for k, v in (("pm", pm), ("ps", ps), ("dm", dm), ("ds", ds), ("z", z), ("hf", hf)):
                rec[k].append(v)
        st = {k: torch.stack(v, dim=1) if v else None for k, v in rec.items()}
        for k in ("ps", "ds", "qs"):
            if st[k] is not None and not torch.isfinite(st[k]).all():
                raise NumericError(f"non-finite standard deviation in {k}")
        outs = VRNNOutputs(st["pm"], st["ps"], st["qm"], st["qs"], st["dm"], st["ds"], o, st["z"])
        pred = self.scaler.positions_out(st["dm"])
        return ModelOutput(BallPrediction(pred, torch.cat([st["hf"], hb], dim=-1)), extras=outs)

    def elbo_loss(self, out: ModelOutput, target: torch.Tensor, kl_weight: float = 1.0) -> torch.Tensor:
        v: VRNNOutputs = out.extras
        nll = gaussian_nll(self.scaler.positions_in(target), v.dec_mu, v.dec_sigma)
        return (nll + kl_weight * v.kl()).mean()


def vrnn_generate(model: ContextVRNN, features, sample_source="PRIOR", target=None, seed=0) -> BallPrediction:
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        return model(features, target=target, sample_source=sample_source, generator=g).ball
