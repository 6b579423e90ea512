"""Batching, the training loop, checkpoints and whole-sequence inference."""

from __future__ import annotations

import copy
import logging
import math
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .config import ConfigError, LossWeights, ModelConfig, PostprocessConfig, TrainConfig
from .losses import LossParts, ce_from_logits, mse_loss, reality_loss, total_loss
from .metrics import MetricsReport, evaluate_sequences
from .models import ContextVRNN, build_model
from .postprocess import postprocess
from .tracking import Window, flip_augment, mask_ball

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
FLIPS = (None, "H", "V", "HV")


class TrainingError(RuntimeError):
    pass


def set_seed(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


@dataclass
class Batch:
    features: torch.Tensor  # [B, T, K, 6]
    labels: torch.Tensor  # [B, T]
    ball: torch.Tensor  # [B, T, 2]
    obs: torch.Tensor | None  # [B, T, 3]
    players: torch.Tensor  # [B, T, 2n, 2]


def collate(windows: Sequence[Window], with_obs: bool = False, dtype=torch.float32) -> Batch:
    feats = torch.as_tensor(np.stack([w.features for w in windows]), dtype=dtype)
    n2 = 2 * windows[0].agent_set.n
    return Batch(
        feats,
        torch.as_tensor(np.stack([w.labels for w in windows]), dtype=torch.long),
        torch.as_tensor(np.stack([w.ball for w in windows]), dtype=dtype),
        torch.as_tensor(np.stack([w.ball_observation() for w in windows]), dtype=dtype) if with_obs else None,
        feats[..., :n2, :2],
    )


def loss_parts(model, batch: Batch) -> tuple[LossParts, object]:
    if isinstance(model, ContextVRNN):
        out = model(batch.features, target=batch.ball, sample_source="POSTERIOR")
        elbo = model.elbo_loss(out, batch.ball)
        return LossParts(elbo, reality_loss(out.ball.positions, batch.players)), out
    out = model(batch.features, ball_obs=batch.obs)
    pred = out.ball.positions
    ce = ce_from_logits(out.possession.logits, batch.labels) if out.possession is not None else None
    return LossParts(mse_loss(pred, batch.ball), reality_loss(pred, batch.players), ce), out


def batch_loss(model, batch: Batch, weights: LossWeights) -> tuple[torch.Tensor, LossParts]:
    parts, _ = loss_parts(model, batch)
    if isinstance(model, ContextVRNN):
        # the ELBO takes the place of the regression term
        return parts.mse + weights.lambda_real * parts.real, parts
    return total_loss(parts, weights), parts


@dataclass
class EpochLog:
    epoch: int
    train: dict[str, float]
    val_pe: float
    val: MetricsReport | None = None
    seconds: float = 0.0


@dataclass
class TrainResult:
    model: torch.nn.Module
    history: list[EpochLog] = field(default_factory=list)
    best_epoch: int = 0
    best_val_pe: float = math.inf


def _augment(windows: Sequence[Window], rng: np.random.Generator, cfg: TrainConfig, imputation: bool):
    out = []
    for w in windows:
        if cfg.flip:
            mode = FLIPS[int(rng.integers(len(FLIPS)))]
            if mode is not None:
                w = flip_augment(w, mode)
        out.append(w)
    if not imputation:
        return out, False
    if rng.random() < cfg.masked_batch_fraction:
        return [mask_ball(w, cfg.train_keep_probability, int(rng.integers(2**31))) for w in out], True
    return [mask_ball(w, 0.0, 0) for w in out], True


def train_model(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    train_windows: Sequence[Window],
    val_windows: Sequence[Window] | None = None,
    checkpoint_path: str | Path | None = None,
    on_epoch=None,
    time_budget: float | None = None,
    validate: bool = True,
) -> TrainResult:
    """Adam on the weighted loss, keeping the weights with the best validation PE.

    Without validation windows the training PE drives early stopping. A
    non-finite loss aborts with the offending loss parts. ``on_epoch`` receives
    each EpochLog and may return True to end training. With ``validate=False``
    there is no per-epoch evaluation and the final weights are returned.
    """
    if not train_windows:
        raise ConfigError("no training windows")
    set_seed(train_cfg.seed)
    rng = np.random.default_rng(train_cfg.seed)
    model = build_model(model_cfg)
    opt = torch.optim.Adam(model.parameters(), lr=train_cfg.learning_rate)
    val_windows = val_windows if val_windows else train_windows
    result = TrainResult(model)
    best_state, stale = None, 0
    t_start = time.monotonic()
    for epoch in range(1, train_cfg.max_epochs + 1):
        t0 = time.monotonic()
        model.train()
        order = rng.permutation(len(train_windows))
        sums: dict[str, float] = {}
        nb = 0
        for s in range(0, len(order), train_cfg.batch_size):
            ws, with_obs = _augment([train_windows[i] for i in order[s : s + train_cfg.batch_size]], rng,
                                    train_cfg, model_cfg.imputation)
            batch = collate(ws, with_obs)
            loss, parts = batch_loss(model, batch, train_cfg.weights)
            if not torch.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {nb}: {parts.as_floats()}")
            opt.zero_grad()
            loss.backward()
            if train_cfg.grad_clip:
                torch.nn.utils.clip_grad_norm_(model.parameters(), train_cfg.grad_clip)
            opt.step()
            for k, v in {"loss": loss.item(), **parts.as_floats()}.items():
                sums[k] = sums.get(k, 0.0) + v
            nb += 1
        val = evaluate_windows(model, val_windows) if validate else None
        entry = EpochLog(epoch, {k: v / nb for k, v in sums.items()}, val.pe if val else math.nan, val,
                         time.monotonic() - t0)
        result.history.append(entry)
        log.info("epoch %d train %s val pe %.4f ppa %s", epoch,
                 {k: round(v, 4) for k, v in entry.train.items()}, entry.val_pe, val and val.ppa)
        stop = bool(on_epoch(entry)) if on_epoch is not None else False
        if val is None:
            pass  # fixed budget: no selection, no early stopping
        elif val.pe < result.best_val_pe:
            result.best_val_pe, result.best_epoch, stale = val.pe, epoch, 0
            best_state = copy.deepcopy(model.state_dict())
            if checkpoint_path is not None:
                save_checkpoint(checkpoint_path, model, model_cfg, train_cfg)
        else:
            stale += 1
            if stale >= train_cfg.patience:
                log.info("early stop after %d epochs without improvement", stale)
                break
        if time_budget is not None and time.monotonic() - t_start > time_budget:
            log.info("time budget reached after epoch %d", epoch)
            break
        if stop:
            log.info("stopped by callback after epoch %d", epoch)
            break
    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return result


# ---------------------------------------------------------------------------
# Inference


@dataclass
class Prediction:
    ball: np.ndarray  # [T, 2]
    probs: np.ndarray | None  # [T, K]


def predict_window(model, window: Window, use_observations: bool = False, seed: int = 0) -> Prediction:
    """Run the model on one (possibly whole-episode) window.

    With ``use_observations`` the window's masked ball is fed to imputation models.
    """
    model.eval()
    dtype = next(model.parameters()).dtype
    batch = collate([window], with_obs=use_observations, dtype=dtype)
    with torch.no_grad():
        if isinstance(model, ContextVRNN):
            g = torch.Generator().manual_seed(seed)
            out = model(batch.features, sample_source="PRIOR", sample=False, generator=g)
        else:
            out = model(batch.features, ball_obs=batch.obs)
    probs = out.possession.probs[0].double().numpy() if out.possession is not None else None
    ball = out.ball.positions[0].double().numpy()
    if use_observations:
        # exact values, free of the float32 round trip inside the model
        ball[window.ball_mask] = window.ball[window.ball_mask]
    return Prediction(ball, probs)


def window_agent_positions(window: Window) -> np.ndarray:
    """[T, K, 2] positions of every class, ball-out states at their line midpoints."""
    pos = window.features[..., :2].copy()
    pos[:, 2 * window.agent_set.n :] = window.agent_set.ball_out_positions
    return pos


def evaluate_windows(model, windows: Sequence[Window], pp: PostprocessConfig | None = None,
                     keep_probability: float | None = None, mask_seed: int = 0,
                     return_predictions: bool = False):
    """PE / RL / PPA / TPA over windows, optionally after postprocessing.

    ``keep_probability`` masks the ball with a per-window seed derived from
    ``mask_seed`` and feeds the observations to the model; PE still counts all frames.
    """
    preds, targets, players, probs, labels = [], [], [], [], []
    team_map = windows[0].agent_set.team_map
    for i, w in enumerate(windows):
        use_obs = keep_probability is not None
        if use_obs:
            w = mask_ball(w, keep_probability, mask_seed * 100_003 + i)
        p = predict_window(model, w, use_observations=use_obs)
        ball = p.ball
        if pp is not None and p.probs is not None:
            _, ball = postprocess(p.probs, ball, window_agent_positions(w), pp, w.start_time)
            if use_obs:
                ball[w.ball_mask] = w.ball[w.ball_mask]
        preds.append(ball)
        targets.append(w.ball)
        players.append(w.player_positions)
        if p.probs is not None:
            probs.append(p.probs)
            labels.append(w.labels)
    report = evaluate_sequences(preds, targets, players, probs or None, labels or None, team_map)
    if return_predictions:
        return report, preds
    return report


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(path: str | Path, model, model_cfg: ModelConfig, train_cfg: TrainConfig | None = None,
                    extra: dict | None = None) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "model_config": model_cfg.to_dict(),
        "train_config": None if train_cfg is None else {
            "learning_rate": train_cfg.learning_rate, "batch_size": train_cfg.batch_size,
            "seed": train_cfg.seed, "lambda_real": train_cfg.weights.lambda_real,
            "lambda_ce": train_cfg.weights.lambda_ce,
        },
        "dtype": str(next(model.parameters()).dtype),
        "state_dict": model.state_dict(),
        "extra": extra or {},
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path: str | Path):
    """Returns ``(model, model_config, payload)``; rejects unknown versions and configs."""
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except FileNotFoundError:
        raise
    except Exception as err:  # corrupted or foreign file
        raise ConfigError(f"cannot read checkpoint {path}: {err}") from None
    if not isinstance(payload, dict) or payload.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version in {path}")
    cfg = ModelConfig.from_dict(payload["model_config"])
    model = build_model(cfg)
    if payload.get("dtype") == "torch.float64":
        model = model.double()
    try:
        model.load_state_dict(payload["state_dict"])
    except RuntimeError as err:
        raise ConfigError(f"checkpoint weights do not match its config: {err}") from None
    model.eval()
    return model, cfg, payload


__all__ = [
    "Batch", "Prediction", "TrainResult", "TrainingError", "collate", "evaluate_windows",
    "load_checkpoint", "predict_window", "save_checkpoint", "train_model", "window_agent_positions",
]
