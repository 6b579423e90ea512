"""Desk-scale experiments on simulator data: overfit probe, hierarchy ablation, imputation trend.

Each experiment is driven by a dataclass config so scripts and the acceptance
suite run exactly the same thing.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

from .applications import IMPUTATION_RATES, evaluate_imputation
from .config import LossWeights, ModelConfig, PostprocessConfig, TrainConfig, Variant
from .metrics import MetricsReport
from .sim import SimulatedMatch, simulate_dataset
from .tracking import Window, make_windows, whole_episode_window
from .training import EpochLog, evaluate_windows, train_model

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimData:
    n_episodes: int = 10
    seed: int = 0
    n_players: int = 4
    duration: float = 15.0
    window: int = 100
    stride: int = 10

    def matches(self) -> list[SimulatedMatch]:
        return simulate_dataset(self.n_episodes, self.seed, self.n_players, self.duration)

    def windows(self, matches=None) -> list[Window]:
        matches = matches if matches is not None else self.matches()
        return [w for m in matches for w in make_windows(m.episode, self.window, self.stride, m.agent_set)]

    def whole(self, matches=None) -> list[Window]:
        matches = matches if matches is not None else self.matches()
        return [whole_episode_window(m.episode, m.agent_set) for m in matches]


def small_model(variant: Variant = Variant.H_LSTM, n_players: int = 4, **kw) -> ModelConfig:
    """The CPU-sized architecture used throughout the desk-scale experiments."""
    base = dict(n_players=n_players, d_g=16, d_btr=32, lstm_hidden=32, lstm_layers=2, dropout=0.0, heads=2,
                transformer_dim=32, transformer_layers=2, latent_dim=8)
    base.update(kw)
    return ModelConfig(variant, **base)


# ---------------------------------------------------------------------------
# Overfit probe


@dataclass(frozen=True)
class ProbeConfig:
    data: SimData = field(default_factory=SimData)
    model: ModelConfig = field(default_factory=small_model)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(
        learning_rate=2e-3, batch_size=16, max_epochs=200, patience=1000, flip=False,
        weights=LossWeights(lambda_real=0.0, lambda_ce=20.0)))
    target_pe: float = 1.0
    target_ppa: float = 0.9
    stop_at_target: bool = True


@dataclass
class ProbeResult:
    reached_epoch: int | None
    epochs_run: int
    seconds: float
    final: MetricsReport
    best: MetricsReport
    model: object = None


def overfit_probe(cfg: ProbeConfig = ProbeConfig(), progress=None) -> ProbeResult:
    """Train on a handful of episodes and report when training PE and PPA cross the targets."""
    windows = cfg.data.windows()
    reached: list[int] = []
    best: list[MetricsReport] = []

    def hook(e: EpochLog):
        if progress is not None:
            progress(e)
        if not best or e.val.pe < best[0].pe:
            best[:] = [e.val]
        hit = e.val.pe < cfg.target_pe and e.val.ppa is not None and e.val.ppa > cfg.target_ppa
        if hit and not reached:
            reached.append(e.epoch)
        return hit and cfg.stop_at_target

    t0 = time.monotonic()
    res = train_model(cfg.model, cfg.train, windows, on_epoch=hook)
    seconds = time.monotonic() - t0
    return ProbeResult(reached[0] if reached else None, len(res.history), seconds, res.history[-1].val, best[0],
                       res.model)


# ---------------------------------------------------------------------------
# Hierarchy ablation


@dataclass(frozen=True)
class AblationConfig:
    train_data: SimData = field(default_factory=lambda: SimData(n_episodes=16, seed=1, stride=20))
    test_data: SimData = field(default_factory=lambda: SimData(n_episodes=8, seed=2))
    variants: tuple[Variant, ...] = (Variant.H_LSTM, Variant.LSTM)
    epochs: int = 120
    learning_rate: float = 2e-3
    batch_size: int = 16
    weights: LossWeights = field(default_factory=lambda: LossWeights(lambda_real=1.0, lambda_ce=20.0))
    seeds: tuple[int, ...] = (0, 1, 2)


@dataclass
class AblationResult:
    reports: dict[int, dict[Variant, MetricsReport]]
    models: dict[int, dict[Variant, object]]

    def wins(self) -> int:
        """Seeds on which the hierarchical model has the lower test PE."""
        return sum(r[Variant.H_LSTM].pe < r[Variant.LSTM].pe for r in self.reports.values())


def hierarchy_ablation(cfg: AblationConfig = AblationConfig(), progress=None) -> AblationResult:
    """Test metrics per seed and variant under one shared epoch budget.

    Every variant sees the same windows, epochs, learning rate and batch size;
    the last epoch's weights are evaluated, so no variant gets extra selection.
    """
    train_w = cfg.train_data.windows()
    test_w = cfg.test_data.whole()
    out = AblationResult({}, {})
    for seed in cfg.seeds:
        out.reports[seed], out.models[seed] = {}, {}
        for variant in cfg.variants:
            tc = TrainConfig(learning_rate=cfg.learning_rate, batch_size=cfg.batch_size, max_epochs=cfg.epochs,
                             patience=cfg.epochs + 1, seed=seed, weights=cfg.weights)
            res = train_model(small_model(variant, cfg.train_data.n_players), tc, train_w, validate=False)
            rep = evaluate_windows(res.model, test_w)
            out.reports[seed][variant] = rep
            out.models[seed][variant] = res.model
            if progress is not None:
                progress(seed, variant, rep)
    return out


# ---------------------------------------------------------------------------
# Imputation trend


@dataclass(frozen=True)
class ImputationConfig:
    train_data: SimData = field(default_factory=lambda: SimData(n_episodes=16, seed=3, stride=20))
    test_data: SimData = field(default_factory=lambda: SimData(n_episodes=8, seed=4))
    model: ModelConfig = field(default_factory=lambda: small_model(imputation=True))
    train: TrainConfig = field(default_factory=lambda: TrainConfig(
        learning_rate=2e-3, batch_size=16, max_epochs=40, patience=1000, seed=0,
        weights=LossWeights(lambda_real=1.0, lambda_ce=20.0)))
    rates: tuple[float, ...] = IMPUTATION_RATES
    mask_seed: int = 0


def imputation_trend(cfg: ImputationConfig = ImputationConfig(), progress=None):
    """Train one imputation model and evaluate it at every masking rate on held-out episodes."""
    res = train_model(cfg.model, cfg.train, cfg.train_data.windows(), on_epoch=progress, validate=False)
    reports = evaluate_imputation(res.model, cfg.test_data.whole(), cfg.rates, cfg.mask_seed, PostprocessConfig())
    return reports, res.model


def strictly_decreasing(values) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))
