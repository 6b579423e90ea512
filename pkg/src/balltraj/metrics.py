"""Evaluation metrics: position error, reality loss, player/team possession accuracy."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .losses import reality_loss


def position_error(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean Euclidean distance in meters."""
    pred, target = np.asarray(pred, float), np.asarray(target, float)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.linalg.norm(pred - target, axis=-1).mean())


def possession_accuracy(probs: np.ndarray, labels: np.ndarray, team_map: np.ndarray) -> tuple[float, float]:
    """(player-level, team-level) accuracy of the argmax possessor.

    ``team_map[k]`` is the team (1, 2, or 0 for ball-out states) of class ``k``.
    """
    probs, labels, team_map = np.asarray(probs), np.asarray(labels), np.asarray(team_map)
    if probs.shape[-1] != len(team_map):
        raise ValueError("team_map must cover every class")
    if labels.size and (labels.min() < 0 or labels.max() >= len(team_map)):
        raise ValueError("label refers to an agent missing from team_map")
    pred = probs.argmax(-1)
    ppa = float((pred == labels).mean())
    tpa = float((team_map[pred] == team_map[labels]).mean())
    return ppa, tpa


@dataclass
class MetricsReport:
    pe: float
    rl: float
    ppa: float | None = None
    tpa: float | None = None

    FIELDS = ("pe", "rl", "ppa", "tpa")

    def to_text(self) -> str:
        return "\n".join(f"{k} = {'' if v is None else f'{v:.6f}'}" for k, v in self._items())

    def _items(self):
        return [(k, getattr(self, k)) for k in self.FIELDS]

    @classmethod
    def csv_header(cls, extra: tuple[str, ...] = ()) -> str:
        return ",".join(extra + cls.FIELDS)

    def to_csv_row(self, extra: tuple = ()) -> str:
        vals = ["" if v is None else f"{v:.6f}" for _, v in self._items()]
        return ",".join([str(e) for e in extra] + vals)

    def table_row(self, name: str) -> str:
        """``H-LSTM-RL | 4.2150 | 0.1200 | 61.25% | 83.50%`` style line."""
        pct = lambda v: "-" if v is None else f"{100 * v:.2f}%"
        return f"{name} | {self.pe:.4f} | {self.rl:.4f} | {pct(self.ppa)} | {pct(self.tpa)}"

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def evaluate_sequences(preds, targets, players, probs=None, labels=None, team_map=None) -> MetricsReport:
    """Frame-weighted metrics over a list of variable-length sequences."""
    n = np.array([len(t) for t in targets], dtype=float)
    pe = np.array([position_error(p, t) for p, t in zip(preds, targets)])
    rl_w = np.array([max(len(t) - 2, 0) for t in targets], dtype=float)
    rl = np.array([reality_loss(p, x) if len(p) >= 3 else 0.0 for p, x in zip(preds, players)])
    report = MetricsReport(float((pe * n).sum() / n.sum()), float((rl * rl_w).sum() / max(rl_w.sum(), 1)))
    if probs is not None:
        accs = np.array([possession_accuracy(g, q, team_map) for g, q in zip(probs, labels)])
        report.ppa = float((accs[:, 0] * n).sum() / n.sum())
        report.tpa = float((accs[:, 1] * n).sum() / n.sum())
    return report
