"""Figures for inspecting predictions: pitch overlays and possession-score traces."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .config import PitchConfig  # noqa: E402


def draw_pitch(ax, pitch: PitchConfig = PitchConfig()):
    L, W = pitch.length, pitch.width
    ax.plot([0, L, L, 0, 0], [0, 0, W, W, 0], color="0.4", lw=1)
    ax.plot([L / 2, L / 2], [0, W], color="0.4", lw=1)
    ax.add_patch(plt.Circle((L / 2, W / 2), 9.15, fill=False, color="0.4", lw=1))
    ax.set_xlim(-3, L + 3)
    ax.set_ylim(-3, W + 3)
    ax.set_aspect("equal")
    ax.set_xticks([])
    ax.set_yticks([])
    return ax


def trajectory_figure(players: np.ndarray, truth: np.ndarray | None = None, pred: np.ndarray | None = None,
                      rebuilt: np.ndarray | None = None, team_map: np.ndarray | None = None,
                      pitch: PitchConfig = PitchConfig(), title: str = ""):
    """Player tracks (faint) with true, predicted and postprocessed ball paths on top."""
    fig, ax = plt.subplots(figsize=(8, 5.5))
    draw_pitch(ax, pitch)
    colors = {1: "tab:red", 2: "tab:blue"}
    for k in range(players.shape[1]):
        c = colors.get(int(team_map[k]), "0.5") if team_map is not None else "0.5"
        ax.plot(players[:, k, 0], players[:, k, 1], color=c, alpha=0.3, lw=1)
        ax.plot(*players[-1, k], "o", color=c, ms=4)
    for path, label, style in ((truth, "true", "k-"), (pred, "predicted", "g--"), (rebuilt, "postprocessed", "m-")):
        if path is not None:
            ax.plot(path[:, 0], path[:, 1], style, lw=1.5, label=label)
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title(title)
    fig.tight_layout()
    return fig


def score_figure(scores: np.ndarray, touched: np.ndarray | None = None, dt: float = 0.1,
                 thresholds: tuple[float, float] = (0.5, 0.2)):
    """Max-over-agents possession score with the touch thresholds and assigned frames."""
    t = np.arange(len(scores)) * dt
    fig, ax = plt.subplots(figsize=(9, 3))
    ax.plot(t, scores.max(axis=1), lw=1, label="max score")
    for th in thresholds:
        ax.axhline(th, color="0.5", ls=":", lw=1)
    if touched is not None:
        ax.plot(t[touched], scores.max(axis=1)[touched], "r.", ms=4, label="touched")
    ax.set_xlabel("time (s)")
    ax.set_ylim(0, min(2.2, float(scores.max()) * 1.1 + 0.05))
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def curve_figure(xs, series: dict[str, list[float]], xlabel: str, ylabel: str):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, ys in series.items():
        ax.plot(xs, ys, "o-", label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
