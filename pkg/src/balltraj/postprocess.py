"""Rule-based touch assignment and piecewise-linear trajectory reconstruction."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.ndimage import uniform_filter1d

from .config import PostprocessConfig

TOUCH, CARRY, TRANSITION = "TOUCH", "CARRY", "TRANSITION"


def possession_scores(probs: np.ndarray, pred: np.ndarray, positions: np.ndarray, d_min: float = 0.5) -> np.ndarray:
    """``probs[t, k] / max(|pred[t] - positions[t, k]|, d_min)`` for every agent.

    ``probs`` is ``[T, K]``, ``pred`` ``[T, 2]`` and ``positions`` ``[T, K, 2]``
    (ball-out states sit at their pitch-line midpoints).
    """
    probs, pred, positions = np.asarray(probs, float), np.asarray(pred, float), np.asarray(positions, float)
    T, K = probs.shape
    if pred.shape != (T, 2) or positions.shape != (T, K, 2):
        raise ValueError(f"inconsistent shapes {probs.shape}, {pred.shape}, {positions.shape}")
    dist = np.linalg.norm(positions - pred[:, None, :], axis=-1)
    return probs / np.maximum(dist, d_min)


@dataclass(frozen=True)
class Interval:
    agent: int  # -1 for transitions
    start: int  # first frame, inclusive
    end: int  # last frame, inclusive
    kind: str


@dataclass
class TouchAssignment:
    toucher: np.ndarray  # [T] agent index, -1 where the ball is in transition
    intervals: list[Interval] = field(default_factory=list)
    start_time: float = 0.0
    dt: float = 0.1

    def __post_init__(self):
        if not self.intervals:
            self.intervals = _runs(self.toucher)

    def __len__(self):
        return len(self.toucher)

    @property
    def touched(self) -> np.ndarray:
        return self.toucher >= 0

    def time(self, frame: int) -> float:
        return round(self.start_time + frame * self.dt, 9)

    def touches(self) -> list[Interval]:
        return [iv for iv in self.intervals if iv.kind != TRANSITION]

    def to_rows(self, agent_ids: Sequence[str] | None = None) -> list[tuple]:
        rows = []
        for iv in self.intervals:
            name = "" if iv.agent < 0 else (agent_ids[iv.agent] if agent_ids is not None else str(iv.agent))
            rows.append((self.time(iv.start), self.time(iv.end), name, iv.kind))
        return rows

    def to_csv(self, path: str | Path, agent_ids: Sequence[str] | None = None) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_start", "t_end", "agent", "kind"])
            for a, b, name, kind in self.to_rows(agent_ids):
                w.writerow([f"{a:.3f}", f"{b:.3f}", name, kind])


def _runs(toucher: np.ndarray) -> list[Interval]:
    out = []
    T = len(toucher)
    s = 0
    for t in range(1, T + 1):
        if t == T or toucher[t] != toucher[s]:
            a = int(toucher[s])
            kind = TRANSITION if a < 0 else (CARRY if t - s > 1 else TOUCH)
            out.append(Interval(a, s, t - 1, kind))
            s = t
    return out


def _peak_frames(m: np.ndarray, cfg: PostprocessConfig) -> np.ndarray:
    """Frames at which the max-score series peaks.

    Peaks are found on the moving-average smoothed series (must dominate a
    ``peak_radius`` neighbourhood and not be flat there); each peak is then
    placed on the raw-series maximum within the smoothing half-width.
    """
    T = len(m)
    w = max(1, cfg.smooth_frames)
    sm = uniform_filter1d(m, size=w, mode="nearest") if w > 1 else m
    r, h = cfg.peak_radius, w // 2
    peaks = np.zeros(T, dtype=bool)
    for t in range(T):
        nb = sm[max(0, t - r) : t + r + 1]
        if sm[t] >= nb.max() and sm[t] > nb.min():
            lo = max(0, t - h)
            peaks[lo + int(np.argmax(m[lo : t + h + 1]))] = True
    return peaks


def assign_touches(scores: np.ndarray, cfg: PostprocessConfig = PostprocessConfig(),
                   start_time: float = 0.0, dt: float = 0.1) -> TouchAssignment:
    """Label each frame as touched by the top-scoring agent or as transition.

    A frame is touched when the top score exceeds ``touch_threshold``, or when it
    lies in ``(peak_threshold, touch_threshold]`` at a local peak of the
    max-score series (one-touch play). Everything else is transition.
    """
    scores = np.asarray(scores, float)
    m = scores.max(axis=1)
    q = scores.argmax(axis=1)
    touched = m > cfg.touch_threshold
    touched |= (m > cfg.peak_threshold) & (m <= cfg.touch_threshold) & _peak_frames(m, cfg)
    return TouchAssignment(np.where(touched, q, -1), start_time=start_time, dt=dt)


def rebuild_trajectory(assignment: TouchAssignment, positions: np.ndarray, pred: np.ndarray) -> np.ndarray:
    """Put the ball on the toucher at touched frames and interpolate linearly in between.

    Frames before the first or after the last touched frame keep ``pred``.
    """
    pred = np.asarray(pred, float)
    out = pred.copy()
    idx = np.flatnonzero(assignment.touched)
    if len(idx) == 0:
        return out
    anchors = np.asarray(positions, float)[idx, assignment.toucher[idx]]
    inner = np.arange(idx[0], idx[-1] + 1)
    for k in range(2):
        out[inner, k] = np.interp(inner, idx, anchors[:, k])
    return out


def postprocess(probs, pred, positions, cfg: PostprocessConfig = PostprocessConfig(),
                start_time: float = 0.0, dt: float = 0.1):
    """Scores, touch assignment and rebuilt trajectory for one sequence."""
    scores = possession_scores(probs, pred, positions, cfg.d_min)
    assignment = assign_touches(scores, cfg, start_time, dt)
    return assignment, rebuild_trajectory(assignment, positions, pred)
