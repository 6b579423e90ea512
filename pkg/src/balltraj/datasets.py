"""Match discovery on disk, labelling, splits and trajectory CSVs."""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import PitchConfig
from .tracking import (
    AgentSet,
    Episode,
    EventRecord,
    LabelError,
    TrackingError,
    Window,
    label_episode,
    load_events,
    load_tracking,
    make_windows,
    resample,
    segment_episodes,
    whole_episode_window,
)

log = logging.getLogger(__name__)

DATA_ROOT_ENV = "BALLTRAJ_DATA_ROOT"


@dataclass
class Match:
    name: str
    episodes: list[Episode]
    events: list[EventRecord] = field(default_factory=list)
    labelled: bool = False

    def agent_set(self, episode: Episode, pitch: PitchConfig | None = None) -> AgentSet:
        return AgentSet.from_frame(episode.frames[0], pitch)


def resolve(path: str | Path) -> Path:
    """Relative paths that do not exist are looked up under the data-root env var."""
    p = Path(path)
    root = os.environ.get(DATA_ROOT_ENV)
    if not p.exists() and not p.is_absolute() and root:
        p = Path(root) / p
    if not p.exists():
        raise TrackingError(f"{path}: not found (data root {root or 'unset'})")
    return p


def _canonical_pairs(p: Path) -> list[tuple[str, Path, Path | None]]:
    if p.is_file():
        stem = p.name.removesuffix(".csv").removesuffix("_tracking")
        ev = p.with_name(f"{stem}_events.csv")
        return [(stem, p, ev if ev.exists() else None)]
    out = []
    for tp in sorted(p.glob("*_tracking.csv")):
        stem = tp.name.removesuffix("_tracking.csv")
        ev = tp.with_name(f"{stem}_events.csv")
        out.append((stem, tp, ev if ev.exists() else None))
    if not out:
        raise TrackingError(f"{p}: no *_tracking.csv files")
    return out


def load_match(name: str, tracking: Path, events: Path | None, format: str = "canonical",
               pitch: PitchConfig | None = None, src_hz: float | None = None) -> Match:
    frames = load_tracking(tracking, format, pitch)
    if format == "metrica":
        from .metrica import METRICA_HZ

        src_hz = src_hz or METRICA_HZ
    if src_hz:
        frames = resample(frames, src_hz)
    evs = load_events(events if events is not None else tracking, format, pitch) if (
        events is not None or format == "metrica") else []
    episodes = segment_episodes(frames, evs, prefix=f"{name}-")
    if not evs:
        return Match(name, episodes, [], False)
    labelled = []
    for ep in episodes:
        try:
            labelled.append(label_episode(ep, evs, AgentSet.from_frame(ep.frames[0], pitch)))
        except LabelError as err:
            log.warning("skipping episode %s: %s", ep.episode_id, err)
    return Match(name, labelled, evs, True)


def load_matches(path: str | Path, format: str = "canonical", pitch: PitchConfig | None = None) -> list[Match]:
    """All matches under ``path`` (a canonical tracking file, a directory of them, or Metrica match dirs)."""
    p = resolve(path)
    if format == "metrica":
        dirs = [p] if any(p.glob("*RawTrackingData_Home_Team.csv")) else sorted(
            d for d in p.iterdir() if d.is_dir() and any(d.glob("*RawTrackingData_Home_Team.csv")))
        return [load_match(d.name, d, d, format, pitch) for d in dirs]
    return [load_match(stem, tp, ev, format, pitch) for stem, tp, ev in _canonical_pairs(p)]


def episode_windows(matches: Sequence[Match], n_players: int, T: int = 100, stride: int = 5,
                    pitch: PitchConfig | None = None) -> list[Window]:
    out = []
    for m in matches:
        for ep in m.episodes:
            aset = m.agent_set(ep, pitch)
            if aset.n != n_players:
                log.warning("episode %s has %d players per team, model expects %d; skipped",
                            ep.episode_id, aset.n, n_players)
                continue
            out.extend(make_windows(ep, T, stride, aset))
    return out


def whole_windows(matches: Sequence[Match], n_players: int | None = None,
                  pitch: PitchConfig | None = None) -> list[Window]:
    out = []
    for m in matches:
        for ep in m.episodes:
            aset = m.agent_set(ep, pitch)
            if n_players is not None and aset.n != n_players:
                log.warning("episode %s skipped: %d players per team", ep.episode_id, aset.n)
                continue
            if len(ep) < 3:
                continue
            w = whole_episode_window(ep, aset)
            if np.isfinite(w.features).all():
                out.append(w)
    return out


def split(items: Sequence, fractions: tuple[float, float, float] = (0.7, 0.15, 0.15), seed: int = 0):
    """Shuffle once and cut into train / validation / test."""
    idx = np.random.default_rng(seed).permutation(len(items))
    a = int(round(fractions[0] * len(items)))
    b = a + int(round(fractions[1] * len(items)))
    pick = lambda ii: [items[i] for i in sorted(ii)]
    return pick(idx[:a]), pick(idx[a:b]), pick(idx[b:])


# ---------------------------------------------------------------------------
# Output CSVs

TRAJECTORY_HEADER = ["time", "x", "y"]


def write_trajectory(path: str | Path, times: np.ndarray, ball: np.ndarray) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_HEADER)
        for t, (x, y) in zip(times, ball):
            w.writerow([f"{t:.3f}", repr(float(x)), repr(float(y))])


def read_trajectory(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    times = np.array([float(r["time"]) for r in rows])
    ball = np.array([(float(r["x"]), float(r["y"])) for r in rows]).reshape(-1, 2)
    return times, ball


def write_possession(path: str | Path, times: np.ndarray, probs: np.ndarray, agent_ids: Sequence[str]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "possessor", *agent_ids])
        for t, row in zip(times, probs):
            w.writerow([f"{t:.3f}", agent_ids[int(np.argmax(row))], *(f"{p:.6g}" for p in row)])
