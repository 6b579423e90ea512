"""Reader for the Metrica Sports sample-data CSV layout (Sample Games 1 and 2).

A match directory holds ``*RawTrackingData_Home_Team.csv``,
``*RawTrackingData_Away_Team.csv`` and ``*RawEventsData.csv``. Metrica
coordinates are normalised to [0, 1] with y pointing down; they are scaled to
meters with y flipped so that the pitch frame is right-handed.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pandas as pd

from .config import PitchConfig
from .tracking import (
    OUT_AGENT_IDS,
    EventRecord,
    EventType,
    PlayerState,
    Team,
    TrackingError,
    TrackingFrame,
    ball_out_positions,
)

METRICA_HZ = 25.0


def to_meters(x, y, pitch: PitchConfig):
    return np.asarray(x, dtype=float) * pitch.length, (1.0 - np.asarray(y, dtype=float)) * pitch.width


def _find(match_dir: Path, pattern: str) -> Path:
    hits = sorted(match_dir.glob(pattern))
    if not hits:
        raise TrackingError(f"{match_dir}: no file matching {pattern}")
    return hits[0]


def read_team_file(path: Path, pitch: PitchConfig):
    """Return (times, periods, {player_id: [N, 2]}, ball [N, 2]) for one team file."""
    with path.open() as fh:
        fh.readline()
        fh.readline()
        header = fh.readline().rstrip("\n").split(",")
    cols = []
    for i, name in enumerate(header):
        if i < 3:
            cols.append(name)
        elif name:
            cols.append(f"{name}_x")
        else:
            cols.append(f"{cols[-1][:-2]}_y")
    df = pd.read_csv(path, skiprows=3, header=None, names=cols)
    tracks = {}
    for c in cols[3:]:
        if c.endswith("_x"):
            pid = c[:-2]
            x, y = to_meters(df[c].to_numpy(), df[f"{pid}_y"].to_numpy(), pitch)
            tracks[pid] = np.stack([x, y], axis=1)
    ball = tracks.pop("Ball", None)
    return df["Time [s]"].to_numpy(dtype=float), df["Period"].to_numpy(), tracks, ball


def load_metrica_tracking(match_dir: Path, pitch: PitchConfig) -> list[TrackingFrame]:
    """Frames at 25 Hz; a frame is in play iff the tracked ball is present."""
    if not match_dir.is_dir():
        raise TrackingError(f"{match_dir}: metrica format expects a match directory")
    t_home, _, home, ball = read_team_file(_find(match_dir, "*Home_Team.csv"), pitch)
    t_away, _, away, _ = read_team_file(_find(match_dir, "*Away_Team.csv"), pitch)
    if len(t_home) != len(t_away):
        raise TrackingError(f"{match_dir}: home and away files have different lengths")
    frames = []
    for i, t in enumerate(t_home):
        players = []
        for team, tracks in ((Team.TEAM1, home), (Team.TEAM2, away)):
            for pid, xy in tracks.items():
                if np.isfinite(xy[i]).all():
                    players.append(PlayerState(pid, team, float(xy[i, 0]), float(xy[i, 1])))
        b = None
        if ball is not None and np.isfinite(ball[i]).all():
            b = (float(ball[i, 0]), float(ball[i, 1]))
        frames.append(TrackingFrame(float(t), tuple(players), b, b is not None))
    return frames


def nearest_out_agent(x: float, y: float, pitch: PitchConfig) -> str:
    d = np.linalg.norm(ball_out_positions(pitch) - np.array([x, y]), axis=1)
    # distance to the line itself decides which boundary was crossed
    line_dist = [abs(x), abs(pitch.length - x), abs(y), abs(pitch.width - y)]
    return OUT_AGENT_IDS[int(np.argmin(np.asarray(line_dist) + 1e-9 * d))]


def load_metrica_events(path: Path, pitch: PitchConfig) -> list[EventRecord]:
    if path.is_dir():
        path = _find(path, "*RawEventsData.csv")
    df = pd.read_csv(path)
    events = []
    for row in df.itertuples(index=False):
        etype = str(row.Type).upper()
        start, end = float(row[5]), float(row[7])
        sender, receiver = row.From, row.To
        if etype == "BALL OUT":
            x, y = to_meters(row[12], row[13], pitch)
            if isinstance(sender, str):
                events.append(EventRecord(start, sender, EventType.PASS))
            if math.isfinite(float(x)) and math.isfinite(float(y)):
                events.append(EventRecord(end, nearest_out_agent(float(x), float(y), pitch), EventType.OUT))
            continue
        if etype in ("CARD", "FAULT RECEIVED"):
            continue
        if isinstance(sender, str):
            events.append(EventRecord(start, sender, EventType.PASS if etype == "PASS" else EventType.TOUCH))
        if etype == "PASS" and isinstance(receiver, str):
            events.append(EventRecord(end, receiver, EventType.TOUCH))
    return sorted(events, key=lambda e: e.time)
