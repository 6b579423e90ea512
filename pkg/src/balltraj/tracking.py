"""Tracking-data ingestion and the window pipeline.

Coordinates are meters in the pitch frame with the origin at a pitch corner:
``0 <= x <= length`` along the touchline, ``0 <= y <= width``.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.ndimage import uniform_filter1d

from .config import ConfigError, PitchConfig

DT = 0.1  # seconds per frame at 10 Hz
TIME_TOL = 1e-6
N_FEATURES = 6

OUT_AGENT_IDS = ("OUT_LEFT", "OUT_RIGHT", "OUT_BOTTOM", "OUT_TOP")


class TrackingError(ValueError):
    """Malformed tracking or event input."""


class LabelError(ValueError):
    """Events inconsistent with the episode they are meant to label."""


class InsufficientDataError(ValueError):
    pass


class Team(str, Enum):
    TEAM1 = "TEAM1"
    TEAM2 = "TEAM2"

    @classmethod
    def parse(cls, raw: str) -> "Team":
        key = raw.strip().upper()
        aliases = {"1": cls.TEAM1, "HOME": cls.TEAM1, "2": cls.TEAM2, "AWAY": cls.TEAM2}
        if key in aliases:
            return aliases[key]
        return cls(key)


class EventType(str, Enum):
    TOUCH = "TOUCH"  # a control interval [time, end_time] by player_id
    PASS = "PASS"  # control interval that ends with a kick to a teammate or opponent
    OUT = "OUT"  # ball reaches a ball-out pseudo-agent; play stops afterwards
    STOP = "STOP"  # stoppage without a touch (whistle); play stops afterwards

    @property
    def is_touch(self) -> bool:
        return self is not EventType.STOP

    @property
    def stops_play(self) -> bool:
        return self in (EventType.OUT, EventType.STOP)


@dataclass(frozen=True, slots=True)
class PlayerState:
    player_id: str
    team: Team
    x: float
    y: float
    vx: float = 0.0
    vy: float = 0.0
    speed: float = 0.0
    accel: float = 0.0


@dataclass(frozen=True)
class TrackingFrame:
    time: float
    players: tuple[PlayerState, ...]
    ball: tuple[float, float] | None = None
    in_play: bool = True

    def __post_init__(self):
        ids = [p.player_id for p in self.players]
        if len(set(ids)) != len(ids):
            raise TrackingError(f"duplicate player ids in frame at t={self.time}")
        if self.ball is not None and not all(map(math.isfinite, self.ball)):
            object.__setattr__(self, "ball", None)


@dataclass(frozen=True)
class EventRecord:
    time: float
    player_id: str
    event_type: EventType = EventType.TOUCH
    end_time: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "event_type", EventType(self.event_type))
        if self.time < 0:
            raise TrackingError(f"event time must be >= 0, got {self.time}")
        if self.end_time is not None and self.end_time < self.time:
            raise TrackingError(f"event ends before it starts: {self}")


@dataclass(frozen=True, eq=False)
class Episode:
    episode_id: str
    frames: tuple[TrackingFrame, ...]
    # filled by label_episode
    ball_truth: np.ndarray | None = None
    labels: np.ndarray | None = None

    def __len__(self):
        return len(self.frames)

    @property
    def times(self) -> np.ndarray:
        return np.array([f.time for f in self.frames])

    @property
    def start_time(self) -> float:
        return self.frames[0].time


@dataclass(frozen=True)
class AgentSet:
    """Possession classes: team-1 players, team-2 players, then the four ball-out states."""

    team1: tuple[str, ...]
    team2: tuple[str, ...]
    pitch: PitchConfig = field(default_factory=PitchConfig)

    def __post_init__(self):
        object.__setattr__(self, "team1", tuple(self.team1))
        object.__setattr__(self, "team2", tuple(self.team2))
        if len(self.team1) != len(self.team2):
            raise ConfigError(
                f"teams must have equal sizes, got {len(self.team1)} and {len(self.team2)}"
            )
        if len(set(self.ids)) != len(self.ids):
            raise ConfigError("agent ids must be unique")

    @property
    def n(self) -> int:
        return len(self.team1)

    @property
    def n_agents(self) -> int:
        return 2 * self.n + 4

    @property
    def ball_out(self) -> tuple[str, ...]:
        return OUT_AGENT_IDS

    @property
    def ids(self) -> tuple[str, ...]:
        return self.team1 + self.team2 + OUT_AGENT_IDS

    @property
    def ball_out_positions(self) -> np.ndarray:
        return ball_out_positions(self.pitch)

    @property
    def team_map(self) -> np.ndarray:
        """Team of each class index: 1, 2, or 0 for ball-out states."""
        return np.array([1] * self.n + [2] * self.n + [0] * 4)

    def index(self, agent_id: str) -> int:
        try:
            return self.ids.index(agent_id)
        except ValueError:
            raise LabelError(f"unknown agent {agent_id!r}") from None

    @classmethod
    def from_frame(cls, frame: TrackingFrame, pitch: PitchConfig | None = None) -> "AgentSet":
        t1 = tuple(p.player_id for p in frame.players if p.team is Team.TEAM1)
        t2 = tuple(p.player_id for p in frame.players if p.team is Team.TEAM2)
        return cls(t1, t2, pitch or PitchConfig())


def ball_out_positions(pitch: PitchConfig) -> np.ndarray:
    """Midpoints of the left, right, bottom and top pitch lines."""
    L, W = pitch.length, pitch.width
    return np.array([[0.0, W / 2], [L, W / 2], [L / 2, 0.0], [L / 2, W]])


@dataclass(frozen=True, eq=False)
class Window:
    features: np.ndarray  # [T, K, 6]: x, y, vx, vy, speed, accel
    labels: np.ndarray  # [T] class indices into agent_set.ids
    ball: np.ndarray  # [T, 2]
    ball_mask: np.ndarray  # [T] True where the ball is observed
    agent_set: AgentSet
    episode_id: str = ""
    start_time: float = 0.0

    def __post_init__(self):
        T, K, F = self.features.shape
        if K != self.agent_set.n_agents or F != N_FEATURES:
            raise ValueError(f"features shape {self.features.shape} inconsistent with agent set")
        if self.labels.shape != (T,) or self.ball.shape != (T, 2) or self.ball_mask.shape != (T,):
            raise ValueError("labels, ball and mask must align with features in time")

    def __len__(self):
        return self.features.shape[0]

    @property
    def player_positions(self) -> np.ndarray:
        """[T, 2n, 2] positions of the real players (ball-out states excluded)."""
        return self.features[:, : 2 * self.agent_set.n, :2]

    def ball_observation(self) -> np.ndarray:
        """[T, 3] rows of (x, y, 1) where observed and (0, 0, 0) where masked."""
        obs = np.zeros((len(self), 3))
        obs[self.ball_mask, :2] = self.ball[self.ball_mask]
        obs[self.ball_mask, 2] = 1.0
        return obs


# ---------------------------------------------------------------------------
# Ingestion


def load_tracking(
    path: str | Path, format: str = "canonical", pitch: PitchConfig | None = None
) -> list[TrackingFrame]:
    """Read tracking frames, sorted by time, in pitch meters.

    ``canonical`` is a CSV with header ``time,player_id,team,x,y`` and optional
    ``ball_x,ball_y,in_play`` columns. ``metrica`` takes a match directory holding
    the two raw tracking files of the Metrica sample-data layout.
    """
    pitch = pitch or PitchConfig()
    if format == "canonical":
        return _load_canonical(Path(path))
    if format == "metrica":
        from .metrica import load_metrica_tracking

        return load_metrica_tracking(Path(path), pitch)
    raise ConfigError(f"unknown tracking format {format!r}")


def _float(row: dict, key: str, lineno: int, path: Path) -> float:
    try:
        value = float(row[key])
    except (TypeError, ValueError, KeyError):
        raise TrackingError(f"{path}:{lineno}: bad value for {key!r}: {row.get(key)!r}") from None
    if not math.isfinite(value):
        raise TrackingError(f"{path}:{lineno}: non-finite {key}")
    return value


def _load_canonical(path: Path) -> list[TrackingFrame]:
    if not path.exists():
        raise TrackingError(f"{path}: no such file")
    by_time: dict[float, dict] = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        missing = {"time", "player_id", "team", "x", "y"} - set(reader.fieldnames)
        if missing:
            raise TrackingError(f"{path}:1: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, 2):
            t = round(_float(row, "time", lineno, path), 9)
            slot = by_time.setdefault(t, {"players": [], "ball": None, "in_play": True})
            try:
                team = Team.parse(row["team"])
            except ValueError:
                raise TrackingError(f"{path}:{lineno}: unknown team {row['team']!r}") from None
            pid = (row["player_id"] or "").strip()
            if not pid:
                raise TrackingError(f"{path}:{lineno}: empty player_id")
            slot["players"].append(
                PlayerState(pid, team, _float(row, "x", lineno, path), _float(row, "y", lineno, path))
            )
            if slot["ball"] is None and row.get("ball_x") not in (None, ""):
                slot["ball"] = (_float(row, "ball_x", lineno, path), _float(row, "ball_y", lineno, path))
            if row.get("in_play") not in (None, ""):
                slot["in_play"] = slot["in_play"] and row["in_play"].strip().lower() in ("1", "true")
    frames = []
    for t in sorted(by_time):
        slot = by_time[t]
        try:
            frames.append(TrackingFrame(t, tuple(slot["players"]), slot["ball"], slot["in_play"]))
        except TrackingError as err:
            raise TrackingError(f"{path}: {err}") from None
    return frames


def load_events(path: str | Path, format: str = "canonical", pitch: PitchConfig | None = None) -> list[EventRecord]:
    """Event CSV with header ``time,player_id,event_type[,end_time]``."""
    if format == "metrica":
        from .metrica import load_metrica_events

        return load_metrica_events(Path(path), pitch or PitchConfig())
    if format != "canonical":
        raise ConfigError(f"unknown event format {format!r}")
    path = Path(path)
    events = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        for lineno, row in enumerate(reader, 2):
            end = row.get("end_time")
            try:
                events.append(
                    EventRecord(
                        _float(row, "time", lineno, path),
                        row["player_id"].strip(),
                        EventType(row["event_type"].strip().upper()),
                        None if end in (None, "") else _float(row, "end_time", lineno, path),
                    )
                )
            except (ValueError, KeyError) as err:
                raise TrackingError(f"{path}:{lineno}: {err}") from None
    return sorted(events, key=lambda e: e.time)


def write_tracking(frames: Iterable[TrackingFrame], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "player_id", "team", "x", "y", "ball_x", "ball_y", "in_play"])
        for f in frames:
            bx, by = f.ball if f.ball is not None else ("", "")
            for p in f.players:
                w.writerow([f"{f.time:.3f}", p.player_id, p.team.value, repr(p.x), repr(p.y),
                            repr(bx) if bx != "" else "", repr(by) if by != "" else "", int(f.in_play)])


def write_events(events: Iterable[EventRecord], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "player_id", "event_type", "end_time"])
        for e in events:
            w.writerow([f"{e.time:.3f}", e.player_id, e.event_type.value,
                        "" if e.end_time is None else f"{e.end_time:.3f}"])


# ---------------------------------------------------------------------------
# Resampling and kinematics


def resample(frames: Sequence[TrackingFrame], src_hz: float, dst_hz: float = 10.0) -> list[TrackingFrame]:
    """Linearly interpolate frames onto the uniform ``1 / dst_hz`` grid.

    Grid times falling in a gap longer than 1.5 source periods are dropped, so
    out-of-play holes survive resampling. A player (or the ball) is emitted at a
    grid time only if present in both bracketing source frames.
    """
    if src_hz <= 0 or dst_hz <= 0:
        raise ConfigError("sampling rates must be positive")
    if not frames:
        return []
    times = np.array([f.time for f in frames])
    max_gap = 1.5 / src_hz
    k0 = math.ceil(times[0] * dst_hz - 1e-6)
    k1 = math.floor(times[-1] * dst_hz + 1e-6)
    out = []
    for k in range(k0, k1 + 1):
        g = k / dst_hz
        i = int(np.searchsorted(times, g + 1e-9, side="right")) - 1
        if abs(times[i] - g) <= 1e-9:
            f = frames[i]
            out.append(dataclasses.replace(f, time=round(g, 9)))
            continue
        if i + 1 >= len(frames) or times[i + 1] - times[i] > max_gap:
            continue
        a, b = frames[i], frames[i + 1]
        w = (g - times[i]) / (times[i + 1] - times[i])
        b_players = {p.player_id: p for p in b.players}
        players = []
        for p in a.players:
            q = b_players.get(p.player_id)
            if q is None:
                continue
            players.append(PlayerState(p.player_id, p.team, p.x + w * (q.x - p.x), p.y + w * (q.y - p.y)))
        ball = None
        if a.ball is not None and b.ball is not None:
            ball = (a.ball[0] + w * (b.ball[0] - a.ball[0]), a.ball[1] + w * (b.ball[1] - a.ball[1]))
        out.append(TrackingFrame(round(g, 9), tuple(players), ball, a.in_play and b.in_play))
    return out


def derive_kinematics(positions: np.ndarray, dt: float = DT, smooth: int = 5):
    """Velocity, speed and acceleration from a ``[T, ..., 2]`` position array.

    Velocity uses central differences (one-sided at the ends) followed by a
    centred moving average of ``smooth`` frames; acceleration is the time
    derivative of speed by the same difference scheme.
    """
    positions = np.asarray(positions, dtype=float)
    if positions.shape[0] < 2:
        raise InsufficientDataError("need at least two frames to differentiate")
    vel = np.gradient(positions, dt, axis=0)
    if smooth > 1:
        vel = uniform_filter1d(vel, size=smooth, axis=0, mode="nearest")
    speed = np.hypot(vel[..., 0], vel[..., 1])
    accel = np.gradient(speed, dt, axis=0)
    return vel[..., 0], vel[..., 1], speed, accel


# ---------------------------------------------------------------------------
# Episodes and labels


def _stoppage_mask(times: np.ndarray, events: Sequence[EventRecord] | None) -> np.ndarray:
    """True for frames strictly after a stoppage event and before play resumes."""
    stopped = np.zeros(len(times), dtype=bool)
    if not events:
        return stopped
    evs = sorted(events, key=lambda e: e.time)
    for i, e in enumerate(evs):
        if not e.event_type.stops_play:
            continue
        stop_at = e.end_time if e.end_time is not None else e.time
        resume = next((n.time for n in evs[i + 1:] if not n.event_type.stops_play), math.inf)
        stopped |= (times > stop_at + TIME_TOL) & (times < resume - TIME_TOL)
    return stopped


def segment_episodes(
    frames: Sequence[TrackingFrame],
    events: Sequence[EventRecord] | None = None,
    dt: float = DT,
    prefix: str = "ep",
) -> list[Episode]:
    """Split a time-sorted stream into maximal in-play runs on the ``dt`` grid."""
    if not frames:
        return []
    times = np.array([f.time for f in frames])
    stopped = _stoppage_mask(times, events)
    episodes, run = [], []

    def flush():
        if run:
            episodes.append(Episode(f"{prefix}{len(episodes)}", tuple(run)))

    for f, halted in zip(frames, stopped):
        if not f.in_play or halted:
            flush()
            run = []
            continue
        if run and abs(f.time - run[-1].time - dt) > TIME_TOL:
            flush()
            run = []
        run.append(f)
    flush()
    return episodes


def episode_events(events: Sequence[EventRecord], episode: Episode) -> list[EventRecord]:
    """Touch events starting inside the episode's time span."""
    t0, t1 = episode.frames[0].time, episode.frames[-1].time
    return [e for e in events if e.event_type.is_touch and t0 - TIME_TOL <= e.time <= t1 + TIME_TOL]


def agent_positions(episode: Episode, agent_set: AgentSet) -> np.ndarray:
    """[L, 2n+4, 2] positions; NaN where a rostered player is absent from a frame."""
    L = len(episode)
    pos = np.full((L, agent_set.n_agents, 2), np.nan)
    col = {pid: i for i, pid in enumerate(agent_set.ids)}
    for t, f in enumerate(episode.frames):
        for p in f.players:
            i = col.get(p.player_id)
            if i is not None:
                pos[t, i] = (p.x, p.y)
    pos[:, 2 * agent_set.n:] = agent_set.ball_out_positions
    return pos


def reconstruct_ball_truth(
    episode: Episode,
    events: Sequence[EventRecord],
    agent_set: AgentSet,
    tracked_ball: np.ndarray | None = None,
):
    """Ball path and possession labels from touch events.

    Touched frames put the ball on the touching agent; untouched stretches are
    linearly interpolated between anchors. Labels name the current controller
    while in control and the next controller while the ball travels. Before the
    first touch the ball waits at the first anchor; after the last it stays at
    the last anchor. Where ``tracked_ball`` is finite it overrides the path.
    """
    L = len(episode)
    t0 = episode.start_time
    pos = agent_positions(episode, agent_set)
    intervals = []
    for e in events:
        if not e.event_type.is_touch:
            continue
        s = int(round((e.time - t0) / DT))
        end = e.end_time if e.end_time is not None else e.time
        stop = int(round((end - t0) / DT))
        if s < 0 or s >= L or abs(e.time - t0 - s * DT) > 0.5 * DT:
            raise LabelError(f"touch at t={e.time} outside episode {episode.episode_id}")
        agent = agent_set.index(e.player_id)
        intervals.append((s, min(stop, L - 1), agent))
    if not intervals:
        raise LabelError(f"episode {episode.episode_id} has no touch events")
    intervals.sort()

    touched = np.full(L, -1)
    for s, stop, agent in intervals:
        touched[s : stop + 1] = agent
    anchor_idx = np.flatnonzero(touched >= 0)
    anchor_xy = pos[anchor_idx, touched[anchor_idx]]
    if np.isnan(anchor_xy).any():
        raise LabelError(f"touching player missing from tracking in {episode.episode_id}")
    frames = np.arange(L)
    ball = np.stack([np.interp(frames, anchor_idx, anchor_xy[:, k]) for k in range(2)], axis=1)

    # next controller for every frame: index of the first anchor at or after t
    nxt = np.searchsorted(anchor_idx, frames, side="left")
    labels = np.where(nxt < len(anchor_idx), touched[anchor_idx[np.minimum(nxt, len(anchor_idx) - 1)]],
                      touched[anchor_idx[-1]])
    if tracked_ball is not None:
        ok = np.isfinite(tracked_ball).all(axis=1)
        ball[ok] = tracked_ball[ok]
    return ball, labels.astype(int)


def label_episode(
    episode: Episode, events: Sequence[EventRecord], agent_set: AgentSet, use_tracked_ball: bool = False
) -> Episode:
    tracked = None
    if use_tracked_ball:
        tracked = np.array([f.ball if f.ball is not None else (np.nan, np.nan) for f in episode.frames])
    ball, labels = reconstruct_ball_truth(episode, episode_events(events, episode), agent_set, tracked)
    return dataclasses.replace(episode, ball_truth=ball, labels=labels)


# ---------------------------------------------------------------------------
# Windows


def episode_features(episode: Episode, agent_set: AgentSet, smooth: int = 5) -> np.ndarray:
    """[L, 2n+4, 6] model inputs; kinematic features of ball-out states are zero."""
    pos = agent_positions(episode, agent_set)
    feats = np.zeros(pos.shape[:2] + (N_FEATURES,))
    feats[..., :2] = pos
    n2 = 2 * agent_set.n
    if len(episode) >= 2:
        vx, vy, speed, accel = derive_kinematics(pos[:, :n2], smooth=smooth)
        feats[:, :n2, 2], feats[:, :n2, 3], feats[:, :n2, 4], feats[:, :n2, 5] = vx, vy, speed, accel
    return feats


def window_count(L: int, T: int, stride: int) -> int:
    return (L - T) // stride + 1 if L >= T else 0


def make_windows(
    episode: Episode,
    T: int = 100,
    stride: int = 5,
    agent_set: AgentSet | None = None,
    smooth: int = 5,
) -> list[Window]:
    """Slice a labelled episode into length-``T`` windows every ``stride`` frames.

    Windows that include a frame where any rostered player is missing are dropped.
    """
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    if episode.ball_truth is None or episode.labels is None:
        raise LabelError("episode must be labelled before windowing (see label_episode)")
    L = len(episode)
    if L < T:
        return []
    agent_set = agent_set or AgentSet.from_frame(episode.frames[0])
    feats = episode_features(episode, agent_set, smooth)
    complete = np.isfinite(feats).all(axis=(1, 2))
    out = []
    for s in range(0, L - T + 1, stride):
        if not complete[s : s + T].all():
            continue
        out.append(
            Window(
                feats[s : s + T].copy(),
                episode.labels[s : s + T].copy(),
                episode.ball_truth[s : s + T].copy(),
                np.ones(T, dtype=bool),
                agent_set,
                episode.episode_id,
                episode.frames[s].time,
            )
        )
    return out


def whole_episode_window(episode: Episode, agent_set: AgentSet | None = None, smooth: int = 5) -> Window:
    """The full labelled episode as a single variable-length window."""
    agent_set = agent_set or AgentSet.from_frame(episode.frames[0])
    L = len(episode)
    ball = episode.ball_truth if episode.ball_truth is not None else np.zeros((L, 2))
    labels = episode.labels if episode.labels is not None else np.zeros(L, dtype=int)
    mask = np.ones(L, dtype=bool) if episode.ball_truth is not None else np.zeros(L, dtype=bool)
    return Window(episode_features(episode, agent_set, smooth), labels, ball, mask, agent_set,
                  episode.episode_id, episode.start_time)


def flip_augment(window: Window, mode: str) -> Window:
    """Reflect a window about the pitch half-way line (H), the long axis (V) or both."""
    mode = mode.upper()
    if mode not in ("H", "V", "HV"):
        raise ConfigError(f"flip mode must be H, V or HV, got {mode!r}")
    feats = window.features.copy()
    ball = window.ball.copy()
    pitch = window.agent_set.pitch
    if "H" in mode:
        feats[..., 0] = pitch.length - feats[..., 0]
        feats[..., 2] = -feats[..., 2]
        ball[:, 0] = pitch.length - ball[:, 0]
    if "V" in mode:
        feats[..., 1] = pitch.width - feats[..., 1]
        feats[..., 3] = -feats[..., 3]
        ball[:, 1] = pitch.width - ball[:, 1]
    # ball-out kinematics stay exactly zero (avoid -0.0)
    feats[:, 2 * window.agent_set.n :, 2:] = 0.0
    return dataclasses.replace(window, features=feats, ball=ball)


def mask_ball(window: Window, keep_probability: float, rng_seed: int) -> Window:
    """Keep each ball observation independently with ``keep_probability``.

    Masks drawn with the same seed are nested across keep probabilities.
    """
    if not 0.0 <= keep_probability <= 1.0:
        raise ValueError("keep_probability must lie in [0, 1]")
    u = np.random.default_rng(rng_seed).random(len(window))
    return dataclasses.replace(window, ball_mask=u < keep_probability)
