"""Scripted match simulator with exactly known ball paths, touches, labels and passes.

Players move on smoothstep-interpolated waypoints chosen with simple
ball-aware behaviour (the team in possession pushes up and drifts toward the
ball, the nearest defender presses, goalkeepers track the ball laterally).
The ball sits on its controller and flies in straight constant-speed
segments. A receiver steps toward the incoming ball during the flight, so the
ball is never closer to its receiver than one flight step before arrival.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .applications import PassEvent
from .config import PitchConfig
from .tracking import (
    DT,
    OUT_AGENT_IDS,
    AgentSet,
    Episode,
    EventRecord,
    EventType,
    PlayerState,
    Team,
    TrackingFrame,
    ball_out_positions,
    derive_kinematics,
    write_events,
    write_tracking,
)


class ScriptError(ValueError):
    """A pass plan that cannot be played out."""


@dataclass(frozen=True)
class ScriptedPass:
    passer: str
    receiver: str  # player id or one of the ball-out ids
    kick_time: float | None  # None: one-touch, kicked on the frame the ball arrives
    flight_duration: float | None = None  # None: from the nominal ball speed


@dataclass(frozen=True)
class MatchScript:
    name: str
    seed: int
    n_players: int
    duration: float
    passes: tuple[ScriptedPass, ...] = ()
    first_carrier: str | None = None
    max_player_speed: float = 8.0  # m/s
    waypoint_interval: float = 1.0  # s between off-ball waypoints
    ball_speed: float = 22.0  # m/s nominal; one flight step must clear 2 m
    max_ball_speed: float = 40.0
    receiver_lead: float = 2.0  # m the receiver steps toward the ball at most
    press: float = 1.0  # 0 switches off pressing and ball-following
    pitch: PitchConfig = field(default_factory=PitchConfig)

    def __post_init__(self):
        object.__setattr__(self, "passes", tuple(self.passes))
        if self.n_players < 2:
            raise ScriptError("need at least two players per team")
        if self.duration <= 0:
            raise ScriptError("duration must be positive")
        times = [p.kick_time for p in self.passes if p.kick_time is not None]
        if times != sorted(times):
            raise ScriptError("pass plan must be time-ordered")
        if self.passes and self.passes[0].kick_time is None:
            raise ScriptError("the first pass needs a kick time")
        for p in self.passes[:-1]:
            if p.receiver in OUT_AGENT_IDS:
                raise ScriptError("a ball-out pass must be the last one")

    @property
    def team1(self) -> tuple[str, ...]:
        return tuple(f"A{i}" for i in range(1, self.n_players + 1))

    @property
    def team2(self) -> tuple[str, ...]:
        return tuple(f"B{i}" for i in range(1, self.n_players + 1))

    @property
    def agent_set(self) -> AgentSet:
        return AgentSet(self.team1, self.team2, self.pitch)

    @property
    def carrier(self) -> str:
        if self.first_carrier is not None:
            return self.first_carrier
        if self.passes:
            return self.passes[0].passer
        return self.team1[-1]


@dataclass
class SimulatedMatch:
    script: MatchScript
    episode: Episode  # labelled: ball_truth and labels filled
    events: list[EventRecord]
    ball: np.ndarray  # [L, 2]
    labels: np.ndarray  # [L] indices into agent_set.ids
    touched: np.ndarray  # [L] toucher index per frame, -1 in flight
    passes: list[PassEvent]
    positions: np.ndarray  # [L, 2n, 2]

    @property
    def agent_set(self) -> AgentSet:
        return self.script.agent_set


def _smoothstep(u):
    return u * u * (3 - 2 * u)


@dataclass
class _Segment:
    start: np.ndarray
    end: np.ndarray
    f0: int
    f1: int

    def at(self, f: int) -> np.ndarray:
        if self.f1 == self.f0:
            return self.end.copy()
        u = (f - self.f0) / (self.f1 - self.f0)
        if u >= 1.0:
            return self.end.copy()
        return self.start + _smoothstep(u) * (self.end - self.start)


def formation(n: int, pitch: PitchConfig, team: int) -> np.ndarray:
    """Anchor positions for a team attacking to the right (team 1) or left (team 2)."""
    L, W = pitch.length, pitch.width
    pts = [(6.0, W / 2)]  # goalkeeper
    rest = n - 1
    lines = max(1, min(3, rest // 3 + (rest % 3 > 0)))
    per = [rest // lines + (i < rest % lines) for i in range(lines)]
    for li, k in enumerate(per):
        x = 20.0 + li * 14.0 if lines > 1 else 30.0
        for j in range(k):
            pts.append((x, W * (j + 1) / (k + 1)))
    a = np.array(pts[:n])
    if team == 2:
        a[:, 0] = L - a[:, 0]
    return a


class _Sim:
    def __init__(self, script: MatchScript):
        self.s = script
        self.rng = np.random.default_rng(script.seed)
        self.n = script.n_players
        self.ids = script.team1 + script.team2
        self.col = {pid: i for i, pid in enumerate(self.ids)}
        self.N = int(round(script.duration / DT)) + 1
        self.wp = max(1, int(round(script.waypoint_interval / DT)))
        pitch = script.pitch
        self.lo = np.array([1.0, 1.0])
        self.hi = np.array([pitch.length - 1.0, pitch.width - 1.0])
        self.out_pos = ball_out_positions(pitch)
        self.anchors = np.concatenate([formation(self.n, pitch, 1), formation(self.n, pitch, 2)])

    def agent(self, pid: str) -> int:
        if pid in self.col:
            return self.col[pid]
        if pid in OUT_AGENT_IDS:
            return 2 * self.n + OUT_AGENT_IDS.index(pid)
        raise ScriptError(f"unknown agent {pid!r}")

    def reach(self, frames: int) -> float:
        # smoothstep peaks at 1.5x the mean speed; keep a 5% margin
        return 0.95 * self.s.max_player_speed * frames * DT / 1.5

    def clip_move(self, cur, target, frames):
        target = np.clip(target, self.lo, self.hi)
        d = target - cur
        dist = np.linalg.norm(d)
        lim = self.reach(frames)
        if dist > lim:
            target = cur + d * (lim / dist)
        return target

    def choose(self, i: int, cur: np.ndarray, ball: np.ndarray, poss_team: int, controller: int | None, f: int):
        s, L, W = self.s, self.s.pitch.length, self.s.pitch.width
        team = 1 if i < self.n else 2
        fwd = 1.0 if team == 1 else -1.0
        frames = self.wp + int(self.rng.integers(-3, 4))
        jitter = self.rng.normal(0, 1.5, 2)
        centre = np.array([L / 2, W / 2])
        if i == controller:
            step = np.array([fwd * self.rng.uniform(1.0, 4.0), self.rng.normal(0, 2.0)])
            target = cur + step
        elif i % self.n == 0:  # goalkeeper
            gx = 4.0 if team == 1 else L - 4.0
            target = np.array([gx + fwd * 0.05 * abs(ball[0] - gx), W / 2 + 0.25 * (ball[1] - W / 2)]) + 0.3 * jitter
        else:
            attacking = team == poss_team
            shift = np.array([fwd * (8.0 if attacking else -4.0), 0.0])
            target = self.anchors[i] + shift + s.press * 0.35 * (ball - centre) + jitter
            if attacking and s.press:
                target = target + 0.15 * (ball - target)
        return self.clip_move(cur, target, frames), frames

    def pressers(self, pos: np.ndarray, ball: np.ndarray, poss_team: int) -> dict[int, np.ndarray]:
        if not self.s.press or poss_team == 0:
            return {}
        lo = self.n if poss_team == 1 else 0
        cand = [i for i in range(lo, lo + self.n) if i % self.n != 0]
        d = np.linalg.norm(pos[cand] - ball, axis=1)
        i = cand[int(np.argmin(d))]
        own_goal_x = 0.0 if i < self.n else self.s.pitch.length
        toward = np.array([own_goal_x, self.s.pitch.width / 2]) - ball
        toward /= max(np.linalg.norm(toward), 1e-9)
        return {i: ball + 2.5 * toward}

    def run(self) -> SimulatedMatch:
        s, n2, N = self.s, 2 * self.n, self.N
        pos = np.zeros((N, n2, 2))
        ball = np.full((N, 2), np.nan)
        touched = np.full(N, -1)
        init = np.clip(self.anchors + self.rng.normal(0, 2.0, (n2, 2)), self.lo, self.hi)
        controller = self.agent(s.carrier)
        if controller >= n2:
            raise ScriptError("the first carrier must be a player")
        poss_team = 1 if controller < self.n else 2
        segs = [_Segment(init[i], init[i], 0, 0) for i in range(n2)]
        locked = np.zeros(n2, dtype=bool)  # receiver runs that must not be replaced

        plan = list(s.passes)
        pi = 0
        flight = None  # (kick frame, arrival frame, receiver, unused, landing point)
        kick_frame = None if not plan else int(round(plan[0].kick_time / DT))
        passes_out: list[PassEvent] = []
        control_runs: list[list] = [[controller, 0, None]]  # agent, first frame, last frame
        end_frame = N - 1
        prev_passer = None

        for f in range(N):
            for i in range(n2):
                pos[f, i] = segs[i].at(f)
            if flight is None:
                ball[f] = pos[f, controller]
                touched[f] = controller
            else:
                k, a, r = flight[:3]
                if f == a:
                    ball[f] = pos[f, r] if r < n2 else self.out_pos[r - n2]
                    touched[f] = r
                    # fill the flight now that both endpoints are known
                    b0, b1 = ball[k], ball[a]
                    for g in range(k + 1, a):
                        ball[g] = b0 + (g - k) / (a - k) * (b1 - b0)
                    passes_out.append(self._pass_event(prev_passer, r, k, a))
                    flight = None
                    controller = r
                    control_runs.append([r, a, None])
                    if r >= n2:
                        end_frame = a
                        break
                    poss_team = 1 if r < self.n else 2
                    locked[r] = False
                    if pi < len(plan) and plan[pi].kick_time is None:
                        kick_frame = a

            if flight is None and kick_frame is not None and f == kick_frame:
                p = plan[pi]
                if self.agent(p.passer) != controller:
                    raise ScriptError(f"pass {pi}: {p.passer} does not control the ball at t={f * DT:.1f}")
                flight = self._kick(p, f, pos, ball, segs, locked)
                control_runs[-1][2] = f
                prev_passer = controller
                pi += 1
                kick_frame = None
                if pi < len(plan) and plan[pi].kick_time is not None:
                    kick_frame = int(round(plan[pi].kick_time / DT))
                    if kick_frame < flight[1]:
                        raise ScriptError(f"pass {pi} is kicked before the previous one arrives")
            if kick_frame is not None and kick_frame >= N:
                raise ScriptError("pass kicked after the end of the match")

            if f == N - 1:
                break
            target_ball = ball[f]
            if flight is not None:
                target_ball = flight[4]
            ctrl = controller if flight is None else None
            press = self.pressers(pos[f], target_ball, poss_team)
            for i in range(n2):
                if segs[i].f1 > f or locked[i]:
                    continue
                cur = pos[f, i]
                if i in press and i != ctrl:
                    frames = self.wp
                    tgt = self.clip_move(cur, press[i], frames)
                else:
                    tgt, frames = self.choose(i, cur, target_ball, poss_team, ctrl, f)
                segs[i] = _Segment(cur.copy(), tgt, f, f + frames)

        if flight is not None:
            raise ScriptError("match ends while the ball is in flight")
        if pi < len(plan):
            raise ScriptError(f"{len(plan) - pi} scripted passes never happened")
        control_runs[-1][2] = end_frame if control_runs[-1][2] is None else control_runs[-1][2]
        L = end_frame + 1
        return self._package(pos[:L], ball[:L], touched[:L], control_runs, passes_out)

    def _kick(self, p: ScriptedPass, k: int, pos, ball, segs, locked):
        n2 = 2 * self.n
        r = self.agent(p.receiver)
        if r == self.agent(p.passer):
            raise ScriptError("a player cannot pass to themself")
        b0 = ball[k]
        if r >= n2:
            target = self.out_pos[r - n2]
            dist = float(np.linalg.norm(target - b0))
            F = self._flight_frames(p, dist)
            return (k, k + F, r, None, target)
        rk = pos[k, r]
        d0 = float(np.linalg.norm(rk - b0))
        if p.flight_duration is None:
            # F whole steps of at least ball_speed * DT; the remainder becomes the receiver's lead
            step = self.s.ball_speed * DT
            F = max(1, int(d0 // step))
            lead = min(self.s.receiver_lead, self.reach(F), max(d0 - F * step, 0.0))
        else:
            F = max(1, int(round(p.flight_duration / DT)))
            lead = min(self.s.receiver_lead, self.reach(F), 0.5 * d0)
        u = (b0 - rk) / max(d0, 1e-9)
        target = rk + lead * u
        dist = float(np.linalg.norm(target - b0))
        if p.flight_duration is not None:
            if dist / (F * DT) > self.s.max_ball_speed:
                raise ScriptError(f"{p.receiver} too far from {p.passer}: {dist:.1f} m in {F * DT:.1f} s")
            if F > 1 and dist / F < 2.0:
                raise ScriptError(f"flight of {p.passer}->{p.receiver} too slow to separate ball and receiver")
        segs[r] = _Segment(rk.copy(), target, k, k + F)
        locked[r] = True
        return (k, k + F, r, None, target)

    def _flight_frames(self, p: ScriptedPass, dist: float) -> int:
        if p.flight_duration is not None:
            F = max(1, int(round(p.flight_duration / DT)))
            if dist / (F * DT) > self.s.max_ball_speed:
                raise ScriptError(f"ball cannot reach {p.receiver} in {F * DT:.1f} s")
            return F
        return max(1, int(dist // (self.s.ball_speed * DT)))

    def _pass_event(self, passer, r, k, a):
        if r >= 2 * self.n or passer is None:
            return None
        return PassEvent(self.ids[passer], self.ids[r], round(k * DT, 9), round(a * DT, 9))

    def _package(self, pos, ball, touched, control_runs, passes_out) -> SimulatedMatch:
        s, n2 = self.s, 2 * self.n
        L = len(ball)
        all_ids = self.ids + OUT_AGENT_IDS
        labels = touched.copy()
        nxt = -1
        for t in range(L - 1, -1, -1):
            if touched[t] >= 0:
                nxt = touched[t]
            labels[t] = nxt
        events = []
        for idx, (agent, f0, f1) in enumerate(control_runs):
            f1 = min(f1 if f1 is not None else L - 1, L - 1)
            if agent >= n2:
                etype = EventType.OUT
            elif idx + 1 < len(control_runs):
                etype = EventType.PASS
            else:
                etype = EventType.TOUCH
            events.append(EventRecord(round(f0 * DT, 9), all_ids[agent], etype, round(f1 * DT, 9)))
        vx, vy, sp, ac = derive_kinematics(pos) if L >= 2 else (np.zeros(pos.shape[:2]),) * 4
        teams = [Team.TEAM1] * self.n + [Team.TEAM2] * self.n
        frames = tuple(
            TrackingFrame(
                round(t * DT, 9),
                tuple(
                    PlayerState(self.ids[i], teams[i], float(pos[t, i, 0]), float(pos[t, i, 1]),
                                float(vx[t, i]), float(vy[t, i]), float(sp[t, i]), float(ac[t, i]))
                    for i in range(n2)
                ),
                (float(ball[t, 0]), float(ball[t, 1])),
            )
            for t in range(L)
        )
        episode = Episode(f"{s.name}-{s.seed}", frames, ball.copy(), labels.copy())
        return SimulatedMatch(s, episode, events, ball, labels, touched,
                              [p for p in passes_out if p is not None], pos)


def generate_match(script: MatchScript) -> SimulatedMatch:
    """Play out a script deterministically; raises ScriptError if it is infeasible."""
    return _Sim(script).run()


def script_library() -> list[MatchScript]:
    """Named scenarios exercising carries, passes, one-touch play and ball-out states."""
    circ = []
    t = 1.0
    order = ["A4", "A7", "A10", "A6", "A3", "A8", "B6", "B9", "B4", "B7", "A9", "A5", "A11",
             "A8", "A2", "A6", "B10", "B5", "B8", "B3", "B6"]
    for a, b in zip(order, order[1:]):
        circ.append(ScriptedPass(a, b, round(t, 1)))
        t += 3.0
    return [
        MatchScript("single_carrier", seed=1, n_players=5, duration=12.0, first_carrier="A3"),
        MatchScript("wall_passes", seed=2, n_players=5, duration=16.0,
                    passes=tuple(ScriptedPass(*pq, 1.0 + 2.5 * i) for i, pq in
                                 enumerate([("A3", "A4"), ("A4", "A3")] * 3))),
        MatchScript("circulation_11v11", seed=3, n_players=11, duration=64.0, passes=tuple(circ)),
        MatchScript("one_touch_chain", seed=4, n_players=5, duration=14.0,
                    passes=(ScriptedPass("A2", "A3", 2.0), ScriptedPass("A3", "A4", None),
                            ScriptedPass("A4", "A5", None), ScriptedPass("A5", "A3", 8.0))),
        MatchScript("out_of_bounds", seed=5, n_players=5, duration=20.0,
                    passes=(ScriptedPass("A3", "A4", 1.5), ScriptedPass("A4", "B4", 5.0),
                            ScriptedPass("B4", "B3", 8.5), ScriptedPass("B3", "OUT_TOP", 12.0))),
    ]


def random_script(seed: int, n_players: int = 4, duration: float = 20.0, name: str = "random",
                  p_turnover: float = 0.15, p_out: float = 0.3, one_touch: float = 0.15) -> MatchScript:
    """A random pass plan; playable with high probability (see simulate_random)."""
    rng = np.random.default_rng(seed)
    team1 = [f"A{i}" for i in range(2, n_players + 1)]
    team2 = [f"B{i}" for i in range(2, n_players + 1)]
    holder = str(rng.choice(team1 + team2))
    first = holder
    passes = []
    t = float(rng.uniform(0.5, 2.5))
    last_timed = True
    while t < duration - 4.0:
        mates, opp = (team1, team2) if holder.startswith("A") else (team2, team1)
        pool = [m for m in mates if m != holder]
        recv = str(rng.choice(opp if rng.random() < p_turnover or not pool else pool))
        quick = not last_timed or rng.random() >= one_touch
        passes.append(ScriptedPass(holder, recv, round(t, 1) if (quick or not passes) else None))
        last_timed = passes[-1].kick_time is not None
        holder = recv
        t += float(rng.uniform(2.5, 5.0))
    if rng.random() < p_out and t < duration - 1.0:
        passes.append(ScriptedPass(holder, str(rng.choice(OUT_AGENT_IDS)), round(t - 1.5, 1)))
    return MatchScript(name, seed, n_players, duration, tuple(passes), first_carrier=first)


def simulate_random(seed: int, n_players: int = 4, duration: float = 20.0, tries: int = 50, **kw) -> SimulatedMatch:
    """Generate a playable random match, trying consecutive sub-seeds on infeasible plans."""
    for k in range(tries):
        try:
            return generate_match(random_script(seed * 1000 + k, n_players, duration, **kw))
        except ScriptError:
            continue
    raise ScriptError(f"no playable script found for seed {seed}")


def simulate_dataset(n_episodes: int, seed: int = 0, n_players: int = 4, duration: float = 20.0, **kw) -> list[SimulatedMatch]:
    return [simulate_random(seed * 100_000 + i, n_players, duration, **kw) for i in range(n_episodes)]


def save_match(match: SimulatedMatch, directory: str | Path) -> tuple[Path, Path]:
    """Write canonical tracking and event CSVs; returns their paths."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    stem = match.episode.episode_id
    tp, ep = d / f"{stem}_tracking.csv", d / f"{stem}_events.csv"
    write_tracking(match.episode.frames, tp)
    write_events(match.events, ep)
    return tp, ep


def strip_labels(match: SimulatedMatch) -> Episode:
    return dataclasses.replace(match.episode, ball_truth=None, labels=None)
