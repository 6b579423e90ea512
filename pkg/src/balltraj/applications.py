"""Downstream uses of the model outputs: imputation, pass annotation, ROI accuracy, running metrics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import PostprocessConfig
from .metrics import MetricsReport
from .postprocess import TouchAssignment

log = logging.getLogger(__name__)

KMH = 1 / 3.6
HSR_THRESHOLD = 20.0 * KMH  # m/s


@dataclass(frozen=True)
class PassEvent:
    passer: str
    receiver: str
    t0: float
    t1: float

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ValueError(f"pass must end after it starts: {self}")
        if self.passer == self.receiver:
            raise ValueError("passer and receiver must differ")


# ---------------------------------------------------------------------------
# Pass annotation


def detect_passes(assignment: TouchAssignment, agent_ids: Sequence[str], n_players: int | None = None) -> list[PassEvent]:
    """Consecutive touches by distinct players with only transition frames between them.

    A pass runs from the last frame of the passer's touch interval to the first
    frame of the receiver's. Touches by ball-out states (indices ``>= 2n``) break
    chains but never form passes.
    """
    n2 = 2 * n_players if n_players is not None else len(agent_ids) - 4
    touches = assignment.touches()
    out = []
    for a, b in zip(touches, touches[1:]):
        if a.agent == b.agent or a.agent >= n2 or b.agent >= n2:
            continue
        out.append(PassEvent(agent_ids[a.agent], agent_ids[b.agent], assignment.time(a.end), assignment.time(b.start)))
    return out


def _greedy_match(detected, truth, tolerance, same) -> int:
    used = [False] * len(detected)
    hits = 0
    for tp in sorted(truth, key=lambda p: p.t0):
        for j, dp in enumerate(detected):
            if used[j] or not same(dp, tp):
                continue
            if dp.t0 > tp.t0 - tolerance and dp.t1 < tp.t1 + tolerance:
                used[j] = True
                hits += 1
                break
    return hits


def _f1(hits: int, n_det: int, n_true: int) -> float:
    if n_det == 0 and n_true == 0:
        return 1.0
    if hits == 0:
        return 0.0
    precision, recall = hits / n_det, hits / n_true
    return 2 * precision * recall / (precision + recall)


def r2_score(y_true, y_pred) -> float:
    y_true, y_pred = np.asarray(y_true, float), np.asarray(y_pred, float)
    if y_true.size == 0:
        return 1.0
    ss_res = ((y_true - y_pred) ** 2).sum()
    ss_tot = ((y_true - y_true.mean()) ** 2).sum()
    if ss_tot == 0:
        return 1.0 if ss_res == 0 else 0.0
    return float(1 - ss_res / ss_tot)


@dataclass
class PassReport:
    f1_pass: float
    f1_passer: float
    f1_receiver: float
    r2_passes: float
    r2_receives: float

    COLUMNS = ("Pass", "Passer", "Receiver", "#. Passes", "#. Receives")

    def values(self) -> tuple[float, ...]:
        return (self.f1_pass, self.f1_passer, self.f1_receiver, self.r2_passes, self.r2_receives)


def match_passes(detected: Sequence[PassEvent], truth: Sequence[PassEvent], tolerance: float = 2.0,
                 players: Sequence[str] | None = None) -> PassReport:
    """F1 for pass / passer / receiver detection and R2 of per-player pass and receive counts.

    A true pass (p, q, t0, t1) is found by an unused detection starting after
    ``t0 - tolerance`` and ending before ``t1 + tolerance``; the pass F1 needs
    both endpoints right, passer (receiver) F1 only the passer (receiver).
    Matching is greedy, earliest true pass first.
    """
    detected = sorted(detected, key=lambda p: p.t0)
    n_d, n_t = len(detected), len(truth)
    f_pass = _f1(_greedy_match(detected, truth, tolerance,
                               lambda d, t: d.passer == t.passer and d.receiver == t.receiver), n_d, n_t)
    f_passer = _f1(_greedy_match(detected, truth, tolerance, lambda d, t: d.passer == t.passer), n_d, n_t)
    f_recv = _f1(_greedy_match(detected, truth, tolerance, lambda d, t: d.receiver == t.receiver), n_d, n_t)
    if players is None:
        players = sorted({p.passer for p in [*detected, *truth]} | {p.receiver for p in [*detected, *truth]})

    def counts(events, attr):
        return [sum(getattr(e, attr) == pl for e in events) for pl in players]

    return PassReport(
        f_pass, f_passer, f_recv,
        r2_score(counts(truth, "passer"), counts(detected, "passer")),
        r2_score(counts(truth, "receiver"), counts(detected, "receiver")),
    )


# ---------------------------------------------------------------------------
# Broadcast ROI


def apply_homography(points: np.ndarray, H: np.ndarray | None) -> np.ndarray:
    points = np.asarray(points, float)
    if H is None:
        return points
    homog = np.concatenate([points, np.ones(points.shape[:-1] + (1,))], axis=-1) @ np.asarray(H, float).T
    return homog[..., :2] / homog[..., 2:3]


def roi_accuracy(pred: np.ndarray, truth: np.ndarray, box_sizes: Sequence[float],
                 homography: np.ndarray | None = None) -> dict[float, float]:
    """Fraction of frames whose true ball lies in the ``b x b`` box centred on the prediction."""
    sizes = list(box_sizes)
    if any(b <= 0 for b in sizes):
        raise ValueError("box sizes must be positive")
    p, t = apply_homography(pred, homography), apply_homography(truth, homography)
    err = np.abs(p - t).max(axis=-1)
    return {b: float((err <= b / 2).mean()) for b in sizes}


# ---------------------------------------------------------------------------
# Possession-wise running performance


def team_possession_series(probs: np.ndarray, team_map: np.ndarray) -> np.ndarray:
    """Team (1 or 2) of the argmax possessor per frame; ball-out frames inherit the last team."""
    teams = np.asarray(team_map)[np.asarray(probs).argmax(-1)].astype(int)
    return fill_ball_out(teams)


def fill_ball_out(teams: np.ndarray) -> np.ndarray:
    teams = np.asarray(teams).astype(int).copy()
    known = np.flatnonzero(teams > 0)
    if len(known) == 0:
        return np.ones_like(teams)
    teams[: known[0]] = teams[known[0]]
    for t in range(known[0] + 1, len(teams)):
        if teams[t] == 0:
            teams[t] = teams[t - 1]
    return teams


def random_possession(T: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).integers(1, 3, size=T)


@dataclass
class RPReport:
    """Per-player distances (meters) split by phase."""

    players: list[str]
    total: dict[str, np.ndarray] = field(default_factory=dict)  # phase -> [P]
    hsr: dict[str, np.ndarray] = field(default_factory=dict)

    def whole(self, metric: str) -> np.ndarray:
        d = getattr(self, metric)
        return d["attacking"] + d["defending"]


def rp_metrics(positions: np.ndarray, player_teams: np.ndarray, team_possession: np.ndarray,
               players: Sequence[str] | None = None, dt: float = 0.1,
               hsr_threshold: float = HSR_THRESHOLD) -> RPReport:
    """Total and high-speed distance per player in attacking and defending phases.

    ``positions`` is ``[T, P, 2]``; the increment from frame ``t-1`` to ``t`` is
    credited to the phase at ``t``, and to HSR when its speed exceeds the threshold.
    """
    positions = np.asarray(positions, float)
    T, P, _ = positions.shape
    players = list(players) if players is not None else [str(i) for i in range(P)]
    team_possession = np.asarray(team_possession)
    if len(team_possession) != T:
        raise ValueError("possession series must align with tracks")
    step = np.zeros((T, P))
    step[1:] = np.linalg.norm(np.diff(positions, axis=0), axis=-1)
    fast = step / dt > hsr_threshold
    attacking = team_possession[:, None] == np.asarray(player_teams)[None, :]
    report = RPReport(players)
    for phase, sel in (("attacking", attacking), ("defending", ~attacking)):
        report.total[phase] = (step * sel).sum(0)
        report.hsr[phase] = (step * (sel & fast)).sum(0)
    return report


def rp_errors(est: RPReport, truth: RPReport) -> dict[str, dict[tuple[str, str], float]]:
    """Maximum and mean absolute percentage error per (metric, phase) over players.

    Players whose true value is zero are left out of that cell.
    """
    out = {"max": {}, "mean": {}}
    for metric in ("total", "hsr"):
        for phase in ("attacking", "defending"):
            e, t = getattr(est, metric)[phase], getattr(truth, metric)[phase]
            ok = t > 0
            if (~ok).any():
                log.warning("%s/%s: %d players with zero true distance excluded", metric, phase, (~ok).sum())
            ape = np.abs(e[ok] - t[ok]) / t[ok]
            out["max"][(metric, phase)] = float(ape.max()) if ape.size else 0.0
            out["mean"][(metric, phase)] = float(ape.mean()) if ape.size else 0.0
    return out


# ---------------------------------------------------------------------------
# Imputation

IMPUTATION_RATES = (1.0, 0.95, 0.9, 0.8)


def evaluate_imputation(model, windows, masking_rates: Sequence[float] = IMPUTATION_RATES, seed: int = 0,
                        pp: PostprocessConfig | None = PostprocessConfig()) -> dict[float, dict[str, MetricsReport]]:
    """Metrics per masking rate, before ("raw") and after ("pp") postprocessing.

    Masks for the same window share one random draw across rates, so a lower
    rate always observes a superset of the frames seen at a higher one.
    """
    from .training import evaluate_windows

    out = {}
    for rate in masking_rates:
        if not 0.0 <= rate <= 1.0:
            raise ValueError(f"masking rate must lie in [0, 1], got {rate}")
        keep = 1.0 - rate
        res = {"raw": evaluate_windows(model, windows, keep_probability=keep, mask_seed=seed)}
        if pp is not None:
            res["pp"] = evaluate_windows(model, windows, pp, keep_probability=keep, mask_seed=seed)
        out[rate] = res
    return out
