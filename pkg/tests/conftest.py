import numpy as np
import pytest
import torch

from balltraj.tracking import PlayerState, Team, TrackingFrame

torch.set_num_threads(1)


def frames_from_tracks(tracks: dict, times, teams: dict | None = None, ball=None, in_play=None):
    """Build frames from ``{player_id: [T, 2] array}``; ids starting with 'B' are team 2."""
    teams = teams or {pid: (Team.TEAM2 if pid.startswith("B") else Team.TEAM1) for pid in tracks}
    out = []
    for t, time in enumerate(times):
        players = tuple(PlayerState(pid, teams[pid], float(xy[t][0]), float(xy[t][1])) for pid, xy in tracks.items())
        b = None if ball is None else (float(ball[t][0]), float(ball[t][1]))
        out.append(TrackingFrame(round(float(time), 9), players, b, True if in_play is None else bool(in_play[t])))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def library_matches():
    from balltraj.sim import generate_match, script_library

    return [generate_match(s) for s in script_library()]


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
