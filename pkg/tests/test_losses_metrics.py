import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from balltraj.config import LossWeights
from balltraj.losses import LossParts, ce_from_logits, ce_loss, mse_loss, reality_loss, total_loss, turning_angles
from balltraj.metrics import MetricsReport, evaluate_sequences, position_error, possession_accuracy


def _rl_oracle(pred, players):
    """Loop implementation using arccos of the clipped cosine."""
    T = len(pred)
    acc = 0.0
    for t in range(1, T - 1):
        a = pred[t] - pred[t - 1]
        b = pred[t + 1] - pred[t]
        na, nb = math.hypot(*a), math.hypot(*b)
        theta = 0.0 if na < 1e-6 or nb < 1e-6 else math.acos(max(-1.0, min(1.0, (a @ b) / (na * nb))))
        d = min(math.hypot(*(pred[t] - p)) for p in players[t])
        acc += math.tanh(theta) * d
    return acc / (T - 2)


# ---------------------------------------------------------------- mse


def test_mse_values(rng):
    y = rng.normal(size=(10, 2))
    assert float(mse_loss(torch.tensor(y), torch.tensor(y))) == 0.0
    assert float(mse_loss(torch.tensor(y + [3.0, 4.0]), torch.tensor(y))) == pytest.approx(25.0)
    p = rng.normal(size=(10, 2))
    naive = sum((p[t, 0] - y[t, 0]) ** 2 + (p[t, 1] - y[t, 1]) ** 2 for t in range(10)) / 10
    assert abs(float(mse_loss(torch.tensor(p), torch.tensor(y))) - naive) < 1e-9


def test_mse_shape_mismatch():
    with pytest.raises(ValueError):
        mse_loss(torch.zeros(3, 2), torch.zeros(4, 2))


# ---------------------------------------------------------------- reality loss


def test_right_angle_turn():
    pred = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
    players = np.array([[[0.0, 0.0]], [[1.0, 5.0]], [[0.0, 0.0]]])
    expected = math.tanh(math.acos(0.0)) * 5.0  # tanh(pi/2) * 5
    assert abs(reality_loss(pred, players) - expected) < 1e-9
    assert abs(expected - 4.586) < 1e-3


def test_straight_line_is_zero(rng):
    k = np.arange(20.0)[:, None]
    pred = np.array([3.0, -1.0]) + k * np.array([0.75, 0.25])  # exactly representable points
    assert reality_loss(pred, rng.normal(size=(20, 4, 2)) * 30) == 0.0
    t = np.linspace(0, 1, 20)[:, None]
    pred = np.array([3.0, -1.0]) + t * np.array([7.0, 2.0])
    assert reality_loss(pred, rng.normal(size=(20, 4, 2)) * 30) < 1e-12


def test_turn_on_player_is_free():
    pred = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
    players = np.array([[[9.0, 9.0]], [[1.0, 0.0]], [[9.0, 9.0]]])
    assert reality_loss(pred, players) == 0.0


def test_reality_loss_matches_loop_oracle(rng):
    for _ in range(20):
        pred = rng.normal(size=(12, 2)) * 10
        players = rng.normal(size=(12, 5, 2)) * 10
        assert abs(reality_loss(pred, players) - _rl_oracle(pred, players)) < 1e-9


def test_stationary_ball_has_no_angle():
    traj = torch.zeros(6, 2, dtype=torch.float64, requires_grad=True)
    theta = turning_angles(traj)
    assert torch.equal(theta, torch.zeros(4, dtype=torch.float64))
    players = torch.ones(6, 3, 2, dtype=torch.float64)
    reality_loss(traj, players).backward()
    assert torch.isfinite(traj.grad).all()


def test_reality_loss_gradient_matches_finite_differences(rng):
    pred = torch.tensor(rng.normal(size=(8, 2)) * 5, requires_grad=True)
    players = torch.tensor(rng.normal(size=(8, 3, 2)) * 5)
    assert torch.autograd.gradcheck(lambda p: reality_loss(p, players), (pred,), eps=1e-6, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(pred=arrays(np.float64, (6, 2), elements=st.floats(-50, 50)),
       players=arrays(np.float64, (6, 3, 2), elements=st.floats(-50, 50)))
def test_reality_loss_nonnegative_bounded(pred, players):
    value = reality_loss(pred, players)
    dmax = np.linalg.norm(pred[1:-1, None] - players[1:-1], axis=-1).min(-1).max()
    assert 0.0 <= value <= math.tanh(math.pi) * dmax + 1e-9


# ---------------------------------------------------------------- cross entropy


def test_ce_values(rng):
    labels = torch.tensor([0, 3, 25])
    assert float(ce_loss(torch.eye(26, dtype=torch.float64)[labels], labels)) == 0.0
    uniform = torch.full((3, 26), 1 / 26, dtype=torch.float64)
    assert abs(float(ce_loss(uniform, labels)) - math.log(26)) < 1e-9


def test_ce_matches_loop_oracle(rng):
    logits = rng.normal(size=(15, 8))
    probs = np.exp(logits) / np.exp(logits).sum(1, keepdims=True)
    q = rng.integers(0, 8, 15)
    naive = -sum(math.log(probs[t, q[t]]) for t in range(15)) / 15
    assert abs(float(ce_loss(torch.tensor(probs), torch.tensor(q))) - naive) < 1e-9
    assert abs(float(ce_from_logits(torch.tensor(logits), torch.tensor(q))) - naive) < 1e-9


def test_ce_rejects_bad_label():
    with pytest.raises(ValueError):
        ce_loss(torch.full((2, 4), 0.25), torch.tensor([0, 4]))


def test_total_loss_weighting():
    one = torch.tensor(1.0)
    assert float(total_loss(LossParts(one, one, one))) == 22.0
    parts = LossParts(torch.tensor(3.0), torch.tensor(5.0), torch.tensor(7.0))
    assert float(total_loss(parts, LossWeights(0.0, 0.0))) == 3.0


def test_loss_weights_must_be_nonnegative():
    from balltraj.config import ConfigError

    with pytest.raises(ConfigError):
        LossWeights(-1.0, 20.0)


# ---------------------------------------------------------------- metrics


def test_position_error_values(rng):
    y = rng.normal(size=(10, 2))
    assert position_error(y, y) == 0.0
    assert position_error(y + [3.0, 4.0], y) == pytest.approx(5.0)


def test_possession_accuracy_definitions():
    team_map = np.array([1, 1, 2, 2, 0, 0, 0, 0])
    labels = np.array([0, 2, 4])
    assert possession_accuracy(np.eye(8)[labels], labels, team_map) == (1.0, 1.0)
    wrong_player_same_team = np.eye(8)[[1, 3, 5]]
    assert possession_accuracy(wrong_player_same_team, labels, team_map) == (0.0, 1.0)


def test_possession_accuracy_unknown_label():
    with pytest.raises(ValueError):
        possession_accuracy(np.eye(3), np.array([0, 1, 5]), np.array([1, 2, 0]))


def test_metric_identities_random(rng):
    team_map = np.array([1] * 4 + [2] * 4 + [0] * 4)
    for _ in range(1000):
        T = int(rng.integers(3, 30))
        probs = rng.dirichlet(np.ones(12), size=T)
        labels = rng.integers(0, 12, T)
        ppa, tpa = possession_accuracy(probs, labels, team_map)
        assert tpa >= ppa
        pred, y = rng.normal(size=(T, 2)) * 10, rng.normal(size=(T, 2)) * 10
        assert position_error(pred, y) <= math.sqrt(float(mse_loss(torch.tensor(pred), torch.tensor(y)))) + 1e-12


def test_report_formats():
    r = MetricsReport(4.215, 0.12, 0.6125, 0.835)
    assert r.table_row("H-LSTM-RL") == "H-LSTM-RL | 4.2150 | 0.1200 | 61.25% | 83.50%"
    assert MetricsReport.csv_header(("model",)) == "model,pe,rl,ppa,tpa"
    assert set(r.as_dict()) == {"pe", "rl", "ppa", "tpa"}
    assert "ppa = 0.612500" in r.to_text()


def test_evaluate_sequences_frame_weighted(rng):
    a, b = rng.normal(size=(10, 2)), rng.normal(size=(30, 2))
    players = [np.zeros((10, 1, 2)), np.zeros((30, 1, 2))]
    rep = evaluate_sequences([a + [3, 4], b], [a, b], players)
    assert rep.pe == pytest.approx(5.0 * 10 / 40)
