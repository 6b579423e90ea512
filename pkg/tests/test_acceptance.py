"""Acceptance suite: one PASS/FAIL line per criterion, printed in the terminal summary.

Run alone with ``pytest tests/test_acceptance.py -v``. Criteria 6-8 train small
models on simulator data and take roughly 20 minutes on one CPU core.
"""

import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import torch

from balltraj.applications import (IMPUTATION_RATES, detect_passes, match_passes, random_possession, roi_accuracy,
                                   rp_metrics)
from balltraj.config import LossWeights, PostprocessConfig, SetEncoderConfig, Variant
from balltraj.datasets import DATA_ROOT_ENV
from balltraj.experiments import (AblationConfig, ImputationConfig, ProbeConfig, SimData, hierarchy_ablation,
                                  imputation_trend, overfit_probe, small_model, strictly_decreasing)
from balltraj.losses import LossParts, ce_from_logits, ce_loss, mse_loss, reality_loss, total_loss
from balltraj.metrics import position_error, possession_accuracy
from balltraj.models import build_model
from balltraj.postprocess import postprocess
from balltraj.set_encoders import FPIEncoder, PPEEncoder, PPIEncoder, SetTransformer, STEncoder, st_encode, st_full
from balltraj.sim import generate_match, script_library
from balltraj.tracking import agent_positions
from balltraj.training import evaluate_windows, predict_window, window_agent_positions

from conftest import ACCEPTANCE_LINES

# tolerances pinned from the acceptance criteria
PERM_TOL, PERM_TRIALS, PERM_SECONDS = 1e-5, 20, 60.0
GRAD_REL_TOL, GRAD_SECONDS = 1e-4, 300.0
ORACLE_TOL = 1e-9
ROUND_TRIP_TOL = 1e-6
PP_RL_TRAINED = 0.01
PROBE_PE, PROBE_PPA, PROBE_EPOCHS, PROBE_SECONDS = 1.0, 0.90, 200, 30 * 60.0
METRICA_PE, METRICA_PPA = 6.0, 0.50


def record(n: int, ok: bool, text: str) -> None:
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {n:>2}. {text}")
    assert ok, text


# ---------------------------------------------------------------------------
# 1. Permutation suite


def _team_perm(n, g):
    return torch.cat([torch.randperm(n, generator=g), torch.randperm(n, generator=g) + n,
                      torch.arange(2 * n, 2 * n + 4)])


def test_01_permutation_suite():
    t0 = time.monotonic()
    g = torch.Generator().manual_seed(2024)
    torch.manual_seed(2024)
    n, dev = 3, {}
    enc = STEncoder(6, SetEncoderConfig(16, 4)).eval()
    full = SetTransformer(6, SetEncoderConfig(16, 4)).eval()
    fpi, ppi, ppe = FPIEncoder(n, 6).eval(), PPIEncoder(n, 6).eval(), PPEEncoder(n, 6).eval()
    with torch.no_grad():
        for name in ("st_encode", "st_full", "encode_fpi", "encode_ppi", "encode_ppe"):
            worst = 0.0
            for _ in range(PERM_TRIALS):
                if name in ("st_encode", "st_full"):
                    m = int(torch.randint(1, 12, (1,), generator=g))
                    x = torch.randn(m, 6, generator=g) * 10
                    p = torch.randperm(m, generator=g)
                    d = (st_encode(x[p], enc) - st_encode(x, enc)[p]) if name == "st_encode" else \
                        (st_full(x[p], full) - st_full(x, full))
                else:
                    x = torch.randn(2 * n + 4, 6, generator=g) * 10
                    if name == "encode_fpi":
                        p = torch.randperm(2 * n + 4, generator=g)
                        d = fpi(x[p]) - fpi(x)
                    elif name == "encode_ppi":
                        p = _team_perm(n, g)
                        d = ppi(x[p]).fused - ppi(x).fused
                    else:
                        p = _team_perm(n, g)
                        d = ppe(x[p]) - ppe(x)[p]
                worst = max(worst, float(d.abs().max()))
            dev[name] = worst
    secs = time.monotonic() - t0
    ok = all(v < PERM_TOL for v in dev.values()) and secs < PERM_SECONDS
    record(1, ok, f"permutation suite, {PERM_TRIALS} trials each: max deviation "
           + ", ".join(f"{k} {v:.1e}" for k, v in dev.items()) + f" (< {PERM_TOL:g}); {secs:.1f}s (< 60s)")


# ---------------------------------------------------------------------------
# 2. Gradient suite


def test_02_gradient_suite():
    t0 = time.monotonic()
    torch.manual_seed(0)
    cfg = small_model(Variant.H_LSTM, n_players=2, d_g=8, d_btr=8, lstm_hidden=8, lstm_layers=1)
    model = build_model(cfg).double()
    g = torch.Generator().manual_seed(0)
    T, K = 5, 8
    x = torch.zeros(1, T, K, 6, dtype=torch.float64)
    x[..., 0] = torch.rand(1, T, K, generator=g, dtype=torch.float64) * 105
    x[..., 1] = torch.rand(1, T, K, generator=g, dtype=torch.float64) * 68
    x[..., :4, 2:] = torch.randn(1, T, 4, 4, generator=g, dtype=torch.float64)
    target = torch.rand(1, T, 2, generator=g, dtype=torch.float64) * 50
    labels = torch.tensor([[0, 0, 1, 3, 3]])
    weights = LossWeights(lambda_real=1.0, lambda_ce=20.0)

    def loss_fn():
        out = model(x)
        parts = LossParts(mse_loss(out.ball.positions, target), reality_loss(out.ball.positions, x[..., :4, :2]),
                          ce_from_logits(out.possession.logits, labels))
        return total_loss(parts, weights)

    params = list(model.parameters())
    grads = torch.autograd.grad(loss_fn(), params)
    fd, an = [], []
    h = 1e-6
    with torch.no_grad():
        for p, gr in zip(params, grads):
            flat, gflat = p.data.view(-1), gr.view(-1)
            for i in torch.randperm(flat.numel(), generator=g)[:4]:
                old = flat[i].item()
                flat[i] = old + h
                up = loss_fn().item()
                flat[i] = old - h
                down = loss_fn().item()
                flat[i] = old
                fd.append((up - down) / (2 * h))
                an.append(gflat[i].item())
    fd, an = np.array(fd), np.array(an)
    rel = float(np.linalg.norm(fd - an) / np.linalg.norm(an))
    secs = time.monotonic() - t0
    ok = rel < GRAD_REL_TOL and secs < GRAD_SECONDS
    record(2, ok, f"gradient suite, tiny H-LSTM (T=5, n=2, d=8) at 64-bit, {len(fd)} coordinates: relative error "
           f"{rel:.2e} (< {GRAD_REL_TOL:g}); {secs:.1f}s (< 300s)")


# ---------------------------------------------------------------------------
# 3. Loss oracles


def test_03_loss_oracles():
    # right angle at (10, 0): the nearest player is at (10, 5), so d = 5 and the penalty is tanh(pi/2) * 5
    traj = np.array([[[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]]])
    players = np.array([[[[50.0, 50.0]], [[10.0, 5.0]], [[60.0, 60.0]]]])
    oracle = math.tanh(math.acos(0.0)) * 5.0
    rl = float(reality_loss(torch.tensor(traj), torch.tensor(players)))
    straight = torch.tensor([[[0.0, 0.0], [1.0, 2.0], [2.0, 4.0], [4.0, 8.0], [8.0, 16.0]]], dtype=torch.float64)
    crowd = torch.rand(1, 5, 3, 2, dtype=torch.float64) * 20
    rl_line = float(reality_loss(straight, crowd))
    ce = float(ce_loss(torch.full((1, 3, 26), 1 / 26, dtype=torch.float64), torch.tensor([[0, 7, 25]])))
    ok = abs(rl - oracle) < ORACLE_TOL and rl_line == 0.0 and abs(ce - math.log(26)) < ORACLE_TOL
    record(3, ok, f"loss oracles: right angle {rl:.12f} vs {oracle:.12f}; straight line {rl_line!r} (== 0); "
           f"uniform CE {ce:.12f} vs ln 26 {math.log(26):.12f} (tol {ORACLE_TOL:g})")


# ---------------------------------------------------------------------------
# 4. Postprocess round trip


def test_04_postprocess_round_trip():
    worst, f1s, names = 0.0, [], []
    for script in script_library():
        m = generate_match(script)
        aset = m.agent_set
        probs = np.eye(aset.n_agents)[m.labels]
        a, rebuilt = postprocess(probs, m.ball, agent_positions(m.episode, aset))
        worst = max(worst, float(np.abs(rebuilt - m.ball).max()))
        f1s.append(match_passes(detect_passes(a, aset.ids, aset.n), m.passes).f1_pass)
        names.append(script.name)
    ok = worst < ROUND_TRIP_TOL and all(f == 1.0 for f in f1s)
    record(4, ok, f"postprocess round trip on {len(names)} scripts: max path error {worst:.1e} (< {ROUND_TRIP_TOL:g}); "
           f"pass F1 {min(f1s):.3f} (== 1.0)")


# ---------------------------------------------------------------------------
# 5-8. Trained models shared between criteria


@pytest.fixture(scope="module")
def probe():
    return overfit_probe(ProbeConfig())


@pytest.fixture(scope="module")
def ablation():
    return hierarchy_ablation(AblationConfig())


def _random_output(rng, T=80, K=8):
    players = np.cumsum(rng.normal(0, 0.5, (T, K, 2)), 0) + rng.uniform(10, 90, (1, K, 2))
    logits = rng.normal(0, 3.0, (T, K))
    probs = np.exp(logits) / np.exp(logits).sum(1, keepdims=True)
    pred = players[np.arange(T), probs.argmax(1)] + rng.normal(0, 2.0, (T, 2))
    return probs, pred, players


def _span_split(model, windows):
    """RL restricted to the span between the first and last anchor, and the share of frames outside it."""
    span_rl, outside, total = [], 0, 0
    for w in windows:
        pred = predict_window(model, w)
        a, rebuilt = postprocess(pred.probs, pred.ball, window_agent_positions(w))
        idx = np.flatnonzero(a.touched)
        total += len(w)
        if len(idx) < 2:
            outside += len(w)
            continue
        outside += len(w) - (idx[-1] - idx[0] + 1)
        if idx[-1] - idx[0] >= 2:
            span_rl.append(reality_loss(rebuilt[idx[0]:idx[-1] + 1], w.player_positions[idx[0]:idx[-1] + 1]))
    return max(span_rl, default=0.0), float(outside / total)


@pytest.mark.slow
def test_05_postprocessing_realism(ablation):
    rng = np.random.default_rng(5)
    violations, compared = 0, 0
    for _ in range(100):
        probs, pred, players = _random_output(rng)
        a, rebuilt = postprocess(probs, pred, players)
        if a.touched.sum() < 2:
            continue
        compared += 1
        violations += float(reality_loss(rebuilt, players)) > float(reality_loss(pred, players)) + 1e-12
    # the seed-0 H-LSTM-RL from the ablation, on episodes neither training nor its test split used
    model = ablation.models[0][Variant.H_LSTM]
    held_out = SimData(n_episodes=5, seed=77).whole()
    raw = evaluate_windows(model, held_out)
    pp = evaluate_windows(model, held_out, PostprocessConfig())
    span_rl, outside = _span_split(model, held_out)
    ok = violations == 0 and compared > 0 and pp.rl < PP_RL_TRAINED
    record(5, ok, f"postprocessing realism: RL(rebuilt) > RL(raw) on {violations}/{compared} random outputs "
           f"with >= 2 anchors (== 0); trained H-LSTM-RL on held-out episodes RL raw {raw.rl:.4f} -> "
           f"postprocessed {pp.rl:.5f} (< {PP_RL_TRAINED}); between first and last anchor max RL {span_rl:.1e}, "
           f"{outside:.1%} of frames lie outside the anchors and keep the raw prediction")


@pytest.mark.slow
def test_06_overfit_probe(probe):
    ok = (probe.reached_epoch is not None and probe.reached_epoch <= PROBE_EPOCHS and probe.seconds < PROBE_SECONDS)
    last = probe.final
    record(6, ok, f"overfit probe, 10 simulator episodes: training PE {last.pe:.3f} m (< {PROBE_PE}) and PPA "
           f"{last.ppa:.1%} (> {PROBE_PPA:.0%}) reached at epoch {probe.reached_epoch} (<= {PROBE_EPOCHS}); "
           f"{probe.seconds / 60:.1f} min CPU (< 30 min)")


# ---------------------------------------------------------------------------
# 7. Imputation trend


@pytest.mark.slow
def test_07_imputation_trend():
    reports, _ = imputation_trend(ImputationConfig())
    pes = [reports[r]["raw"].pe for r in IMPUTATION_RATES]
    ok = strictly_decreasing(pes)
    record(7, ok, "imputation trend on held-out simulator episodes, PE at masking "
           + " -> ".join(f"{r:g}: {pe:.3f}" for r, pe in zip(IMPUTATION_RATES, pes)) + " (strictly decreasing)")


# ---------------------------------------------------------------------------
# 8. Hierarchy ablation


@pytest.mark.slow
def test_08_hierarchy_ablation(ablation):
    cfg = AblationConfig()
    pairs = [(s, r[Variant.H_LSTM].pe, r[Variant.LSTM].pe) for s, r in ablation.reports.items()]
    wins = sum(h < l for _, h, l in pairs)
    ok = wins * 2 > len(pairs)
    record(8, ok, f"hierarchy ablation, {cfg.epochs} epochs each: test PE H-LSTM vs LSTM "
           + "; ".join(f"seed {s}: {h:.3f} vs {l:.3f}" for s, h, l in pairs)
           + f"; H-LSTM lower on {wins}/{len(pairs)} seeds (majority)")


# ---------------------------------------------------------------------------
# 9. Metric identities


def test_09_metric_identities():
    rng = np.random.default_rng(9)
    team_map = np.array([1] * 4 + [2] * 4 + [0] * 4)
    bad_acc = bad_pe = 0
    for _ in range(1000):
        T = int(rng.integers(1, 60))
        probs = rng.dirichlet(np.ones(12) * 0.5, size=T)
        labels = rng.integers(0, 12, T)
        ppa, tpa = possession_accuracy(probs, labels, team_map)
        bad_acc += tpa < ppa
        pred, target = rng.normal(0, 20, (T, 2)), rng.normal(0, 20, (T, 2))
        mse = float(mse_loss(torch.tensor(pred), torch.tensor(target)))
        bad_pe += position_error(pred, target) > math.sqrt(mse) + 1e-12
    bad_roi = 0
    for _ in range(200):
        truth = rng.uniform(0, 100, (50, 2))
        pred = truth + rng.normal(0, 8, (50, 2))
        sizes = sorted(rng.uniform(0.1, 60, 6))
        acc = roi_accuracy(pred, truth, sizes)
        bad_roi += any(acc[a] > acc[b] for a, b in zip(sizes, sizes[1:]))
    pos = np.cumsum(rng.normal(0, 0.7, (600, 10, 2)), 0)
    teams = np.array([1] * 5 + [2] * 5)
    split_rep = rp_metrics(pos, teams, random_possession(600, 3))
    whole_rep = rp_metrics(pos, teams, np.ones(600, int))
    rp_dev = max(float(np.abs(split_rep.whole(m) - whole_rep.whole(m)).max()) for m in ("total", "hsr"))
    ok = bad_acc == 0 and bad_pe == 0 and bad_roi == 0 and rp_dev < 1e-9
    record(9, ok, f"metric identities: tpa < ppa in {bad_acc}/1000, PE > sqrt(MSE) in {bad_pe}/1000, "
           f"ROI non-monotone in {bad_roi}/200, RP attacking+defending vs whole max deviation {rp_dev:.1e} m")


# ---------------------------------------------------------------------------
# 10. Optional Metrica reproduction


def test_10_metrica_reproduction():
    root = os.environ.get(DATA_ROOT_ENV)
    games = ("Sample_Game_1", "Sample_Game_2", "Sample_Game_3")
    if not root or not all((Path(root) / g).is_dir() for g in games):
        ACCEPTANCE_LINES.append(f"[SKIP] 10. Metrica reproduction: Sample Games 1-3 not found under "
                                f"${DATA_ROOT_ENV} ({root or 'unset'})")
        pytest.skip("Metrica sample data not available")
    script = Path(__file__).resolve().parents[1] / "scripts" / "metrica_reproduction.py"
    out = subprocess.run([sys.executable, str(script), "--root", root], capture_output=True, text=True).stdout
    row = next((l for l in out.splitlines() if l.startswith("H-LSTM-RL |")), "")
    cells = [c.strip() for c in row.split("|")]
    pe, ppa = float(cells[1]), float(cells[3].rstrip("%")) / 100
    record(10, pe <= METRICA_PE and ppa >= METRICA_PPA,
           f"Metrica Game 3 second half: PE {pe:.3f} m (<= {METRICA_PE}), PPA {ppa:.1%} (>= {METRICA_PPA:.0%})")
