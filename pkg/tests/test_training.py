import numpy as np
import pytest
import torch

from balltraj.config import ConfigError, LossWeights, ModelConfig, TrainConfig, Variant
from balltraj.datasets import split
from balltraj.sim import simulate_dataset
from balltraj.tracking import make_windows, whole_episode_window
from balltraj.training import (_augment, collate, evaluate_windows, load_checkpoint, predict_window, save_checkpoint,
                               train_model)


@pytest.fixture(scope="module")
def sim_windows():
    matches = simulate_dataset(3, seed=11, n_players=3, duration=10.0)
    wins = [w for m in matches for w in make_windows(m.episode, 40, 20, m.agent_set)]
    whole = [whole_episode_window(m.episode, m.agent_set) for m in matches]
    return wins, whole


def tiny(variant=Variant.H_LSTM, **kw):
    return ModelConfig(variant, n_players=3, d_g=8, d_btr=8, lstm_hidden=8, heads=2, transformer_dim=8,
                       transformer_layers=1, latent_dim=4, **kw)


def quick(**kw):
    base = dict(batch_size=4, max_epochs=1, learning_rate=1e-3, seed=5)
    base.update(kw)
    return TrainConfig(**base)


def test_epoch_one_loss_deterministic(sim_windows):
    wins, _ = sim_windows
    a = train_model(tiny(), quick(), wins)
    b = train_model(tiny(), quick(), wins)
    assert a.history[0].train == b.history[0].train
    assert set(a.history[0].train) == {"loss", "mse", "real", "ce"}


@pytest.mark.parametrize("variant", list(Variant))
def test_every_variant_trains(sim_windows, variant):
    wins, whole = sim_windows
    res = train_model(tiny(variant), quick(), wins[:4])
    assert np.isfinite(res.best_val_pe)
    rep = evaluate_windows(res.model, whole)
    assert np.isfinite(rep.pe)
    assert (rep.ppa is None) == (not variant.hierarchical)


def test_imputation_model_trains(sim_windows):
    wins, whole = sim_windows
    res = train_model(tiny(imputation=True), quick(max_epochs=2), wins)
    rep = evaluate_windows(res.model, whole, keep_probability=1.0)
    assert rep.pe == 0.0


def test_checkpoint_round_trip_64bit(tmp_path, sim_windows):
    _, whole = sim_windows
    torch.manual_seed(0)
    from balltraj.models import build_model

    model = build_model(tiny()).double().eval()
    path = tmp_path / "m.pt"
    save_checkpoint(path, model, tiny())
    loaded, cfg, _ = load_checkpoint(path)
    assert cfg == tiny()
    assert next(loaded.parameters()).dtype == torch.float64
    a, b = predict_window(model, whole[0]), predict_window(loaded, whole[0])
    assert np.array_equal(a.ball, b.ball) and np.array_equal(a.probs, b.probs)


def test_checkpoint_round_trip_32bit(tmp_path, sim_windows):
    _, whole = sim_windows
    res = train_model(tiny(), quick(), sim_windows[0][:4], checkpoint_path=tmp_path / "best.pt")
    loaded, _, payload = load_checkpoint(tmp_path / "best.pt")
    assert payload["train_config"]["lambda_ce"] == quick().weights.lambda_ce
    a, b = predict_window(res.model, whole[0]), predict_window(loaded, whole[0])
    assert np.abs(a.ball - b.ball).max() < 1e-6


def test_checkpoint_errors(tmp_path):
    bad = tmp_path / "bad.pt"
    bad.write_bytes(b"not a checkpoint")
    with pytest.raises(ConfigError):
        load_checkpoint(bad)
    torch.save({"version": 99}, tmp_path / "old.pt")
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "old.pt")
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "missing.pt")


def test_no_windows():
    with pytest.raises(ConfigError):
        train_model(tiny(), quick(), [])


def test_time_budget_stops_early(sim_windows):
    res = train_model(tiny(), quick(max_epochs=50), sim_windows[0][:4], time_budget=0.0)
    assert len(res.history) == 1


def test_augment_regime(sim_windows):
    wins, _ = sim_windows
    rng = np.random.default_rng(0)
    cfg = quick(flip=False)
    kept = []
    for _ in range(200):
        out, with_obs = _augment(wins[:4], rng, cfg, imputation=True)
        assert with_obs
        kept.append(np.mean([w.ball_mask.mean() for w in out]))
    kept = np.array(kept)
    blind = kept == 0.0
    # about half the batches see nothing, the rest see roughly a fifth of the frames
    assert 0.35 < blind.mean() < 0.65
    assert abs(kept[~blind].mean() - 0.2) < 0.05
    out, with_obs = _augment(wins[:2], rng, cfg, imputation=False)
    assert not with_obs and out[0] is wins[0]


def test_collate_shapes(sim_windows):
    wins, _ = sim_windows
    b = collate(wins[:3], with_obs=True)
    assert b.features.shape == (3, 40, 10, 6)
    assert b.obs.shape == (3, 40, 3) and b.players.shape == (3, 40, 6, 2)


def test_split_partitions():
    a, b, c = split(list(range(20)), seed=3)
    assert sorted(a + b + c) == list(range(20))
    assert (len(a), len(b), len(c)) == (14, 3, 3)
    assert split(list(range(20)), seed=3) == (a, b, c)


def test_vrnn_prediction_deterministic(sim_windows):
    _, whole = sim_windows
    from balltraj.models import build_model

    torch.manual_seed(0)
    model = build_model(tiny(Variant.VRNN))
    assert np.array_equal(predict_window(model, whole[0]).ball, predict_window(model, whole[0]).ball)
