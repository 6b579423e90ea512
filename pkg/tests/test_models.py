import numpy as np
import pytest
import torch

from balltraj.config import ConfigError, LossWeights, ModelConfig, Variant, run_tag
from balltraj.losses import LossParts, ce_from_logits, mse_loss, reality_loss, total_loss
from balltraj.models import ContextVRNN, GoalkeeperModel, HierarchicalModel, build_model, gk_forward, vrnn_generate
from balltraj.models.goalkeeper import gk_loss
from balltraj.models.hierarchical import NumericError
from balltraj.models.layers import FeatureScaler
from balltraj.set_encoders import ShapeError

TOL = 1e-5


def tiny(variant=Variant.H_LSTM, n=2, **kw):
    base = dict(n_players=n, d_g=8, d_btr=8, lstm_hidden=8, lstm_layers=1, dropout=0.0, heads=2,
                transformer_dim=8, transformer_layers=1, latent_dim=4)
    base.update(kw)
    return ModelConfig(variant, **base)


def features(B=2, T=6, n=2, seed=0, dtype=torch.float32):
    g = torch.Generator().manual_seed(seed)
    x = torch.zeros(B, T, 2 * n + 4, 6, dtype=dtype)
    x[..., 0] = torch.rand(B, T, 2 * n + 4, generator=g, dtype=dtype) * 105
    x[..., 1] = torch.rand(B, T, 2 * n + 4, generator=g, dtype=dtype) * 68
    x[..., :2 * n, 2:] = torch.randn(B, T, 2 * n, 4, generator=g, dtype=dtype) * 3
    return x


def team_perm(n):
    return torch.cat([torch.arange(n).flip(0), torch.arange(n, 2 * n).roll(1), torch.arange(2 * n, 2 * n + 4)])


@pytest.mark.parametrize("variant", [Variant.H_LSTM, Variant.H_TRANSFORMER])
def test_hierarchical_shapes_and_equivariance(variant):
    torch.manual_seed(0)
    model = build_model(tiny(variant)).eval()
    x = features()
    out = model(x)
    assert out.ball.positions.shape == (2, 6, 2)
    assert torch.isfinite(out.ball.positions).all()
    probs = out.possession.probs
    assert probs.shape == (2, 6, 8)
    assert (probs.sum(-1) - 1).abs().max() < TOL
    perm = team_perm(2)
    out_p = model(x[:, :, perm])
    assert (out_p.possession.probs - probs[..., perm]).abs().max() < TOL
    assert (out_p.possession.hidden - out.possession.hidden[:, :, perm]).abs().max() < TOL
    assert (out_p.ball.positions - out.ball.positions).abs().max() < 1e-4


@pytest.mark.parametrize("variant", [Variant.LSTM, Variant.TRANSFORMER])
def test_baseline_invariance(variant):
    torch.manual_seed(0)
    model = build_model(tiny(variant)).eval()
    x = features()
    out = model(x)
    assert out.possession is None and out.ball.positions.shape == (2, 6, 2)
    assert (model(x[:, :, team_perm(2)]).ball.positions - out.ball.positions).abs().max() < 1e-4


@pytest.mark.parametrize("embeddings", [("PPE",), ("FPE",), ("PPE", "FPE"), ("PPE", "FPI"), ("FPE", "FPI")])
def test_embedding_subsets(embeddings):
    model = build_model(tiny(embeddings=embeddings)).eval()
    assert torch.isfinite(model(features()).ball.positions).all()


def test_fpi_alone_rejected():
    with pytest.raises(ConfigError):
        tiny(embeddings=("FPI",))


def test_feature_subsets_use_leading_columns():
    model = build_model(tiny(features="xy")).eval()
    x = features()
    y = x.clone()
    y[..., 2:] = 99.0
    assert torch.equal(model(x).ball.positions, model(y).ball.positions)


def test_wrong_agent_count():
    with pytest.raises(ShapeError):
        build_model(tiny())(features(n=3))


def test_non_finite_input():
    x = features()
    x[0, 0, 0, 0] = float("nan")
    with pytest.raises(NumericError):
        build_model(tiny())(x)


@pytest.mark.parametrize("variant", [Variant.H_LSTM, Variant.LSTM])
def test_imputation_overwrites_observed(variant):
    torch.manual_seed(0)
    model = build_model(tiny(variant, imputation=True)).eval()
    x = features()
    ball = torch.rand(2, 6, 2) * 50
    obs = torch.cat([ball, torch.ones(2, 6, 1)], -1)
    assert torch.equal(model(x, ball_obs=obs).ball.positions, ball)
    half = obs.clone()
    half[:, ::2] = 0
    pred = model(x, ball_obs=half).ball.positions
    assert torch.equal(pred[:, 1::2], ball[:, 1::2])
    # without observations the model still predicts
    assert torch.isfinite(model(x).ball.positions).all()


def test_observation_encoding_zero_when_masked():
    sc = FeatureScaler(tiny().pitch)
    obs = torch.tensor([[10.0, 20.0, 1.0], [0.0, 0.0, 0.0]])
    enc = sc.observation(obs)
    assert torch.equal(enc[1], torch.zeros(3))
    assert enc[0, 2] == 1.0


def test_trajectory_loss_reaches_classifier():
    torch.manual_seed(0)
    model = build_model(tiny())
    x = features()
    out = model(x)
    parts = LossParts(mse_loss(out.ball.positions, torch.rand(2, 6, 2) * 50),
                      reality_loss(out.ball.positions, x[..., :4, :2]),
                      ce_from_logits(out.possession.logits, torch.zeros(2, 6, dtype=torch.long)))
    total_loss(parts, LossWeights(1.0, 0.0)).backward()
    grad = sum(p.grad.abs().sum() for p in model.ppc.parameters() if p.grad is not None)
    assert grad > 0


def test_total_loss_gradient_finite_differences():
    """Full tiny H-LSTM (T=5, n=2, d=8), all three terms active, 64-bit."""
    torch.manual_seed(0)
    model = build_model(tiny()).double()
    x = features(B=1, T=5, dtype=torch.float64)
    target = torch.rand(1, 5, 2, dtype=torch.float64) * torch.tensor([105.0, 68.0], dtype=torch.float64)
    labels = torch.tensor([[0, 0, 1, 2, 2]])
    players = x[..., :4, :2]
    params = [p for p in model.parameters()]

    def loss_fn():
        out = model(x)
        parts = LossParts(mse_loss(out.ball.positions, target), reality_loss(out.ball.positions, players),
                          ce_from_logits(out.possession.logits, labels))
        return total_loss(parts, LossWeights(1.0, 20.0))

    loss = loss_fn()
    grads = torch.autograd.grad(loss, params)
    gen = torch.Generator().manual_seed(1)
    fds, ans = [], []
    h = 1e-6  # small enough to stay clear of ReLU kinks
    for p, g in zip(params, grads):
        flat, gflat = p.data.view(-1), g.view(-1)
        for i in torch.randperm(flat.numel(), generator=gen)[:3]:
            old = flat[i].item()
            flat[i] = old + h
            up = loss_fn().item()
            flat[i] = old - h
            down = loss_fn().item()
            flat[i] = old
            fds.append((up - down) / (2 * h))
            ans.append(gflat[i].item())
    fds, ans = np.array(fds), np.array(ans)
    assert np.linalg.norm(fds - ans) / np.linalg.norm(ans) < 1e-4


def test_vrnn_posterior_prior_and_kl():
    torch.manual_seed(0)
    model = build_model(tiny(Variant.VRNN)).eval()
    assert isinstance(model, ContextVRNN)
    x = features()
    target = torch.rand(2, 6, 2) * 50
    out = model(x, target=target, sample_source="POSTERIOR")
    assert out.ball.positions.shape == (2, 6, 2)
    assert (out.extras.kl() >= -1e-6).all()
    assert torch.isfinite(model.elbo_loss(out, target))
    prior = vrnn_generate(model, x, seed=3)
    again = vrnn_generate(model, x, seed=3)
    assert torch.equal(prior.positions, again.positions)
    with pytest.raises(ValueError):
        model(x, sample_source="POSTERIOR")
    with pytest.raises(ValueError):
        model(x, target=target, sample_source="SIDEWAYS")


def test_vrnn_prior_ignores_future_context():
    """The prior at t depends on the context only through backward states from t onward
    and forward states before t, so changing the ball target never changes it."""
    torch.manual_seed(0)
    model = build_model(tiny(Variant.VRNN)).eval()
    x = features(B=1)
    a = model(x, sample_source="PRIOR", sample=False)
    b = model(x, target=torch.zeros(1, 6, 2), sample_source="PRIOR", sample=False)
    assert torch.equal(a.ball.positions, b.ball.positions)


def test_goalkeeper_model():
    torch.manual_seed(0)
    cfg = tiny(n=3)
    model = GoalkeeperModel(cfg).eval()
    x = features(n=3)[:, :, :6]
    out = model(x)
    assert out.gk_positions.shape == (2, 6, 2, 2)
    assert (out.team_probs.sum(-1) - 1).abs().max() < TOL
    perm = torch.tensor([2, 0, 1, 3, 5, 4])
    assert (model(x[:, :, perm]).gk_positions - out.gk_positions).abs().max() < 1e-4
    loss = gk_loss(out, torch.zeros(2, 6, dtype=torch.long), torch.zeros(2, 6, 2, 2))
    assert torch.isfinite(loss)
    with pytest.raises(ConfigError):
        gk_forward(model, x, ["A1", "A2", "A3", "B1", "B2", "B3"], goalkeepers=["A1"])
    with pytest.raises(ShapeError):
        model(features(n=3))


def test_run_tags():
    assert run_tag(tiny(), LossWeights(1.0, 20.0)) == "H-LSTM-RL"
    assert run_tag(tiny(), LossWeights(0.0, 20.0)) == "H-LSTM"
    assert run_tag(tiny(), LossWeights(1.0, 20.0), postprocess=True) == "H-LSTM-RL-PP"


def test_config_dict_roundtrip():
    cfg = tiny(Variant.H_TRANSFORMER, embeddings=("PPE", "FPE"), imputation=True)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
