import numpy as np
import pytest

from multildp.core import ConfigError, DomainError, make_rng
from multildp.datagen import make_linear, make_separable
from multildp.sgd import (Model, SgdConfig, clip_gradient, default_group_size, evaluate, format_train_log,
                          gradient, loss, perturb_gradients, smoothed_trend, train)

from conftest import zscore


def test_loss_at_origin():
    x = np.array([0.3, -0.2])
    assert loss("linear", np.zeros(2), x, 0.7) == pytest.approx(0.49)
    assert loss("logistic", np.zeros(2), x, 1) == pytest.approx(np.log(2))
    beta = np.array([2.0, 0.0])
    assert loss("svm", beta, np.array([1.0, 0.0]), 1) == 0.0


def test_gradient_at_origin():
    x = np.array([0.3, -0.2])
    assert np.allclose(gradient("linear", np.zeros(2), x, 0.5), -2 * 0.5 * x)
    assert np.allclose(gradient("logistic", np.zeros(2), x, -1), x / 2)


def test_invalid_labels():
    with pytest.raises(DomainError):
        loss("logistic", np.zeros(2), np.zeros(2), 0.5)
    with pytest.raises(DomainError):
        gradient("linear", np.zeros(2), np.zeros(2), 1.5)
    with pytest.raises(ConfigError):
        loss("huber", np.zeros(2), np.zeros(2), 1)


@pytest.mark.parametrize("kind", ["linear", "logistic", "svm"])
def test_finite_differences(kind):
    rng = make_rng(21)
    h = 1e-6
    for _ in range(100):
        d = 5
        beta = rng.uniform(-2, 2, d)
        x = rng.uniform(-1, 1, d)
        y = rng.uniform(-1, 1) if kind == "linear" else rng.choice([-1.0, 1.0])
        lam = rng.uniform(0, 0.5)
        if kind == "svm" and abs(1 - y * x @ beta) < 1e-3:
            continue
        num = np.array([(loss(kind, beta + h * e, x, y, lam) - loss(kind, beta - h * e, x, y, lam)) / (2 * h)
                        for e in np.eye(d)])
        assert np.allclose(gradient(kind, beta, x, y, lam), num, atol=1e-5, rtol=0)


def test_svm_kink_is_zero():
    x = np.array([1.0, 0.0])
    assert np.allclose(gradient("svm", np.array([1.0, 0.0]), x, 1), 0.0)


def test_clip():
    assert clip_gradient([0.5, -0.2]).tolist() == [0.5, -0.2]
    assert clip_gradient([3, -7]).tolist() == [1, -1]
    assert clip_gradient([1.5, 0.9, -1.1]).tolist() == [1, 0.9, -1]


def test_config_validation_and_defaults():
    assert SgdConfig().lam == 1e-4
    assert default_group_size(10, 4.0) == int(np.ceil(10 * np.log(10) / 16))
    assert default_group_size(1, 1.0) == 1
    for bad in ({"lam": -1}, {"group_size": 0}, {"lr_const": 0}, {"base": "scdf"}, {"clip": 2.0}):
        with pytest.raises(ConfigError):
            SgdConfig(**bad)


def test_single_exact_step():
    x = np.array([[0.5, -0.25, 0.6]])  # 2*y*x stays inside the clip box
    res = train(x, np.array([0.8]), SgdConfig("linear", 1.0, None, lam=0.0, group_size=1), make_rng(0))
    assert np.allclose(res.model.beta, 2 * 0.8 * x[0])


def test_group_larger_than_n():
    with pytest.raises(ConfigError):
        train(np.zeros((3, 2)), np.ones(3), SgdConfig(group_size=4), make_rng(0))


def test_each_user_once():
    X, y, _ = make_separable(1003, 4, make_rng(1))
    res = train(X, y, SgdConfig("logistic", 2.0, "pm", group_size=10), make_rng(2))
    ids = res.participants.ravel()
    assert res.participants.shape == (100, 10)
    assert len(np.unique(ids)) == ids.size
    assert len(res.log) == 100


def test_large_budget_tracks_non_private():
    # 10 iterations of 2000 users each
    X, y, _ = make_linear(20_000, 5, make_rng(3))
    cfg = dict(loss="linear", lam=0.0, group_size=2000)
    plain = train(X, y, SgdConfig(epsilon=50.0, base=None, **cfg), make_rng(4), keep_trajectory=True)
    dev = {}
    for eps in (10.0, 50.0):
        priv = train(X, y, SgdConfig(epsilon=eps, base="pm", **cfg), make_rng(4), keep_trajectory=True)
        assert np.array_equal(priv.participants, plain.participants)
        dev[eps] = np.abs(np.array(priv.trajectory) - np.array(plain.trajectory)).max()
    assert len(plain.trajectory) == 11
    assert dev[50.0] < 1e-2
    assert dev[50.0] < dev[10.0]


@pytest.mark.parametrize("base", ["pm", "hm", "duchi", "laplace"])
def test_noisy_gradient_unbiased(base):
    rng = make_rng(5)
    d = 10
    beta, x = rng.uniform(-1, 1, d), rng.uniform(-1, 1, d)
    g = clip_gradient(gradient("logistic", beta, x, 1.0, 1e-4))
    noisy = perturb_gradients(np.tile(g, (10_000, 1)), base, 1.0, make_rng(6))
    assert np.all(np.abs(zscore(noisy, g)) < 4)


def test_divergence_guard():
    X = np.ones((50, 1))
    with pytest.raises(FloatingPointError):
        train(X, np.ones(50), SgdConfig("linear", 1.0, "laplace", lam=0.0, group_size=1, lr_const=1e308),
              make_rng(0))


def test_evaluate():
    X, y, w = make_separable(2000, 3, make_rng(7))
    assert evaluate(Model(w), X, y, "logistic") == 0.0
    assert evaluate(Model(np.zeros(3)), X, y, "svm") == pytest.approx(np.mean(y != 1))
    X2, y2, w2 = make_linear(100, 3, make_rng(8))
    assert evaluate(Model(w2), X2, y2, "linear") == pytest.approx(0.0, abs=1e-24)
    with pytest.raises(ConfigError):
        evaluate(Model(w), X[:0], y[:0], "svm")
    with pytest.raises(DomainError):
        Model([np.nan])


def test_log_and_model_files(tmp_path):
    X, y, _ = make_separable(400, 3, make_rng(9))
    res = train(X, y, SgdConfig(group_size=20), make_rng(10), holdout=(X[:50], y[:50]))
    res.write_log(tmp_path / "log.csv")
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert lines[0] == "t,gamma,metric_on_holdout,grad_norm_estimate" and len(lines) == 21
    assert smoothed_trend(res.log)[0] > 0
    res.model.to_csv(tmp_path / "m.csv")
    assert np.array_equal(Model.from_csv(tmp_path / "m.csv").beta, res.model.beta)
    assert format_train_log([(1, 1.0, None, 0.5)]).splitlines()[1] == "1,1.0,,0.5"
