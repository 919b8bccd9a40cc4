import csv

import numpy as np
import pytest

from shared import cert
from shared import config as env_config
from shared.data import Dataset, cosine_dataset, load_mnist, subset
from shared.errors import DataNotFound, InvalidConfig
from shared.nn import FcLayer, PlainNetwork, export_plain, forward
from shared.train import (
    METRICS_HEADER,
    Adam,
    BaselineNetwork,
    MetricRow,
    accuracy,
    adversarial_accuracy,
    cosine_config,
    hand_cosine_network,
    make_config,
    mse_of,
    pgd_attack,
    predict_batched,
    spectral_baseline_train,
    train,
    write_metrics_csv,
)


def _silent(_: str) -> None:
    pass


def _toy_images(n=12, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(rng.uniform(0.0, 1.0, (n, 1, 6, 6)), rng.integers(0, 3, n))


# ─── 설정 / 옵티마이저 ───────────────────────────────────────

@pytest.mark.parametrize("kwargs", [
    {"arch": "f(2)", "rho": 0.0},
    {"arch": "f(2)", "lr": -1e-3},
    {"arch": "f(2)", "epochs": -1},
    {"arch": "f(2)", "batch_size": 0},
    {"arch": "f(2)", "eps_gramian": 0.0},
    {"arch": "f(2)", "loss": "hinge"},
    {"arch": "f(2)", "unknown": 1},
    {"rho": 1.0},
])
def test_make_config_rejects(kwargs):
    with pytest.raises(InvalidConfig):
        make_config(**kwargs)


def test_make_config_defaults():
    cfg = make_config(arch="f(2)")
    assert cfg.optimizer == "adam"
    assert cfg.lr == 1e-3
    assert cfg.padding == "same"


def test_adam_first_step():
    params = {"x": np.array([1.0])}
    Adam(lr=0.1).step(params, {"x": np.array([2.0])})
    assert params["x"].item() == pytest.approx(0.9, abs=1e-7)


def test_accuracy_and_metrics_csv(tmp_path):
    assert accuracy(np.array([[0.0, 1.0], [2.0, 0.0]]), np.array([1, 1])) == 0.5
    assert accuracy(np.zeros((0, 2)), np.array([])) == 0.0
    path = tmp_path / "metrics.csv"
    write_metrics_csv(path, [MetricRow(1, "train", 0.5, 0.75)])
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == METRICS_HEADER
    assert rows[1] == ["1", "train", "0.5", "0.75"]


def test_predict_batched_concatenates():
    out = predict_batched(lambda x: 2.0 * x, np.arange(10.0)[:, None], batch_size=3)
    assert np.array_equal(out[:, 0], 2.0 * np.arange(10.0))


# ─── LipKernel 학습 ─────────────────────────────────────────

def test_zero_learning_rate_keeps_parameters():
    cfg = make_config(arch="c(2,3,1).f(3)", lr=0.0, epochs=2, batch_size=5)
    ds = _toy_images()
    net0, _ = train(make_config(arch="c(2,3,1).f(3)", epochs=0), ds, log=_silent)
    before = {k: v.copy() for k, v in net0.params.items()}
    net, metrics = train(cfg, ds, network=net0, log=_silent)
    assert all(np.array_equal(before[k], net.params[k]) for k in before)
    losses = [m.loss for m in metrics if m.split == "train"]
    assert losses[0] == pytest.approx(losses[1], rel=1e-12)


def test_training_is_deterministic():
    cfg = make_config(arch="c(2,3,1).f(3)", lr=0.01, epochs=2, batch_size=4, seed=3)
    ds = _toy_images()
    _, a = train(cfg, ds, eval_set=ds, log=_silent)
    _, b = train(cfg, ds, eval_set=ds, log=_silent)
    assert a == b
    assert [m.split for m in a] == ["train", "test", "train", "test"]


def test_trained_network_stays_certified():
    cfg = make_config(arch="c(2,3,1).p(max,2,2).f(4).f(3)", rho=2.0, lr=0.05, epochs=2, batch_size=4)
    net, _ = train(cfg, _toy_images(), log=_silent)
    plain = export_plain(net)
    assert plain.certificate.verdict
    assert plain.rho == 2.0


def test_training_reduces_regression_loss():
    ds = cosine_dataset(64, seed=0)
    cfg = cosine_config(epochs=20, lr=0.05, batch_size=16)
    net, metrics = train(cfg, ds, log=_silent)
    assert metrics[-1].loss < metrics[0].loss
    assert mse_of(net.predict, ds) < metrics[0].loss


# ─── 기준선 ─────────────────────────────────────────────────

def test_spectral_projection_respects_budget():
    cfg = make_config(arch="c(2,3,1).f(4).f(3)", rho=1.0, lr=0.05, epochs=1, batch_size=4)
    plain, _ = spectral_baseline_train(cfg, _toy_images(), project=True, log=_silent)
    base = BaselineNetwork(cfg.arch, (1, 6, 6), rho=cfg.rho)
    for layer in plain.layers:
        if isinstance(layer, FcLayer):
            assert np.linalg.norm(layer.W, 2) <= base.budget * (1 + 1e-6)
    assert plain.rho == 1.0


def test_baseline_project_scales_down():
    base = BaselineNetwork("f(4).f(3)", (5,), rho=1.0)
    base.params["layer0.W"] *= 100.0
    base.project()
    assert base.layer_norm(0) <= base.budget * (1 + 1e-6)
    assert base.layer_norm(1) <= base.budget * (1 + 1e-6)


def test_vanilla_baseline_has_no_bound():
    cfg = make_config(arch="f(4).f(3)", epochs=1, batch_size=4)
    ds = Dataset(np.random.default_rng(0).standard_normal((8, 5)), np.arange(8) % 3)
    plain, metrics = spectral_baseline_train(cfg, ds, project=False, log=_silent)
    assert plain.rho is None
    assert len(metrics) == 1


# ─── PGD ────────────────────────────────────────────────────

def _linear_classifier():
    W = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]])
    return PlainNetwork(layers=(FcLayer(W, np.zeros(3)),), input_shape=(2,))


def test_pgd_zero_eps_is_identity(rng):
    x = rng.standard_normal((4, 2))
    adv = pgd_attack(_linear_classifier(), x, np.zeros(4, dtype=int), 0.0)
    assert np.array_equal(adv, x)
    assert adv is not x


def test_pgd_stays_in_ball(rng):
    x = rng.standard_normal((6, 2))
    eps = 0.3
    adv = pgd_attack(_linear_classifier(), x, np.arange(6) % 3, eps, steps=5)
    assert np.all(np.linalg.norm(adv - x, axis=1) <= eps + 1e-9)


def test_adversarial_accuracy_not_above_clean(rng):
    net = _linear_classifier()
    x = rng.standard_normal((40, 2))
    y = np.argmax(forward(net, x), axis=1)
    ds = Dataset(x, y)
    assert adversarial_accuracy(net, ds, 0.0) == 1.0
    assert adversarial_accuracy(net, ds, 0.5, steps=5) <= 1.0
    assert adversarial_accuracy(net, ds, 5.0, steps=10) < 1.0


def test_pgd_output_change_bounded_by_certificate(rng):
    cfg = make_config(arch="c(2,3,1).f(3)", rho=1.0, lr=0.05, epochs=1, batch_size=4)
    ds = _toy_images()
    plain = export_plain(train(cfg, ds, log=_silent)[0])
    eps = 0.5
    adv = pgd_attack(plain, ds.inputs, ds.targets, eps, steps=5)
    dy = np.linalg.norm(forward(plain, adv) - forward(plain, ds.inputs), axis=1)
    dx = np.linalg.norm((adv - ds.inputs).reshape(len(ds), -1), axis=1)
    assert np.all(dy <= plain.rho * dx * (1 + 1e-6))


# ─── 장시간 실험 ─────────────────────────────────────────────

def test_hand_cosine_network_fits():
    assert mse_of(lambda x: forward(hand_cosine_network(), x), cosine_dataset(200)) < 0.01


@pytest.mark.slow
def test_cosine_lipkernel_beats_spectral():
    ds = cosine_dataset(200, seed=0)
    cfg = cosine_config()
    net, _ = train(cfg, ds, log=_silent)
    spectral, _ = spectral_baseline_train(cfg, ds, project=True, log=_silent)
    assert mse_of(net.predict, ds) < mse_of(lambda x: forward(spectral, x), ds)


@pytest.mark.slow
def test_mnist_2c2f_accuracy():
    data_dir = env_config.data_dir()
    try:
        train_set = load_mnist(data_dir, "train")
        test_set = load_mnist(data_dir, "test")
    except DataNotFound:
        pytest.skip("MNIST 데이터 없음")
    cfg = make_config(arch=env_config.ARCH_2C2F, rho=2.0, lr=1e-3, epochs=3, batch_size=64)
    net, _ = train(cfg, subset(train_set, 10000, seed=0), log=_silent)
    plain = export_plain(net)
    assert plain.certificate.verdict
    logits = predict_batched(lambda x: forward(plain, x), test_set.inputs)
    assert accuracy(logits, test_set.targets) >= 0.90
    assert cert.empirical_lipschitz(plain, trials=2) <= 2.0 * (1 + 1e-6)
