from dataclasses import replace

import numpy as np
import pytest

from shared import cert, statespace
from shared.arch import parse_arch, plan
from shared.errors import ArchShapeError, ChainMismatch, InvalidGeometry, ShapeMismatch
from shared.layers import LipNetwork, init_params
from shared.nn import FcLayer, PlainNetwork, export_plain, forward


def _certified_net(rho=1.0, arch="c(2,3,1).f(4).f(2)", input_shape=(1, 6, 6), seed=0, activation="relu"):
    net = LipNetwork(arch, input_shape, rho=rho, seed=seed, activation=activation)
    net.params = init_params(net.plans, seed=seed, std=0.3)
    return net


# ─── 풀링 gain ───────────────────────────────────────────────

def test_pooling_gain_values():
    assert cert.pooling_gain("avg", 2, 2, (8, 8)) == pytest.approx(0.5, rel=1e-6)
    assert cert.pooling_gain("av", 2, 2, (8, 8)) == pytest.approx(0.5, rel=1e-6)
    assert cert.pooling_gain("max", 2, 2, (8, 8)) == 1.0
    assert cert.pooling_gain("max", 3, 2, (8, 8)) == pytest.approx(2.0)


def test_pooling_gain_overlapping_avg_matches_dense_operator():
    op = statespace.pool_dense_operator(8, 8, (3, 3), (2, 2))
    expected = np.linalg.svd(op, compute_uv=False)[0]
    assert cert.pooling_gain("avg", 3, 2, (8, 8)) == pytest.approx(expected, rel=1e-6)


@pytest.mark.parametrize("window, stride, size", [(1, 2, (8, 8)), (9, 1, (8, 8))])
def test_pooling_gain_invalid_geometry(window, stride, size):
    with pytest.raises(InvalidGeometry):
        cert.pooling_gain("avg", window, stride, size)


def test_pooling_gain_unknown_kind():
    with pytest.raises(InvalidGeometry):
        cert.pooling_gain("median", 2, 2, (4, 4))


# ─── LMI 조립 ───────────────────────────────────────────────

def test_lmi_fc_zero_weight():
    M = cert.lmi_fc(np.zeros((2, 3)), np.ones(2), np.eye(3), np.eye(2))
    assert np.allclose(M, np.diag([1.0, 1.0, 1.0, 1.0, 1.0]))


def test_lmi_fc_shape_checked():
    with pytest.raises(ShapeMismatch):
        cert.lmi_fc(np.zeros((2, 3)), np.ones(2), np.eye(4), np.eye(2))


def test_lmi_fc_expanded_metric():
    W = np.zeros((1, 4))
    M = cert.lmi_fc(W, np.ones(1), 2.0 * np.eye(2), np.eye(1), expand=2)
    assert np.allclose(M[:4, :4], 2.0 * np.eye(4))


def test_lmi_last_boundary():
    assert cert.lmi_last(np.eye(2), np.eye(2), np.eye(2)) == pytest.approx(np.zeros((2, 2)))
    assert np.min(np.linalg.eigvalsh(cert.lmi_last(1.01 * np.eye(2), np.eye(2), np.eye(2)))) < 0


def test_lmi_conv_detects_perturbed_kernel(rng):
    net = _certified_net(arch="c(2,3,1).f(2)", input_shape=(1, 5, 5))
    layers, _ = net.materialize()
    m = layers[0].numpy()
    ss = m.realization()
    X_in = net.L0.T @ net.L0
    feasible = cert.lmi_conv(ss, m.P, m.lam, X_in, m.gain.X)
    assert np.min(np.linalg.eigvalsh(feasible)) >= -1e-8 * max(1.0, np.linalg.norm(feasible))

    broken = replace(ss, D=ss.D + 10.0 * rng.standard_normal(ss.D.shape))
    assert np.min(np.linalg.eigvalsh(cert.lmi_conv(broken, m.P, m.lam, X_in, m.gain.X))) < 0


# ─── 네트워크 인증 ───────────────────────────────────────────

@pytest.mark.parametrize("arch, input_shape", [
    ("c(2,3,1).f(4).f(2)", (1, 6, 6)),
    ("c(2,4,2).c(3,3,1).p(av,2,2).f(3)", (1, 8, 8)),
    ("c(2,3,1).p(max,2,2).f(4).f(2)", (1, 6, 6)),
    ("c(3,3,1).p(max,2,2).f(2)", (2, 8)),
    ("c(3,3,2).p(av,2,2).f(2)", (2, 8)),
    ("f(5).f(3)", (4,)),
])
def test_certify_network_random_parameters(arch, input_shape):
    for rho in (1.0, 2.0, 4.0):
        net = _certified_net(rho, arch, input_shape)
        layers, _ = net.materialize()
        result = cert.certify_network(layers, net.L0, net.LQ)
        assert result.verdict, result.report()
        assert len(result.records) == len(net.plans)
        assert result.rho == rho


def test_certify_empty_network():
    result = cert.certify_network([], 2.0 * np.eye(3), np.eye(3))
    assert result.verdict
    assert result.rho == 2.0
    assert result.min_eig == pytest.approx(3.0)

    shrinking = cert.certify_network([], 0.5 * np.eye(3), np.eye(3))
    assert not shrinking.verdict


def test_certify_network_chain_mismatch():
    net = LipNetwork("f(3).f(2)", (4,))
    layers, _ = net.materialize()
    with pytest.raises(ChainMismatch):
        cert.certify_network(layers[1:], net.L0, net.LQ)


def test_certificate_report_and_key_values():
    layers, _ = _certified_net().materialize()
    result = cert.certify_network(layers, np.eye(1), np.eye(2))
    report = result.report()
    assert "CERTIFIED" in report
    kv = dict(line.split("=", 1) for line in result.key_values().splitlines())
    assert kv["verdict"] == "CERTIFIED"
    assert kv["layers"] == "3"
    assert kv["rho"] == "1.0"
    assert float(kv["layer0.min_eig"]) >= -1e-8


def test_metric_rho_and_bound():
    assert cert.metric_rho(3.0 * np.eye(2), np.eye(4)) == 3.0
    assert cert.metric_rho(np.diag([1.0, 2.0]), np.eye(4)) is None
    assert cert.metric_rho(np.eye(2), 2.0 * np.eye(4)) is None
    assert cert.lipschitz_bound(np.diag([1.0, 3.0]), 0.5 * np.eye(2)) == pytest.approx(6.0)


# ─── 경험적 하한 ─────────────────────────────────────────────

def test_empirical_lipschitz_linear_map(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    W = Q @ np.diag([3.0, 1.0, 0.5]) @ Q.T
    net = PlainNetwork(layers=(FcLayer(W, np.zeros(3)),), input_shape=(3,))
    assert cert.empirical_lipschitz(net, trials=2, iters=50, ascent_steps=5) == pytest.approx(3.0, rel=1e-2)


def test_empirical_lipschitz_identity_network():
    net = PlainNetwork(layers=(), input_shape=(3,))
    assert cert.empirical_lipschitz(net, trials=1, iters=5, ascent_steps=3) == pytest.approx(1.0, rel=1e-9)


def _random_arch(rng):
    """합성곱(+풀링)과 전결합을 섞은 임의 아키텍처 (plan 을 통과할 때까지 다시 뽑음)"""
    dims = int(rng.choice([1, 2]))
    channels = int(rng.integers(1, 3))
    input_shape = (channels, 8, 8) if dims == 2 else (channels, 8)
    while True:
        parts = []
        for _ in range(int(rng.integers(1, 3))):
            s = int(rng.choice([1, 2]))
            parts.append(f"c({int(rng.integers(1, 4))},{int(rng.integers(s + 1, 4))},{s})")
            if rng.random() < 0.5:
                parts.append(f"p({rng.choice(['av', 'max'])},2,2)")
        if rng.random() < 0.5:
            parts.append(f"f({int(rng.integers(2, 6))})")
        parts.append(f"f({int(rng.integers(1, 4))})")
        arch = ".".join(parts)
        try:
            plan(parse_arch(arch), input_shape)
        except ArchShapeError:
            continue
        return arch, input_shape


def _pair_gains(plain, rng, pairs, batch=1000):
    gains = []
    for start in range(0, pairs, batch):
        n = min(batch, pairs - start)
        x = rng.uniform(0.0, 1.0, (n, *plain.input_shape))
        y = x + rng.choice([1e-3, 0.1, 1.0]) * rng.standard_normal(x.shape)
        out = np.linalg.norm((forward(plain, x) - forward(plain, y)).reshape(n, -1), axis=1)
        dist = np.linalg.norm((x - y).reshape(n, -1), axis=1)
        gains.append(out / dist)
    return np.concatenate(gains)


@pytest.mark.parametrize("networks, pairs", [
    (4, 1000),
    pytest.param(20, 10_000, marks=pytest.mark.slow),
])
@pytest.mark.parametrize("rho", [1.0, 2.0, 4.0])
def test_certified_random_networks_respect_bound(rho, networks, pairs):
    for i in range(networks):
        rng = np.random.default_rng(100 + i)
        arch, input_shape = _random_arch(rng)
        activation = "tanh" if i % 2 else "relu"
        plain = export_plain(_certified_net(rho, arch, input_shape, seed=i, activation=activation))
        assert plain.certificate.verdict, (arch, plain.certificate.report())

        gains = _pair_gains(plain, rng, pairs)
        assert gains.max() <= rho * (1 + 1e-6), arch
        lb = cert.empirical_lipschitz(plain, trials=1, iters=10, ascent_steps=5, seed=i)
        assert lb <= rho * (1 + 1e-6), arch


# ─── 마진 / 인증 정확도 ───────────────────────────────────────

def test_logit_margins():
    logits = np.array([[3.0, 0.0, 1.0], [0.0, 2.0, 2.5]])
    assert np.allclose(cert.logit_margins(logits, np.array([0, 1])), [2.0, -0.5])


def test_certified_accuracy():
    margins = np.array([3.0, 1.0])
    assert cert.certified_accuracy(margins, 1.0, 1.0) == 0.5
    assert cert.certified_accuracy(margins, 1.0, 0.0) == 1.0
    assert cert.certified_accuracy(margins, 0.5, 1.0) == 1.0
    assert cert.certified_accuracy(np.array([]), 1.0, 1.0) == 0.0
