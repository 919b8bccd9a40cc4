import numpy as np
import pytest

from shared import nn, statespace
from shared.errors import InvalidSpec, NonPowerOfTwo, ShapeMismatch, TooFewRows
from shared.layers import LipNetwork, init_params
from shared.nn import (
    Activation,
    ConvLayer,
    FcLayer,
    Flatten,
    FourierOrthLayer,
    PlainNetwork,
    export_plain,
    forward,
)
from shared.train import hand_cosine_network


def _lipnet(arch="c(4,4,2).c(8,4,2).f(16).f(10)", input_shape=(1, 16, 16), padding="same", std=0.2):
    net = LipNetwork(arch, input_shape, padding=padding)
    net.params = init_params(net.plans, seed=5, std=std)
    return net


# ─── 순전파 ─────────────────────────────────────────────────

def test_identity_conv_passthrough(rng):
    taps = np.eye(2)[None, None]
    net = PlainNetwork(layers=(ConvLayer(statespace.Kernel2D(taps)),), input_shape=(2, 4, 4))
    x = rng.standard_normal((3, 2, 4, 4))
    assert np.array_equal(forward(net, x), x)


def test_forward_single_sample_and_shape_check(rng):
    net = PlainNetwork(layers=(Flatten(), FcLayer(np.ones((1, 4)), np.zeros(1))), input_shape=(1, 2, 2))
    assert forward(net, np.ones((1, 2, 2))).shape == (1, 1)
    with pytest.raises(ShapeMismatch):
        forward(net, np.ones((2, 1, 3, 3)))


def test_hand_cosine_network():
    out = forward(hand_cosine_network(), np.zeros((1, 1)))
    assert out.item() == pytest.approx(2.0 * np.tanh(1.0) - 0.5, abs=1e-12)


def test_flatten_is_pixel_major():
    net = PlainNetwork(layers=(Flatten(),), input_shape=(2, 1, 2))
    x = np.array([[[[1.0, 2.0]], [[3.0, 4.0]]]])
    assert np.array_equal(forward(net, x), [[1.0, 3.0, 2.0, 4.0]])


# ─── 내보내기 ───────────────────────────────────────────────

@pytest.mark.parametrize("arch, input_shape", [
    ("c(4,4,2).c(8,4,2).f(16).f(10)", (1, 16, 16)),
    ("c(3,3,1).p(max,2,2).c(4,3,1).p(av,2,2).f(5)", (1, 8, 8)),
    ("c(3,3,1).p(av,2,2).f(4).f(2)", (2, 8)),
])
def test_export_matches_parameterized_forward(rng, arch, input_shape):
    net = _lipnet(arch, input_shape)
    plain = export_plain(net)
    x = rng.uniform(0.0, 1.0, (4, *input_shape))
    assert np.max(np.abs(forward(plain, x) - net.predict(x))) <= 1e-10
    assert plain.certificate.verdict
    assert plain.arch == net.arch


def test_export_is_deterministic():
    net = _lipnet()
    a, b = export_plain(net), export_plain(net)
    for la, lb in zip(a.layers, b.layers):
        if isinstance(la, ConvLayer):
            assert np.array_equal(la.kernel.taps, lb.kernel.taps)
            assert np.array_equal(la.kernel.bias, lb.kernel.bias)
        elif isinstance(la, FcLayer):
            assert np.array_equal(la.W, lb.W)
            assert np.array_equal(la.b, lb.b)


def test_exported_causal_conv_matches_state_space(rng):
    net = _lipnet("c(3,3,1).f(2)", (2, 6, 6), padding="causal")
    plain = export_plain(net)
    layers, _ = net.materialize()
    ss = layers[0].numpy().realization()
    conv = plain.layers[0]
    x = rng.standard_normal((2, 2, 6, 6))
    expected = statespace.ss_forward_2d(ss, x)
    assert np.max(np.abs(statespace.direct_conv2d(conv.kernel, x, "causal") - expected)) <= 1e-10


def test_export_layer_sequence():
    plain = export_plain(_lipnet("c(3,3,1).p(max,2,2).f(4).f(2)", (1, 6, 6)))
    kinds = [type(layer).__name__ for layer in plain.layers]
    assert kinds == ["ConvLayer", "Activation", "PoolLayer", "Flatten", "FcLayer", "Activation", "FcLayer"]
    assert plain.rho == 1.0


def test_jvp_vjp_adjoint(rng):
    plain = export_plain(_lipnet("c(3,3,1).p(av,2,2).f(4).f(3)", (1, 6, 6)))
    x = rng.uniform(0.0, 1.0, (1, 1, 6, 6))
    v = rng.standard_normal(x.shape)
    g = rng.standard_normal((1, 3))
    assert np.sum(nn.jvp(plain, x, v) * g) == pytest.approx(np.sum(v * nn.vjp(plain, x, g)), rel=1e-9, abs=1e-12)


def test_jvp_matches_finite_difference(rng):
    plain = export_plain(_lipnet("c(3,3,1).f(3)", (1, 5, 5)))
    plain = PlainNetwork(
        layers=tuple(Activation("tanh") if isinstance(l, Activation) else l for l in plain.layers),
        input_shape=plain.input_shape,
    )
    x = rng.uniform(0.0, 1.0, (1, 1, 5, 5))
    v = rng.standard_normal(x.shape)
    h = 1e-6
    fd = (forward(plain, x + h * v) - forward(plain, x - h * v)) / (2 * h)
    assert np.allclose(nn.jvp(plain, x, v), fd, atol=1e-6)


# ─── Fourier 기준선 ─────────────────────────────────────────

def test_fourier_zero_weights_pass_through(rng):
    layer = FourierOrthLayer(np.zeros((4, 4, 2, 2), dtype=complex))
    x = rng.standard_normal((3, 2, 4, 4))
    assert np.allclose(nn.fourier_orth_forward(layer, x), x, atol=1e-12)


def test_fourier_square_layer_preserves_norm(rng):
    layer = FourierOrthLayer.init(3, 3, 8, seed=2, std=0.5)
    x = rng.standard_normal((2, 3, 8, 8))
    y = nn.fourier_orth_forward(layer, x)
    assert y.shape == x.shape
    assert np.linalg.norm(y) == pytest.approx(np.linalg.norm(x), rel=1e-10)


def test_fourier_tall_layer_contracts(rng):
    layer = FourierOrthLayer.init(4, 2, 8, seed=3, std=0.5)
    x = rng.standard_normal((1, 4, 8, 8))
    y = nn.fourier_orth_forward(layer, x)
    assert y.shape == (1, 2, 8, 8)
    assert np.linalg.norm(y) <= np.linalg.norm(x) * (1 + 1e-12)


def test_cayley_complex_orthonormal(rng):
    G = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
    U = nn.cayley_complex(G)
    assert np.allclose(U.conj().T @ U, np.eye(3), atol=1e-12)
    with pytest.raises(TooFewRows):
        nn.cayley_complex(np.zeros((2, 3), dtype=complex))


def test_fourier_init_errors():
    with pytest.raises(NonPowerOfTwo):
        FourierOrthLayer.init(2, 2, 6)
    with pytest.raises(TooFewRows):
        FourierOrthLayer.init(2, 3, 4)


def test_fourier_forward_errors(rng):
    layer = FourierOrthLayer.init(2, 2, 4)
    with pytest.raises(NonPowerOfTwo):
        nn.fourier_orth_forward(layer, rng.standard_normal((1, 2, 6, 6)))
    with pytest.raises(ShapeMismatch):
        nn.fourier_orth_forward(layer, rng.standard_normal((1, 3, 4, 4)))


# ─── 벤치마크 ───────────────────────────────────────────────

@pytest.mark.parametrize("kwargs", [
    {"channels": 0, "image": 8, "kernel": 3},
    {"channels": 2, "image": 8, "kernel": 0},
    {"channels": 2, "image": 8, "kernel": 3, "engine": "gpu"},
])
def test_make_bench_spec_rejects(kwargs):
    with pytest.raises(InvalidSpec):
        nn.make_bench_spec(**kwargs)


def test_bench_times_rejects_bad_counts():
    spec = nn.make_bench_spec(channels=2, image=8, kernel=3)
    with pytest.raises(InvalidSpec):
        nn.bench_times(spec, reps=0)
    with pytest.raises(InvalidSpec):
        nn.bench_times(spec, reps=1, warmup=-1)


@pytest.mark.parametrize("engine", nn.ENGINES)
def test_bench_inference_small(engine):
    spec = nn.make_bench_spec(channels=2, image=8, kernel=3, engine=engine)
    result = nn.bench_inference(spec, reps=2, warmup=0)
    assert result.reps == 2
    assert result.avg_ms >= 0.0
    row = result.row()
    assert len(row) == len(nn.CSV_HEADER)
    assert row[0] == engine


def test_run_sweep_unknown():
    with pytest.raises(InvalidSpec):
        nn.run_sweep("nope")


def test_machine_metadata_keys():
    assert {"platform", "python", "numpy"} <= set(nn.machine_metadata())


@pytest.mark.slow
def test_kernel_engine_faster_than_fourier():
    kernel = nn.bench_inference(nn.make_bench_spec(channels=32, image=32, kernel=3), reps=10)
    fourier = nn.bench_inference(nn.make_bench_spec(channels=32, image=32, kernel=3, engine="fourier"), reps=10)
    assert fourier.avg_ms >= 10.0 * kernel.avg_ms
