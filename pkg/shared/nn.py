"""
표준형(커널 도메인) 추론 엔진 / Fourier 직교 기준선 / 추론 벤치마크

export_plain 은 φ-네트워크를 한 번 파라미터화해서 커널 / 가중치 / 편향만 남기고,
승수(Λ, P)는 인증서(Certificate)로만 보존합니다.
"""

import platform
import time
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from shared import autodiff as ad
from shared import cert, linalg, statespace
from shared.errors import InvalidSpec, NonPowerOfTwo, ShapeMismatch, TooFewRows


# ─── 레이어 기술자 ───────────────────────────────────────────

@dataclass(frozen=True)
class ConvLayer:
    kernel: statespace.Kernel2D
    padding: str = "same"


@dataclass(frozen=True)
class FcLayer:
    W: np.ndarray
    b: np.ndarray


@dataclass(frozen=True)
class Activation:
    kind: str  # "relu" | "tanh" | "identity"


@dataclass(frozen=True)
class PoolLayer:
    kind: str  # "avg" | "max"
    window: Tuple[int, int]
    stride: Tuple[int, int]


@dataclass(frozen=True)
class Flatten:
    """(B, C, H, W) → (B, H·W·C)"""


Layer = Union[ConvLayer, FcLayer, Activation, PoolLayer, Flatten]


@dataclass(frozen=True)
class PlainNetwork:
    """
    내보낸 표준형 네트워크 (읽기 전용).

    input_shape: (C, N1, N2) | (C, N) | (D,)
    1-D 신호는 내부적으로 높이 1 인 이미지로 평가합니다.
    """

    layers: Tuple[Layer, ...]
    input_shape: Tuple[int, ...]
    rho: Optional[float] = None
    L0: Optional[np.ndarray] = None
    LQ: Optional[np.ndarray] = None
    certificate: Optional[cert.Certificate] = None
    arch: Optional[str] = None


# ─── 순전파 ─────────────────────────────────────────────────

def _activate(h: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(h, 0.0)
    if kind == "tanh":
        return np.tanh(h)
    if kind in ("identity", "none"):
        return h
    raise ShapeMismatch(f"지원하지 않는 활성함수: {kind}")


def _activate_slope(pre: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (pre > 0).astype(float)
    if kind == "tanh":
        return 1.0 - np.tanh(pre) ** 2
    return np.ones_like(pre)


def _to_internal(net: PlainNetwork, x: np.ndarray) -> np.ndarray:
    """배치 차원 추가 + 1-D 신호를 (B, C, 1, N) 로"""
    x = np.asarray(x, dtype=float)
    shape = tuple(net.input_shape)
    if x.shape == shape:
        x = x[None]
    elif x.shape[1:] != shape:
        raise ShapeMismatch(f"입력 shape {x.shape} vs 네트워크 입력 {shape}")
    if len(shape) == 2:
        x = x.reshape(x.shape[0], shape[0], 1, shape[1])
    return x


def forward(net: PlainNetwork, batch: np.ndarray) -> np.ndarray:
    """
    레이어 순서대로 평가 (합성곱은 im2col 고속 경로).

    Raises:
        ShapeMismatch: 입력 shape 이 네트워크 입력과 다름
    """
    h = _to_internal(net, batch)
    for layer in net.layers:
        if isinstance(layer, ConvLayer):
            h = statespace.direct_conv2d(layer.kernel, h, layer.padding)
        elif isinstance(layer, Activation):
            h = _activate(h, layer.kind)
        elif isinstance(layer, PoolLayer):
            h, _ = statespace.pool2d(h, layer.kind, layer.window, layer.stride)
        elif isinstance(layer, Flatten):
            h = h.transpose(0, 2, 3, 1).reshape(h.shape[0], -1)
        else:
            h = h @ layer.W.T + layer.b
    return h


def forward_var(net: PlainNetwork, x: ad.Var) -> ad.Var:
    """autodiff 순전파 (공격 / Lipschitz 하한 추정용)"""
    tape = ad.tape_of(x)
    h = ad.lift(x, tape)
    if len(net.input_shape) == 2:
        h = ad.reshape(h, (h.shape[0], net.input_shape[0], 1, net.input_shape[1]))
    for layer in net.layers:
        if isinstance(layer, ConvLayer):
            k = layer.kernel
            h = ad.conv2d(h, k.taps, tuple(k.stride), layer.padding)
            h = ad.add_bias(h, k.bias_or_zero(), axis=1)
        elif isinstance(layer, Activation):
            h = ad.activation(h, layer.kind)
        elif isinstance(layer, PoolLayer):
            h = ad.pool2d(h, layer.kind, layer.window, layer.stride)
        elif isinstance(layer, Flatten):
            h = ad.flatten_pixels(h)
        else:
            h = ad.add_bias(h @ layer.W.T, layer.b, axis=1)
    return h


def jvp(net: PlainNetwork, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """자코비안-벡터 곱 J(x)·v (순방향 전파, relu 는 0 에서 기울기 0)"""
    h = _to_internal(net, x)
    dh = np.asarray(v, dtype=float).reshape(h.shape)
    for layer in net.layers:
        if isinstance(layer, ConvLayer):
            linear = statespace.Kernel2D(layer.kernel.taps, layer.kernel.stride, None)
            h = statespace.direct_conv2d(layer.kernel, h, layer.padding)
            dh = statespace.direct_conv2d(linear, dh, layer.padding, with_bias=False)
        elif isinstance(layer, Activation):
            dh = dh * _activate_slope(h, layer.kind)
            h = _activate(h, layer.kind)
        elif isinstance(layer, PoolLayer):
            h, arg = statespace.pool2d(h, layer.kind, layer.window, layer.stride)
            dh = statespace.pool2d_tangent(dh, layer.kind, layer.window, layer.stride, arg)
        elif isinstance(layer, Flatten):
            h = h.transpose(0, 2, 3, 1).reshape(h.shape[0], -1)
            dh = dh.transpose(0, 2, 3, 1).reshape(dh.shape[0], -1)
        else:
            h = h @ layer.W.T + layer.b
            dh = dh @ layer.W.T
    return dh


def vjp(net: PlainNetwork, x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """벡터-자코비안 곱 J(x)ᵀ·g (입력과 같은 shape)"""
    x = np.asarray(x, dtype=float)
    tape = ad.Tape()
    xv = tape.leaf(x)
    out = forward_var(net, xv)
    loss = ad.sum(out * np.asarray(g, dtype=float).reshape(out.shape))
    return tape.backward(loss)[xv]


# ─── 내보내기 ───────────────────────────────────────────────

def export_plain(lipnet, tol_scale: float = cert.TOL_SCALE) -> PlainNetwork:
    """
    φ-네트워크(layers.LipNetwork) → 표준형 네트워크 + 인증서.

    Raises:
        NotPositiveDefinite 등: 파라미터화 중 발생한 예외를 그대로 전파
    """
    materialized, _ = lipnet.materialize()
    mats = [m.numpy() for m in materialized]

    out: List[Layer] = []
    spatial = len(lipnet.input_shape) > 1
    for m in mats:
        if m.kind in ("conv2d", "conv1d"):
            kernel = statespace.Kernel2D(m.weight, tuple(m.stride), m.bias)
            out.append(ConvLayer(kernel, lipnet.padding))
            out.append(Activation(lipnet.activation))
            if m.pool is not None:
                out.append(PoolLayer(m.pool.kind, tuple(m.pool.window), tuple(m.pool.stride)))
            continue
        if spatial:
            out.append(Flatten())
            spatial = False
        out.append(FcLayer(m.weight, m.bias))
        if m.kind == "fc":
            out.append(Activation(lipnet.activation))

    certificate = cert.certify_network(mats, lipnet.L0, lipnet.LQ, tol_scale)
    return PlainNetwork(
        layers=tuple(out),
        input_shape=tuple(lipnet.input_shape),
        rho=cert.metric_rho(lipnet.L0, lipnet.LQ),
        L0=np.array(lipnet.L0),
        LQ=np.array(lipnet.LQ),
        certificate=certificate,
        arch=lipnet.arch,
    )


# ─── Fourier 도메인 직교 기준선 ───────────────────────────────

@dataclass(frozen=True)
class FourierOrthLayer:
    """
    주파수별 복소 파라미터 (N1, N2, c_in, c_out), 순환 패딩.
    각 주파수에서 Cayley 로 열 정규직교 Ũ (c_in × c_out) 를 만들고 Ũᴴ 를 적용합니다.
    """

    weight: np.ndarray
    bias: Optional[np.ndarray] = None

    @property
    def c_in(self) -> int:
        return self.weight.shape[2]

    @property
    def c_out(self) -> int:
        return self.weight.shape[3]

    @property
    def size(self) -> Tuple[int, int]:
        return self.weight.shape[0], self.weight.shape[1]

    @classmethod
    def init(cls, c_in: int, c_out: int, size: int, seed: int = 0, std: float = 0.1) -> "FourierOrthLayer":
        """
        Raises:
            NonPowerOfTwo: size 가 2의 거듭제곱이 아님
            TooFewRows: c_out > c_in
        """
        if not linalg.is_power_of_two(size):
            raise NonPowerOfTwo(f"이미지 크기 {size}는 2의 거듭제곱이어야 합니다")
        if c_out > c_in:
            raise TooFewRows(f"Fourier 레이어: c_out {c_out} > c_in {c_in}")
        rng = np.random.default_rng(seed)
        shape = (size, size, c_in, c_out)
        weight = std * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        return cls(weight)


def _conj_symmetric(w: np.ndarray) -> np.ndarray:
    """G_f = ½(W_f + conj(W_{−f})) → 실수 출력"""
    w_neg = np.roll(np.flip(w, axis=(0, 1)), 1, axis=(0, 1))
    return 0.5 * (w + np.conj(w_neg))


def cayley_complex(G: np.ndarray) -> np.ndarray:
    """G (..., p, c) → Ũ (..., p, c), ŨᴴŨ = I"""
    p, c = G.shape[-2], G.shape[-1]
    if p < c:
        raise TooFewRows(f"cayley_complex 입력 {p}x{c}: 행 수가 열 수보다 작습니다")
    Y, Z = G[..., :c, :], G[..., c:, :]
    eye = np.eye(c)
    M = Y - np.conj(np.swapaxes(Y, -1, -2)) + np.conj(np.swapaxes(Z, -1, -2)) @ Z
    U = np.linalg.solve(eye + M, eye - M)
    Zh = np.conj(np.swapaxes(Z, -1, -2))
    V = 2.0 * np.conj(np.swapaxes(np.linalg.solve(np.conj(np.swapaxes(eye + M, -1, -2)), Zh), -1, -2))
    return np.concatenate([U, V], axis=-2)


def fourier_orth_forward(layer: FourierOrthLayer, batch: np.ndarray) -> np.ndarray:
    """
    FFT → 주파수별 Ũᴴ 곱 → 역 FFT, 실수부 반환.

    Raises:
        NonPowerOfTwo: 이미지 크기가 2의 거듭제곱이 아님
        ShapeMismatch: 채널 / 이미지 크기 불일치
    """
    x = np.asarray(batch, dtype=float)
    single = x.ndim == 3
    if single:
        x = x[None]
    X = linalg.fft2(x)
    if x.shape[1] != layer.c_in or x.shape[2:] != layer.size:
        raise ShapeMismatch(f"입력 {x.shape[1:]} vs Fourier 레이어 ({layer.c_in}, {layer.size})")

    Q = np.conj(np.swapaxes(cayley_complex(_conj_symmetric(layer.weight)), -1, -2))  # (N1, N2, c_out, c_in)
    Xf = X.transpose(2, 3, 1, 0)  # (N1, N2, c_in, B)
    Yf = (Q @ Xf).transpose(3, 2, 0, 1)
    y = np.real(linalg.fft2(Yf, inverse=True))
    if layer.bias is not None:
        y = y + np.asarray(layer.bias)[None, :, None, None]
    return y[0] if single else y


# ─── 벤치마크 ───────────────────────────────────────────────

ENGINES = ("kernel", "fourier")
CSV_HEADER = ["engine", "channels", "image", "kernel", "avg_ms", "std_ms", "reps"]

SWEEPS: Dict[str, List[Tuple[int, int, int]]] = {
    "channels": [(c, 32, 3) for c in (2, 4, 8, 16, 32, 64)],
    "image": [(32, n, 3) for n in (8, 16, 32, 64)],
    "kernel": [(32, 32, k) for k in (1, 3, 5, 7, 9)],
    "point": [(32, 32, 3)],
}


class BenchSpec(BaseModel):
    channels: int = Field(ge=1)
    image: int = Field(ge=1)
    kernel: int = Field(ge=1)
    engine: Literal["kernel", "fourier"] = "kernel"


class BenchResult(BaseModel):
    engine: str
    channels: int
    image: int
    kernel: int
    avg_ms: float
    std_ms: float
    reps: int

    def row(self) -> List[str]:
        return [self.engine, str(self.channels), str(self.image), str(self.kernel),
                f"{self.avg_ms:.6f}", f"{self.std_ms:.6f}", str(self.reps)]


def make_bench_spec(**kwargs) -> BenchSpec:
    """
    Raises:
        InvalidSpec: 필드 검증 실패
    """
    try:
        return BenchSpec(**kwargs)
    except ValidationError as e:
        raise InvalidSpec(f"벤치마크 설정 오류: {e.errors()[0]['loc']} {e.errors()[0]['msg']}") from e


def _engine_fn(spec: BenchSpec, seed: int):
    rng = np.random.default_rng(seed)
    c, n, k = spec.channels, spec.image, spec.kernel
    x = rng.standard_normal((1, c, n, n))
    if spec.engine == "kernel":
        kernel = statespace.Kernel2D(0.1 * rng.standard_normal((k, k, c, c)), (1, 1), np.zeros(c))
        return lambda: statespace.direct_conv2d(kernel, x, "same")
    layer = FourierOrthLayer.init(c, c, n, seed=seed)
    return lambda: fourier_orth_forward(layer, x)


def bench_times(spec: BenchSpec, reps: int, warmup: int = 2, seed: int = 0) -> np.ndarray:
    """
    Returns:
        반복별 경과 시간 (ms)

    Raises:
        InvalidSpec: reps < 1 또는 warmup < 0
    """
    if reps < 1:
        raise InvalidSpec(f"reps는 1 이상이어야 합니다 (받음: {reps})")
    if warmup < 0:
        raise InvalidSpec(f"warmup은 0 이상이어야 합니다 (받음: {warmup})")
    fn = _engine_fn(spec, seed)
    for _ in range(warmup):
        fn()
    times = np.empty(reps)
    for i in range(reps):
        start = time.perf_counter()
        fn()
        times[i] = (time.perf_counter() - start) * 1000.0
    return times


def bench_inference(spec: BenchSpec, reps: int, warmup: int = 2, seed: int = 0) -> BenchResult:
    """단일 순전파 평균 / 표준편차 (ms)"""
    times = bench_times(spec, reps, warmup, seed)
    return BenchResult(engine=spec.engine, channels=spec.channels, image=spec.image, kernel=spec.kernel,
                       avg_ms=float(times.mean()), std_ms=float(times.std()), reps=reps)


def run_sweep(
    sweep: str,
    engines: Sequence[str] = ENGINES,
    reps: int = 10,
    warmup: int = 2,
    inits: int = 3,
    seed: int = 0,
) -> List[BenchResult]:
    """
    스윕 지점 × 엔진별 결과 (inits 개 랜덤 초기화에 걸친 시간을 합쳐 평균).

    Raises:
        InvalidSpec: 알 수 없는 sweep / engine
    """
    if sweep not in SWEEPS:
        raise InvalidSpec(f"알 수 없는 sweep: {sweep} (가능: {', '.join(SWEEPS)})")
    results = []
    for channels, image, kernel in SWEEPS[sweep]:
        for engine in engines:
            spec = make_bench_spec(channels=channels, image=image, kernel=kernel, engine=engine)
            times = np.concatenate([bench_times(spec, reps, warmup, seed + i) for i in range(max(inits, 1))])
            results.append(BenchResult(engine=engine, channels=channels, image=image, kernel=kernel,
                                       avg_ms=float(times.mean()), std_ms=float(times.std()), reps=times.size))
    return results


def machine_metadata() -> Dict[str, str]:
    return {
        "platform": platform.platform(),
        "processor": platform.processor() or "unknown",
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
