"""
합성곱 커널 ↔ Roesser 상태공간 실현

- realize_1d / realize_2d: 커널 탭을 (A, B, C, D) 블록에 배치
- kernel_from_realization_*: 역변환 (고정 블록 구조 검증 포함)
- ss_forward_*: 상태공간 점화식으로 직접 실행 (영 초기조건)
- direct_conv*: 중첩합 / im2col 기준 구현 (causal, same)
- space_to_depth, repack/unpack_strided_kernel: stride 합성곱을 stride 1로 변환
- pool2d: 평균/최대 풀링 (autodiff, nn 공용)

이미지 배열 규약: (B, C, N1, N2), 단일 이미지는 (C, N1, N2).
커널 탭 규약: taps[t1, t2] ∈ ℝ^{c_out×c_in}, shape (r1+1, r2+1, c_out, c_in).
출력 y[i] = Σ_t K[t] u[s(i+1)−1−t] + b  (0-based, 출력 길이 ⌊N/s⌋)
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from shared import linalg
from shared.errors import (
    ChannelMismatch,
    InvalidGeometry,
    NotDivisible,
    StridedInput,
    StructureViolation,
)

STRUCTURE_TOL = 1e-12

Pair = Tuple[int, int]


def _pair(v: Union[int, Tuple[int, int]]) -> Pair:
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


# ─── 커널 / 실현 타입 ───────────────────────────────────────

@dataclass(frozen=True)
class Kernel1D:
    """taps: (r+1, c_out, c_in)"""

    taps: np.ndarray
    stride: int = 1
    bias: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.taps.ndim != 3:
            raise ChannelMismatch(f"1-D 커널 taps는 3차원이어야 합니다: {self.taps.shape}")
        if self.stride < 1:
            raise StridedInput(f"stride는 1 이상이어야 합니다: {self.stride}")

    @property
    def r(self) -> int:
        return self.taps.shape[0] - 1

    @property
    def c_out(self) -> int:
        return self.taps.shape[1]

    @property
    def c_in(self) -> int:
        return self.taps.shape[2]

    def bias_or_zero(self) -> np.ndarray:
        return np.zeros(self.c_out) if self.bias is None else np.asarray(self.bias, dtype=float)


@dataclass(frozen=True)
class Kernel2D:
    """taps: (r1+1, r2+1, c_out, c_in)"""

    taps: np.ndarray
    stride: Pair = (1, 1)
    bias: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.taps.ndim != 4:
            raise ChannelMismatch(f"2-D 커널 taps는 4차원이어야 합니다: {self.taps.shape}")
        if min(self.stride) < 1:
            raise StridedInput(f"stride는 1 이상이어야 합니다: {self.stride}")

    @property
    def r1(self) -> int:
        return self.taps.shape[0] - 1

    @property
    def r2(self) -> int:
        return self.taps.shape[1] - 1

    @property
    def c_out(self) -> int:
        return self.taps.shape[2]

    @property
    def c_in(self) -> int:
        return self.taps.shape[3]

    def bias_or_zero(self) -> np.ndarray:
        return np.zeros(self.c_out) if self.bias is None else np.asarray(self.bias, dtype=float)


@dataclass(frozen=True)
class Roesser1D:
    """x[i+1] = A x[i] + B u[i],  y[i] = C x[i] + D u[i] + b"""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    bias: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class Roesser2D:
    """
    x1[i+1, j] = A11 x1 + A12 x2 + B1 u
    x2[i, j+1] = A21 x1 + A22 x2 + B2 u
    y[i, j]    = C1 x1 + C2 x2 + D u + b
    """

    A11: np.ndarray
    A12: np.ndarray
    A22: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    D: np.ndarray
    bias: np.ndarray
    A21: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.A21 is None:
            object.__setattr__(self, "A21", np.zeros((self.A22.shape[0], self.A11.shape[0])))

    @property
    def n1(self) -> int:
        return self.A11.shape[0]

    @property
    def n2(self) -> int:
        return self.A22.shape[0]

    @property
    def A(self) -> np.ndarray:
        return np.block([[self.A11, self.A12], [self.A21, self.A22]])

    @property
    def B(self) -> np.ndarray:
        return np.vstack([self.B1, self.B2])

    @property
    def C(self) -> np.ndarray:
        return np.hstack([self.C1, self.C2])


# ─── 고정 구조 블록 ─────────────────────────────────────────

def shift_down(blocks: int, c: int) -> np.ndarray:
    """[[0, 0], [I_{c(blocks−1)}, 0]] (A11 누적 시프트)"""
    return np.kron(np.eye(blocks, k=-1), np.eye(c))


def shift_up(blocks: int, c: int) -> np.ndarray:
    """[[0, I_{c(blocks−1)}], [0, 0]] (A22, 1-D A)"""
    return np.kron(np.eye(blocks, k=1), np.eye(c))


def last_block_injector(blocks: int, c: int) -> np.ndarray:
    """[0; …; 0; I_c] (B2, 1-D B)"""
    out = np.zeros((blocks * c, c))
    if blocks:
        out[-c:] = np.eye(c)
    return out


def last_block_reader(blocks: int, c: int) -> np.ndarray:
    """[0 … 0 I_c] (C1)"""
    return last_block_injector(blocks, c).T


# ─── 2-D 실현 ───────────────────────────────────────────────

def realize_2d(kernel: Kernel2D) -> Roesser2D:
    """
    Roesser 실현. x2 블록 m 은 u[i, j−(r2−m)] 을 저장합니다.

    Raises:
        StridedInput: stride ≠ (1, 1) (space_to_depth + repack_strided_kernel 먼저)
    """
    if tuple(kernel.stride) != (1, 1):
        raise StridedInput(f"stride {kernel.stride} 커널은 직접 실현할 수 없습니다")

    K = np.asarray(kernel.taps, dtype=float)
    r1, r2, c, cm = kernel.r1, kernel.r2, kernel.c_out, kernel.c_in

    A12 = np.zeros((c * r1, cm * r2))
    B1 = np.zeros((c * r1, cm))
    for k in range(r1):
        B1[k * c:(k + 1) * c] = K[r1 - k, 0]
        for m in range(r2):
            A12[k * c:(k + 1) * c, m * cm:(m + 1) * cm] = K[r1 - k, r2 - m]

    C2 = np.zeros((c, cm * r2))
    for m in range(r2):
        C2[:, m * cm:(m + 1) * cm] = K[0, r2 - m]

    return Roesser2D(
        A11=shift_down(r1, c),
        A12=A12,
        A22=shift_up(r2, cm),
        B1=B1,
        B2=last_block_injector(r2, cm),
        C1=last_block_reader(r1, c),
        C2=C2,
        D=K[0, 0].copy(),
        bias=kernel.bias_or_zero(),
    )


def _check_block(name: str, actual: np.ndarray, expected: np.ndarray) -> None:
    if actual.shape != expected.shape or (actual.size and np.max(np.abs(actual - expected)) > STRUCTURE_TOL):
        raise StructureViolation(f"{name} 블록이 고정 구조와 다릅니다")


def taps_from_blocks_2d(A12: np.ndarray, B1: np.ndarray, C2: np.ndarray, D: np.ndarray,
                        r1: int, r2: int) -> np.ndarray:
    """자유 블록 → 탭. A12 (k, m) = K[r1−k, r2−m], B1 k = K[r1−k, 0], C2 m = K[0, r2−m]"""
    c, cm = D.shape
    taps = np.zeros((r1 + 1, r2 + 1, c, cm))
    taps[0, 0] = D
    for m in range(r2):
        taps[0, r2 - m] = C2[:, m * cm:(m + 1) * cm]
    for k in range(r1):
        taps[r1 - k, 0] = B1[k * c:(k + 1) * c]
        for m in range(r2):
            taps[r1 - k, r2 - m] = A12[k * c:(k + 1) * c, m * cm:(m + 1) * cm]
    return taps


def taps_from_blocks_1d(C: np.ndarray, D: np.ndarray, r: int) -> np.ndarray:
    c, cm = D.shape
    taps = np.zeros((r + 1, c, cm))
    taps[0] = D
    for k in range(r):
        taps[r - k] = C[:, k * cm:(k + 1) * cm]
    return taps


def kernel_from_realization_2d(ss: Roesser2D) -> Kernel2D:
    """
    realize_2d 의 정확한 역변환.

    Raises:
        StructureViolation: A11, A21, A22, B2, C1 이 고정 구조에서 1e-12 초과로 벗어남
    """
    c, cm = ss.D.shape
    if ss.n1 % c or ss.n2 % cm:
        raise StructureViolation(f"상태 차원 ({ss.n1}, {ss.n2})이 채널 수의 배수가 아닙니다")
    r1, r2 = ss.n1 // c, ss.n2 // cm

    _check_block("A11", ss.A11, shift_down(r1, c))
    _check_block("A21", ss.A21, np.zeros((ss.n2, ss.n1)))
    _check_block("A22", ss.A22, shift_up(r2, cm))
    _check_block("B2", ss.B2, last_block_injector(r2, cm))
    _check_block("C1", ss.C1, last_block_reader(r1, c))

    taps = taps_from_blocks_2d(ss.A12, ss.B1, ss.C2, ss.D, r1, r2)
    return Kernel2D(taps, (1, 1), np.array(ss.bias, dtype=float))


def _as_batch(image: np.ndarray, ndim: int) -> Tuple[np.ndarray, bool]:
    image = np.asarray(image, dtype=float)
    if image.ndim == ndim - 1:
        return image[None], True
    return image, False


def ss_forward_2d(ss: Roesser2D, image: np.ndarray) -> np.ndarray:
    """
    행 단위 Roesser 점화식. image: (c_in, N1, N2) 또는 (B, c_in, N1, N2)

    Raises:
        ChannelMismatch: 입력 채널 ≠ c_in
    """
    x, single = _as_batch(image, 4)
    batch, cm, n1_len, n2_len = x.shape
    if cm != ss.D.shape[1]:
        raise ChannelMismatch(f"입력 채널 {cm} vs 실현 c_in {ss.D.shape[1]}")

    c = ss.D.shape[0]
    y = np.zeros((batch, c, n1_len, n2_len))
    # x1[i, j] 를 열 j 별로 보관 (다음 행으로 전달)
    x1 = np.zeros((batch, n2_len, ss.n1))
    for i in range(n1_len):
        x2 = np.zeros((batch, ss.n2))
        next_x1 = np.empty_like(x1)
        for j in range(n2_len):
            u = x[:, :, i, j]
            s1, s2 = x1[:, j], x2
            y[:, :, i, j] = s1 @ ss.C1.T + s2 @ ss.C2.T + u @ ss.D.T + ss.bias
            next_x1[:, j] = s1 @ ss.A11.T + s2 @ ss.A12.T + u @ ss.B1.T
            x2 = s1 @ ss.A21.T + s2 @ ss.A22.T + u @ ss.B2.T
        x1 = next_x1
    return y[0] if single else y


# ─── 1-D 실현 ───────────────────────────────────────────────

def realize_1d(kernel: Kernel1D) -> Roesser1D:
    """A: 블록 위쪽 시프트, B = [0; I], C = [K[r] … K[1]], D = K[0]"""
    if kernel.stride != 1:
        raise StridedInput(f"stride {kernel.stride} 커널은 직접 실현할 수 없습니다")
    K = np.asarray(kernel.taps, dtype=float)
    r, cm = kernel.r, kernel.c_in
    C = np.hstack([K[r - k] for k in range(r)]) if r else np.zeros((kernel.c_out, 0))
    return Roesser1D(
        A=shift_up(r, cm),
        B=last_block_injector(r, cm),
        C=C,
        D=K[0].copy(),
        bias=kernel.bias_or_zero(),
    )


def kernel_from_realization_1d(ss: Roesser1D) -> Kernel1D:
    c, cm = ss.D.shape
    if ss.n % cm:
        raise StructureViolation(f"상태 차원 {ss.n}이 c_in={cm}의 배수가 아닙니다")
    r = ss.n // cm
    _check_block("A", ss.A, shift_up(r, cm))
    _check_block("B", ss.B, last_block_injector(r, cm))
    taps = taps_from_blocks_1d(ss.C, ss.D, r)
    return Kernel1D(taps, 1, np.array(ss.bias, dtype=float))


def ss_forward_1d(ss: Roesser1D, signal: np.ndarray) -> np.ndarray:
    """signal: (c_in, N) 또는 (B, c_in, N)"""
    u_all, single = _as_batch(signal, 3)
    batch, cm, length = u_all.shape
    if cm != ss.D.shape[1]:
        raise ChannelMismatch(f"입력 채널 {cm} vs 실현 c_in {ss.D.shape[1]}")
    y = np.zeros((batch, ss.D.shape[0], length))
    state = np.zeros((batch, ss.n))
    for i in range(length):
        u = u_all[:, :, i]
        y[:, :, i] = state @ ss.C.T + u @ ss.D.T + ss.bias
        state = state @ ss.A.T + u @ ss.B.T
    return y[0] if single else y


# ─── 직접 합성곱 (기준 구현) ─────────────────────────────────

def _shift(r: int, padding: str) -> int:
    if padding == "causal":
        return 0
    if padding == "same":
        return r // 2
    raise InvalidGeometry(f"지원하지 않는 padding: {padding}")


def _axis_geometry(n: int, r: int, s: int, shift: int) -> Tuple[int, int, int]:
    """(출력 길이, 앞쪽 패딩, 뒤쪽 패딩)"""
    out = n // s
    pad_lo = max(0, r + 1 - s - shift)
    pad_hi = max(0, s * out + shift - n)
    return out, pad_lo, pad_hi


def im2col(x: np.ndarray, r1: int, r2: int, stride: Pair, padding: str = "causal") -> np.ndarray:
    """
    x: (B, C, N1, N2) → cols: (B, o1, o2, r1+1, r2+1, C)

    cols[b, i, j, t1, t2] = x[b, :, s1(i+1)−1−t1+h1, s2(j+1)−1−t2+h2] (범위 밖은 0)
    """
    s1, s2 = _pair(stride)
    batch, ch, n1, n2 = x.shape
    h1, h2 = _shift(r1, padding), _shift(r2, padding)
    o1, lo1, hi1 = _axis_geometry(n1, r1, s1, h1)
    o2, lo2, hi2 = _axis_geometry(n2, r2, s2, h2)
    xp = np.pad(x, [(0, 0), (0, 0), (lo1, hi1), (lo2, hi2)])

    cols = np.zeros((batch, o1, o2, r1 + 1, r2 + 1, ch))
    for t1 in range(r1 + 1):
        a = s1 - 1 - t1 + h1 + lo1
        for t2 in range(r2 + 1):
            b = s2 - 1 - t2 + h2 + lo2
            patch = xp[:, :, a:a + s1 * (o1 - 1) + 1:s1, b:b + s2 * (o2 - 1) + 1:s2]
            cols[:, :, :, t1, t2, :] = patch.transpose(0, 2, 3, 1)
    return cols


def col2im(cols: np.ndarray, x_shape: Tuple[int, ...], r1: int, r2: int,
           stride: Pair, padding: str = "causal") -> np.ndarray:
    """im2col 의 adjoint (겹치는 위치는 누적)"""
    s1, s2 = _pair(stride)
    batch, ch, n1, n2 = x_shape
    h1, h2 = _shift(r1, padding), _shift(r2, padding)
    o1, lo1, hi1 = _axis_geometry(n1, r1, s1, h1)
    o2, lo2, hi2 = _axis_geometry(n2, r2, s2, h2)

    xp = np.zeros((batch, ch, n1 + lo1 + hi1, n2 + lo2 + hi2))
    for t1 in range(r1 + 1):
        a = s1 - 1 - t1 + h1 + lo1
        for t2 in range(r2 + 1):
            b = s2 - 1 - t2 + h2 + lo2
            xp[:, :, a:a + s1 * (o1 - 1) + 1:s1, b:b + s2 * (o2 - 1) + 1:s2] += \
                cols[:, :, :, t1, t2, :].transpose(0, 3, 1, 2)
    return xp[:, :, lo1:lo1 + n1, lo2:lo2 + n2]


def conv_cols(cols: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """(B, o1, o2, R1, R2, C) × (R1, R2, C_out, C) → (B, C_out, o1, o2)"""
    return np.einsum("bijuvc,uvoc->boij", cols, taps, optimize=True)


def _conv2d_loops(x: np.ndarray, taps: np.ndarray, stride: Pair, padding: str) -> np.ndarray:
    s1, s2 = stride
    batch, _, n1, n2 = x.shape
    r1, r2 = taps.shape[0] - 1, taps.shape[1] - 1
    h1, h2 = _shift(r1, padding), _shift(r2, padding)
    o1, o2 = n1 // s1, n2 // s2
    y = np.zeros((batch, taps.shape[2], o1, o2))
    for i in range(o1):
        for j in range(o2):
            for t1 in range(r1 + 1):
                p = s1 * (i + 1) - 1 - t1 + h1
                if not 0 <= p < n1:
                    continue
                for t2 in range(r2 + 1):
                    q = s2 * (j + 1) - 1 - t2 + h2
                    if 0 <= q < n2:
                        y[:, :, i, j] += x[:, :, p, q] @ taps[t1, t2].T
    return y


def direct_conv2d(
    kernel: Kernel2D,
    image: np.ndarray,
    padding: str = "causal",
    method: str = "im2col",
    with_bias: bool = True,
) -> np.ndarray:
    """
    영 패딩 직접 합성곱.

    Args:
        padding: "causal" (내부 표준형) 또는 "same" (r//2 만큼 앞당겨 읽음)
        method: "im2col" (고속) 또는 "loops" (중첩합 기준)

    Raises:
        ChannelMismatch: 입력 채널 ≠ c_in
    """
    x, single = _as_batch(image, 4)
    if x.shape[1] != kernel.c_in:
        raise ChannelMismatch(f"입력 채널 {x.shape[1]} vs 커널 c_in {kernel.c_in}")
    taps = np.asarray(kernel.taps, dtype=float)
    stride = _pair(kernel.stride)

    if method == "loops":
        y = _conv2d_loops(x, taps, stride, padding)
    elif method == "im2col":
        y = conv_cols(im2col(x, kernel.r1, kernel.r2, stride, padding), taps)
    else:
        raise InvalidGeometry(f"지원하지 않는 method: {method}")

    if with_bias:
        y = y + kernel.bias_or_zero()[None, :, None, None]
    return y[0] if single else y


def as_2d_kernel(kernel: Kernel1D) -> Kernel2D:
    """1-D 커널을 높이 1 인 2-D 커널로 (r1 = 0)"""
    return Kernel2D(np.asarray(kernel.taps)[None], (1, kernel.stride), kernel.bias)


def direct_conv1d(
    kernel: Kernel1D,
    signal: np.ndarray,
    padding: str = "causal",
    method: str = "im2col",
    with_bias: bool = True,
) -> np.ndarray:
    """signal: (c_in, N) 또는 (B, c_in, N)"""
    u, single = _as_batch(signal, 3)
    y = direct_conv2d(as_2d_kernel(kernel), u[:, :, None, :], padding, method, with_bias)[:, :, 0, :]
    return y[0] if single else y


def conv_operator_norm(kernel: Kernel2D, image_shape: Tuple[int, int],
                       padding: str = "causal", seed: int = 0) -> float:
    """유한 이미지 위 합성곱 연산자의 스펙트럼 노름 (멱반복)"""
    taps = np.asarray(kernel.taps, dtype=float)
    stride = _pair(kernel.stride)
    shape = (1, kernel.c_in, *image_shape)

    def apply(v):
        return conv_cols(im2col(v, kernel.r1, kernel.r2, stride, padding), taps)

    def apply_t(g):
        gcols = np.einsum("boij,uvoc->bijuvc", g, taps, optimize=True)
        return col2im(gcols, shape, kernel.r1, kernel.r2, stride, padding)

    sigma, _ = linalg.power_iteration(apply, apply_t, shape, seed=seed)
    return sigma


# ─── stride 처리 ────────────────────────────────────────────

def space_to_depth(image: np.ndarray, s1: int, s2: int) -> np.ndarray:
    """
    s1×s2×C 블록을 한 픽셀(s1·s2·C 채널)로. 채널 순서 (a·s2 + b)·C + ch,
    블록 (I, J) 의 원소 (a, b) 는 원본 (s1·I + a, s2·J + b).

    Raises:
        NotDivisible: 공간 크기가 stride 로 나누어떨어지지 않음
    """
    x, single = _as_batch(image, 4)
    batch, ch, n1, n2 = x.shape
    if n1 % s1 or n2 % s2:
        raise NotDivisible(f"이미지 {n1}x{n2}는 stride ({s1}, {s2})로 나누어떨어지지 않습니다")
    out = (
        x.reshape(batch, ch, n1 // s1, s1, n2 // s2, s2)
        .transpose(0, 3, 5, 1, 2, 4)
        .reshape(batch, s1 * s2 * ch, n1 // s1, n2 // s2)
    )
    return out[0] if single else out


def depth_to_space(image: np.ndarray, s1: int, s2: int) -> np.ndarray:
    x, single = _as_batch(image, 4)
    batch, cs, m1, m2 = x.shape
    ch = cs // (s1 * s2)
    out = (
        x.reshape(batch, s1, s2, ch, m1, m2)
        .transpose(0, 3, 4, 1, 5, 2)
        .reshape(batch, ch, m1 * s1, m2 * s2)
    )
    return out[0] if single else out


def strided_order(r: int, s: int) -> int:
    """space_to_depth 후 커널 차수 ⌈(r+1)/s⌉ − 1"""
    return r // s


def repack_strided_kernel(kernel: Kernel2D) -> Kernel2D:
    """
    stride (s1, s2) 커널 → space_to_depth 입력에 대한 stride 1 커널.

    K'[τ1, τ2][:, (a·s2+b)·C + ch] = K[s1·τ1 + s1−1−a, s2·τ2 + s2−1−b][:, ch] (범위 밖은 0)
    """
    s1, s2 = _pair(kernel.stride)
    K = np.asarray(kernel.taps, dtype=float)
    c, cm = kernel.c_out, kernel.c_in
    q1, q2 = strided_order(kernel.r1, s1), strided_order(kernel.r2, s2)

    out = np.zeros((q1 + 1, q2 + 1, c, s1 * s2 * cm))
    for tau1 in range(q1 + 1):
        for tau2 in range(q2 + 1):
            for a in range(s1):
                t1 = s1 * tau1 + s1 - 1 - a
                if t1 > kernel.r1:
                    continue
                for b in range(s2):
                    t2 = s2 * tau2 + s2 - 1 - b
                    if t2 > kernel.r2:
                        continue
                    blk = (a * s2 + b) * cm
                    out[tau1, tau2, :, blk:blk + cm] = K[t1, t2]
    return Kernel2D(out, (1, 1), kernel.bias)


def unpack_strided_taps(taps: np.ndarray, s1: int, s2: int) -> np.ndarray:
    """
    repack 의 역. (q1+1, q2+1, c, s1·s2·C) → (s1(q1+1), s2(q2+1), c, C)

    K[t1, t2] = K'[t1 // s1, t2 // s2] 의 채널 블록 (s1−1−t1%s1, s2−1−t2%s2)
    """
    q1, q2 = taps.shape[0] - 1, taps.shape[1] - 1
    c, cs = taps.shape[2], taps.shape[3]
    cm = cs // (s1 * s2)
    out = np.zeros((s1 * (q1 + 1), s2 * (q2 + 1), c, cm))
    for t1 in range(out.shape[0]):
        a = s1 - 1 - t1 % s1
        for t2 in range(out.shape[1]):
            b = s2 - 1 - t2 % s2
            blk = (a * s2 + b) * cm
            out[t1, t2] = taps[t1 // s1, t2 // s2, :, blk:blk + cm]
    return out


def unpack_strided_kernel(kernel: Kernel2D, s1: int, s2: int) -> Kernel2D:
    return Kernel2D(unpack_strided_taps(np.asarray(kernel.taps, dtype=float), s1, s2), (s1, s2), kernel.bias)


def ss_forward_strided(ss: Roesser2D, image: np.ndarray, s1: int, s2: int) -> np.ndarray:
    """space_to_depth 후 stride 1 실현 실행"""
    return ss_forward_2d(ss, space_to_depth(image, s1, s2))


# ─── 풀링 ───────────────────────────────────────────────────

def pool_output_size(n: int, window: int, stride: int) -> int:
    return (n - window) // stride + 1


def _windows(x: np.ndarray, window: Pair, stride: Pair) -> np.ndarray:
    """(B, C, o1, o2, k1, k2)"""
    k1, k2 = window
    s1, s2 = stride
    view = np.lib.stride_tricks.sliding_window_view(x, (k1, k2), axis=(2, 3))
    return view[:, :, ::s1, ::s2]


def pool2d(x: np.ndarray, kind: str, window, stride) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    평균/최대 풀링. window, stride 는 int 또는 (높이, 너비).

    Returns:
        (출력, max 인 경우 창 내부 argmax 인덱스)

    Raises:
        InvalidGeometry: 창이 입력보다 큼 또는 알 수 없는 kind
    """
    window, stride = _pair(window), _pair(stride)
    if window[0] > x.shape[2] or window[1] > x.shape[3] or min(window) < 1 or min(stride) < 1:
        raise InvalidGeometry(f"풀링 window {window} / stride {stride} / 입력 {x.shape[2:]} 조합 오류")
    win = _windows(x, window, stride)
    if kind == "avg":
        return win.mean(axis=(-2, -1)), None
    if kind == "max":
        flat = win.reshape(*win.shape[:4], -1)
        arg = flat.argmax(axis=-1)
        return np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0], arg
    raise InvalidGeometry(f"지원하지 않는 풀링: {kind}")


def pool2d_backward(g: np.ndarray, x_shape: Tuple[int, ...], kind: str, window, stride,
                    arg: Optional[np.ndarray]) -> np.ndarray:
    (k1, k2), (s1, s2) = _pair(window), _pair(stride)
    o1, o2 = g.shape[2], g.shape[3]
    gx = np.zeros(x_shape)
    for a in range(k1):
        for b in range(k2):
            if kind == "avg":
                contrib = g / (k1 * k2)
            else:
                contrib = g * (arg == a * k2 + b)
            gx[:, :, a:a + s1 * (o1 - 1) + 1:s1, b:b + s2 * (o2 - 1) + 1:s2] += contrib
    return gx


def pool2d_tangent(dx: np.ndarray, kind: str, window, stride, arg: Optional[np.ndarray]) -> np.ndarray:
    """풀링의 방향 미분 (max 는 순전파 argmax 위치의 값을 선택)"""
    window, stride = _pair(window), _pair(stride)
    win = _windows(dx, window, stride)
    if kind == "avg":
        return win.mean(axis=(-2, -1))
    flat = win.reshape(*win.shape[:4], -1)
    return np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]


def pool_dense_operator(n1: int, n2: int, kind_window: Pair, stride: Pair) -> np.ndarray:
    """단일 채널 평균 풀링의 밀집 행렬 (o1·o2 × n1·n2)"""
    (k1, k2), (s1, s2) = kind_window, stride
    o1, o2 = pool_output_size(n1, k1, s1), pool_output_size(n2, k2, s2)
    op = np.zeros((o1 * o2, n1 * n2))
    for i in range(o1):
        for j in range(o2):
            for a in range(k1):
                for b in range(k2):
                    op[i * o2 + j, (s1 * i + a) * n2 + s2 * j + b] = 1.0 / (k1 * k2)
    return op
