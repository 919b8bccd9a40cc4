"""
밀집 행렬 커널

모든 모듈이 공유하는 Cholesky / 고유값 / 노름 / PSD 풀이 / FFT.
Cholesky는 A = LᵀL (L 상삼각) 규약을 따릅니다.
순수 함수만 있으며 입력을 변경하지 않습니다.
"""

from typing import Callable, Optional, Tuple

import numpy as np
import scipy.linalg

from shared.errors import NoConvergence, NonPowerOfTwo, NotPositiveDefinite

JITTER_SCALE = 1e-12
POWER_MAX_ITER = 10_000
POWER_TOL = 1e-14


def symmetrize(a: np.ndarray) -> np.ndarray:
    """(A + Aᵀ) / 2"""
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def kron_eye(n: int, a: np.ndarray) -> np.ndarray:
    """I_n ⊗ A (블록 대각 반복)"""
    return np.kron(np.eye(n), np.asarray(a, dtype=float))


def block_diag(*blocks: np.ndarray) -> np.ndarray:
    return scipy.linalg.block_diag(*[np.asarray(b, dtype=float) for b in blocks])


def cholesky(a: np.ndarray) -> np.ndarray:
    """
    A = LᵀL 인 상삼각 L 반환.

    첫 실패 시 대각에 1e-12·trace(A)/n 을 더해 한 번 재시도합니다.

    Raises:
        NotPositiveDefinite: 재시도 후에도 피벗이 0 이하
    """
    a = symmetrize(a)
    n = a.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    if not np.all(np.isfinite(a)):
        raise NotPositiveDefinite("행렬에 유한하지 않은 값이 있습니다")

    try:
        return scipy.linalg.cholesky(a, lower=False)
    except np.linalg.LinAlgError:
        pass

    jitter = JITTER_SCALE * max(np.trace(a), 0.0) / n
    try:
        return scipy.linalg.cholesky(a + jitter * np.eye(n), lower=False)
    except np.linalg.LinAlgError as e:
        raise NotPositiveDefinite(f"{n}x{n} 행렬이 양의 정부호가 아닙니다: {e}") from e


def min_eig_sym(a: np.ndarray) -> float:
    """대칭화한 행렬의 최소 고유값"""
    a = symmetrize(a)
    if a.size == 0:
        return float("inf")
    try:
        return float(scipy.linalg.eigvalsh(a, subset_by_index=[0, 0])[0])
    except scipy.linalg.LinAlgError as e:
        raise NoConvergence(f"LAPACK 대칭 고유값 계산이 수렴하지 않았습니다: {e}") from e


def power_iteration(
    apply: Callable[[np.ndarray], np.ndarray],
    apply_t: Callable[[np.ndarray], np.ndarray],
    shape: Tuple[int, ...],
    seed: int = 0,
    max_iter: int = POWER_MAX_ITER,
    tol: float = POWER_TOL,
) -> Tuple[float, np.ndarray]:
    """
    행렬을 만들지 않고 선형 연산자의 최대 특이값을 구합니다.

    Args:
        apply: x ↦ Ax
        apply_t: y ↦ Aᵀy
        shape: 입력 x의 shape

    Returns:
        (σ_max, 대응하는 오른쪽 특이벡터)
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(shape)
    v /= np.linalg.norm(v)

    rayleigh = 0.0
    for _ in range(max_iter):
        w = apply_t(apply(v))
        new_rayleigh = float(np.vdot(v, w))
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return 0.0, v
        v = w / norm_w
        # Rayleigh quotient가 더 이상 움직이지 않으면 종료
        if abs(new_rayleigh - rayleigh) <= tol * abs(new_rayleigh):
            rayleigh = new_rayleigh
            break
        rayleigh = new_rayleigh

    sigma = float(np.linalg.norm(apply(v)))
    return sigma, v


def spectral_norm(a: np.ndarray, seed: int = 0) -> float:
    """aᵀa 멱반복으로 최대 특이값 (영행렬이면 0)"""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if not np.any(a):
        return 0.0
    sigma, _ = power_iteration(lambda x: a @ x, lambda y: a.T @ y, (a.shape[1],), seed=seed)
    return sigma


def solve_psd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cholesky 후진대입으로 A x = b 풀이"""
    b = np.asarray(b, dtype=float)
    L = cholesky(a)
    if L.shape[0] == 0:
        return np.zeros_like(b)
    # LᵀL x = b  →  Lᵀ z = b, L x = z
    z = scipy.linalg.solve_triangular(L, b, trans="T", lower=False)
    return scipy.linalg.solve_triangular(L, z, lower=False)


def inverse_psd(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return symmetrize(solve_psd(a, np.eye(a.shape[0])))


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def fft2(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    """
    마지막 두 축에 대한 2-D FFT. 역변환은 1/(rows·cols)로 정규화.

    Raises:
        NonPowerOfTwo: rows 또는 cols가 2의 거듭제곱이 아님
    """
    x = np.asarray(x)
    rows, cols = x.shape[-2], x.shape[-1]
    if not (is_power_of_two(rows) and is_power_of_two(cols)):
        raise NonPowerOfTwo(f"FFT 크기 {rows}x{cols}는 2의 거듭제곱이어야 합니다")
    if inverse:
        return np.fft.ifft2(x, axes=(-2, -1))
    return np.fft.fft2(x, axes=(-2, -1))


def frobenius(a: Optional[np.ndarray]) -> float:
    if a is None:
        return 0.0
    return float(np.linalg.norm(np.asarray(a, dtype=float)))
