"""
직접 파라미터화: 자유변수 φ → 소산성 LMI를 항상 만족하는 레이어 가중치

모든 연산은 autodiff Var 위에서 수행되므로 φ에 대해 미분 가능합니다.
ndarray를 넘기면 새 Tape 위 상수로 올려서 계산하고, 결과는 MaterializedLayer.numpy()로 꺼냅니다.

레이어별 사상:
    param_fc              (Y, Z, γ, b) → (W, b, L)          L = √2·UΓ, Λ = Γ²
    param_last_fc         (Y, Z, b) → (W, b)                W = L_Q⁻¹VᵀL₋
    param_conv1d          (Y, Z, H, γ, b) → (K, b, L)       Ĉ = √2Γ⁻¹VᵀL_F
    param_conv1d_maxpool  (Ỹ, H, γ̃, l, b) → (K, b, L)       Ĉ = Λ⁻¹Γ̃ŨᵀL_F, L = diag(l)
    param_conv2d          (Y, Z, H1, H2, A12, B1, δ, q, b)  Ĉ2 = C1F1⁻¹F12 − L_ΓᵀVᵀL_F
    param_conv2d_maxpool  (Ỹ, H1, H2, A12, B1, δ, ω, q, b)  L = diag(l) (대각)
"""

import math
from dataclasses import dataclass, field, fields, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from shared import autodiff as ad
from shared import statespace
from shared.arch import ArchSpec, LayerPlan, parse_arch, plan
from shared.cert import pooling_gain
from shared.errors import NotPositiveDefinite, ShapeMismatch, TooFewRows

DEFAULT_EPS = 1e-3
INIT_STD = 0.02
SQRT2 = math.sqrt(2.0)

Tensor = Union[ad.Var, np.ndarray]


# ─── 타입 ───────────────────────────────────────────────────

@dataclass
class GainFactor:
    """X = LᵀL (대각 플래그: max 풀링 체인)"""

    L: Tensor
    diagonal: bool = False

    @property
    def size(self) -> int:
        return ad.value_of(self.L).shape[0]

    @property
    def X(self) -> np.ndarray:
        L = ad.value_of(self.L)
        return L.T @ L

    def numpy(self) -> "GainFactor":
        return GainFactor(np.array(ad.value_of(self.L)), self.diagonal)


@dataclass(frozen=True)
class Pool:
    kind: str  # "avg" | "max"
    window: Tuple[int, int]
    stride: Tuple[int, int]
    gain: float


@dataclass
class FcParams:
    Y: Tensor
    Z: Tensor
    gamma_log: Tensor
    b: Tensor


@dataclass
class LastFcParams:
    Y: Tensor
    Z: Tensor
    b: Tensor


@dataclass
class Conv1dParams:
    Y: Tensor
    Z: Tensor
    H: Tensor
    gamma_log: Tensor
    b: Tensor


@dataclass
class Conv1dMaxParams:
    Yt: Tensor
    H: Tensor
    gamma_t: Tensor
    l_log: Tensor
    b: Tensor


@dataclass
class Conv2dParams:
    Y: Tensor
    Z: Tensor
    H1: Tensor
    H2: Tensor
    A12: Tensor
    B1: Tensor
    delta: Tensor
    q_log: Tensor
    b: Tensor


@dataclass
class Conv2dMaxParams:
    Yt: Tensor
    H1: Tensor
    H2: Tensor
    A12: Tensor
    B1: Tensor
    delta: Tensor
    omega: Tensor
    q_log: Tensor
    b: Tensor


@dataclass
class MaterializedLayer:
    """
    파라미터화 결과 한 레이어.

    kind: "conv2d" | "conv1d" | "fc" | "last"
    weight: conv 는 원래 stride 기하의 탭 (R1, R2, c, c₋) (1-D 는 R1 = 1), fc 는 W (c, N·c₋)
    blocks: 인증용 stride-1 실현 블록 (2-D: A12, B1, C2, D / 1-D: C, D)
    dims: 2-D (c, c_eff, q1, q2), 1-D (c, c_eff, q), fc (c, c₋)
    lam: Λ 대각 성분, P: (P1, P2) | (P,) | ()
    """

    kind: str
    weight: Tensor
    bias: Tensor
    gain_in: GainFactor
    gain: GainFactor
    lam: Optional[Tensor] = None
    P: Tuple[Tensor, ...] = ()
    blocks: Dict[str, Tensor] = field(default_factory=dict)
    dims: Tuple[int, ...] = ()
    pool: Optional[Pool] = None
    stride: Tuple[int, int] = (1, 1)
    expand: int = 1

    def numpy(self) -> "MaterializedLayer":
        def np_(x):
            return None if x is None else np.array(ad.value_of(x))

        return replace(
            self,
            weight=np_(self.weight),
            bias=np_(self.bias),
            gain_in=self.gain_in.numpy(),
            gain=self.gain.numpy(),
            lam=np_(self.lam),
            P=tuple(np_(p) for p in self.P),
            blocks={k: np_(v) for k, v in self.blocks.items()},
        )

    def realization(self) -> Union[statespace.Roesser2D, statespace.Roesser1D, None]:
        """인증용 stride-1 상태공간 실현 (fc 는 None)"""
        blk = {k: np.array(ad.value_of(v)) for k, v in self.blocks.items()}
        bias = np.array(ad.value_of(self.bias))
        if self.kind == "conv2d":
            c, ce, q1, q2 = self.dims
            return statespace.Roesser2D(
                A11=statespace.shift_down(q1, c),
                A12=blk["A12"],
                A22=statespace.shift_up(q2, ce),
                B1=blk["B1"],
                B2=statespace.last_block_injector(q2, ce),
                C1=statespace.last_block_reader(q1, c),
                C2=blk["C2"],
                D=blk["D"],
                bias=bias,
            )
        if self.kind == "conv1d":
            c, ce, q = self.dims
            return statespace.Roesser1D(
                A=statespace.shift_up(q, ce),
                B=statespace.last_block_injector(q, ce),
                C=blk["C"],
                D=blk["D"],
                bias=bias,
            )
        return None

    @property
    def stride_count(self) -> int:
        return self.stride[0] * self.stride[1]


# ─── Cayley ─────────────────────────────────────────────────

def cayley(Y: Tensor, Z: Tensor) -> Tuple[ad.Var, ad.Var]:
    """
    M = Y − Yᵀ + ZᵀZ,  U = (I+M)⁻¹(I−M),  V = 2Z(I+M)⁻¹  →  UᵀU + VᵀV = I
    """
    tape = ad.tape_of(Y, Z)
    Y, Z = ad.lift(Y, tape), ad.lift(Z, tape)
    n = Y.shape[0]
    eye = np.eye(n)
    M = Y - Y.T + Z.T @ Z
    U = ad.solve(eye + M, eye - M)
    V = 2.0 * ad.solve((eye + M).T, Z.T).T
    return U, V


def cayley_tall(G: Tensor) -> ad.Var:
    """
    G (p×c, p ≥ c) → 열 정규직교 Ũ = [U; V]

    Raises:
        TooFewRows: p < c
    """
    tape = ad.tape_of(G)
    G = ad.lift(G, tape)
    p, c = G.shape
    if p < c:
        raise TooFewRows(f"cayley_tall 입력 {p}x{c}: 행 수가 열 수보다 작습니다")
    U, V = cayley(G[:c], G[c:])
    return ad.concat([U, V], axis=0)


# ─── Gramian / F ────────────────────────────────────────────

def _nilpotent_sum(A: np.ndarray, M: ad.Var, terms: int) -> ad.Var:
    """Σ_{k<terms} Aᵏ M (Aᵀ)ᵏ  (A 멱영 → Lyapunov T − ATAᵀ = M 의 해)"""
    total, term = M, M
    for _ in range(terms - 1):
        term = A @ term @ A.T
        total = total + term
    return total


def _eye(n: int) -> np.ndarray:
    return np.eye(n)


def gramian_1d(X_in: Tensor, H: Tensor, eps: float, r: int, c_in: int) -> ad.Var:
    """
    T = Σ_{k=0}^{r−1} Aᵏ(B X₋⁻¹Bᵀ + HᵀH + εI)(Aᵀ)ᵏ  (A, B: 블록 시프트 쌍)
    """
    tape = ad.tape_of(X_in, H)
    X_in, H = ad.lift(X_in, tape), ad.lift(H, tape)
    n = r * c_in
    A = statespace.shift_up(r, c_in)
    B = statespace.last_block_injector(r, c_in)
    M = B @ ad.inverse_psd(X_in) @ B.T + H.T @ H + eps * _eye(n)
    return _nilpotent_sum(A, M, r)


def roesser_ab(A12: Tensor, B1: Tensor, dims: Tuple[int, int, int, int]) -> Tuple[ad.Var, ad.Var]:
    """자유 블록 (A12, B1) + 고정 블록 → 전체 (A, B)"""
    c, cm, r1, r2 = dims
    tape = ad.tape_of(A12, B1)
    A12, B1 = ad.lift(A12, tape), ad.lift(B1, tape)
    n1, n2 = c * r1, cm * r2
    A = ad.block([
        [statespace.shift_down(r1, c), A12],
        [np.zeros((n2, n1)), statespace.shift_up(r2, cm)],
    ])
    B = ad.concat([B1, statespace.last_block_injector(r2, cm)], axis=0)
    return A, B


def gramian_2d(
    X_in: Tensor,
    H1: Tensor,
    H2: Tensor,
    A12: Tensor,
    B1: Tensor,
    eps: float,
    dims: Tuple[int, int, int, int],
) -> Tuple[ad.Var, ad.Var]:
    """
    x2 동역학이 x1 과 분리되어 있으므로(A21 = 0) T2 를 먼저, 그 다음 T1 을 구성합니다.

    Args:
        dims: (c, c₋, r1, r2)

    Returns:
        (T1, T2), P = blkdiag(T1⁻¹, T2⁻¹)

    Raises:
        NotPositiveDefinite: Schur 피벗 T2 − A22T2A22ᵀ − X̃22 분해 실패 (수치 오류)
    """
    c, cm, r1, r2 = dims
    n1, n2 = c * r1, cm * r2
    tape = ad.tape_of(X_in, H1, H2, A12, B1)
    X_in, H1, H2, A12, B1 = (ad.lift(v, tape) for v in (X_in, H1, H2, A12, B1))

    A11 = statespace.shift_down(r1, c)
    A22 = statespace.shift_up(r2, cm)
    B = ad.concat([B1, statespace.last_block_injector(r2, cm)], axis=0)

    Xt = B @ ad.inverse_psd(X_in) @ B.T
    Xt11, Xt12, Xt22 = Xt[:n1, :n1], Xt[:n1, n1:], Xt[n1:, n1:]

    T2 = _nilpotent_sum(A22, Xt22 + H2.T @ H2 + eps * _eye(n2), r2)
    pivot = T2 - A22 @ T2 @ A22.T - Xt22
    K12 = Xt12 + A12 @ T2 @ A22.T
    X11 = A12 @ T2 @ A12.T + Xt11 + K12 @ ad.solve_psd(pivot, K12.T)
    T1 = _nilpotent_sum(A11, X11 + H1.T @ H1 + eps * _eye(n1), r1)
    return T1, T2


def build_F(A: Tensor, B: Tensor, P: Tensor, X_in: Tensor) -> ad.Var:
    """F = [[P − AᵀPA, −AᵀPB], [−BᵀPA, X₋ − BᵀPB]]"""
    tape = ad.tape_of(A, B, P, X_in)
    A, B, P, X_in = (ad.lift(v, tape) for v in (A, B, P, X_in))
    PA, PB = P @ A, P @ B
    top = ad.concat([P - A.T @ PA, -(A.T @ PB)], axis=1)
    bottom = ad.concat([-(B.T @ PA), X_in - B.T @ PB], axis=1)
    F = ad.concat([top, bottom], axis=0)
    return 0.5 * (F + F.T)


def block_diag_var(*blocks: ad.Var) -> ad.Var:
    sizes = [b.shape[0] for b in blocks]
    rows = []
    for i, b in enumerate(blocks):
        row = []
        for j, s in enumerate(sizes):
            row.append(b if i == j else np.zeros((sizes[i], s)))
        rows.append(row)
    return ad.block(rows)


def gamma_dd(S: Tensor, delta: Tensor, q: Tensor, eps: float) -> ad.Var:
    """
    γ_i = ε + δ_i² + ½ Σ_j |S|_ij q_j / q_i   →   2Γ − S ≻ 0 (대각 우세)
    """
    tape = ad.tape_of(S, delta, q)
    S, delta, q = (ad.lift(v, tape) for v in (S, delta, q))
    return eps + ad.square(delta) + 0.5 * ((ad.abs(S) @ q) / q)


def _inv_diag(v: ad.Var) -> ad.Var:
    return ad.diag(1.0 / v)


def _x_in(gain_in: GainFactor, copies: int, tape: ad.Tape) -> ad.Var:
    """X₋ (stride 입력이면 I_{s1s2} ⊗ X₋)"""
    L = ad.lift(gain_in.L, tape)
    if copies > 1:
        L = ad.kron_eye(copies, L)
    return L.T @ L


def _l_in(gain_in: GainFactor, copies: int, tape: ad.Tape) -> ad.Var:
    L = ad.lift(gain_in.L, tape)
    return ad.kron_eye(copies, L) if copies > 1 else L


# ─── 탭 재배치 ──────────────────────────────────────────────

def _taps_2d(blocks: Sequence[ad.Var], dims: Tuple[int, int, int, int]) -> ad.Var:
    """(A12, B1, C2, D) → 탭 (q1+1, q2+1, c, c_eff), statespace 역변환과 동일한 배치"""
    c, ce, q1, q2 = dims
    flat = ad.concat([ad.reshape(b, (-1,)) for b in blocks])
    shapes = [b.shape for b in blocks]
    offsets = np.cumsum([int(np.prod(s)) for s in shapes])[:-1]

    def select(v):
        a12, b1, c2, d = (p.reshape(s) for p, s in zip(np.split(v, offsets), shapes))
        return statespace.taps_from_blocks_2d(a12, b1, c2, d, q1, q2)

    return ad.gather(flat, ad.index_map(select, flat.shape))


def _taps_1d(C: ad.Var, D: ad.Var, dims: Tuple[int, int, int]) -> ad.Var:
    c, ce, q = dims
    flat = ad.concat([ad.reshape(C, (-1,)), ad.reshape(D, (-1,))])
    split = C.value.size

    def select(v):
        return statespace.taps_from_blocks_1d(v[:split].reshape(c, ce * q), v[split:].reshape(c, ce), q)

    return ad.gather(flat, ad.index_map(select, flat.shape))


def _unpack(taps: ad.Var, stride: Tuple[int, int]) -> ad.Var:
    """space_to_depth 탭 → 원래 stride 기하의 탭"""
    s1, s2 = stride
    if (s1, s2) == (1, 1):
        return taps
    idx = ad.index_map(lambda v: statespace.unpack_strided_taps(v, s1, s2), taps.shape)
    return ad.gather(taps, idx)


# ─── 레이어 파라미터화 ───────────────────────────────────────

def param_fc(p: FcParams, gain_in: GainFactor, expand: int = 1) -> MaterializedLayer:
    """
    W = √2 Γ⁻¹ Vᵀ L̃₋  (L̃₋ = I_N ⊗ L₋, 픽셀 우선 평탄화 순서)

    Args:
        expand: 평탄화 직전 픽셀 수 N (fc 다음 fc 이면 1)
    """
    tape = ad.tape_of(*(getattr(p, f.name) for f in fields(p)), gain_in.L)
    Y, Z, gamma_log, b = (ad.lift(getattr(p, f.name), tape) for f in fields(p))
    L_in = ad.lift(gain_in.L, tape)
    cm = L_in.shape[0]
    c = Y.shape[0]

    gamma = ad.exp(gamma_log)
    U, V = cayley(Y, Z)
    # Vᵀ(I_N ⊗ L₋): 픽셀 블록별로 L₋ 적용
    VL = ad.reshape(ad.reshape(V.T, (c * expand, cm)) @ L_in, (c, expand * cm))
    W = SQRT2 * (_inv_diag(gamma) @ VL)
    L_out = SQRT2 * (U @ ad.diag(gamma))

    return MaterializedLayer(
        kind="fc",
        weight=W,
        bias=b,
        gain_in=gain_in,
        gain=GainFactor(L_out, False),
        lam=ad.square(gamma),
        dims=(c, cm),
        expand=expand,
    )


def param_last_fc(p: LastFcParams, gain_in: GainFactor, L_Q: Tensor, expand: int = 1) -> MaterializedLayer:
    """W = L_Q⁻¹ Vᵀ L̃₋  →  X₋ − WᵀQW ⪰ 0"""
    tape = ad.tape_of(p.Y, p.Z, p.b, gain_in.L, L_Q)
    Y, Z, b = (ad.lift(v, tape) for v in (p.Y, p.Z, p.b))
    L_in, L_Q = ad.lift(gain_in.L, tape), ad.lift(L_Q, tape)
    cm, c = L_in.shape[0], Y.shape[0]

    _, V = cayley(Y, Z)
    VL = ad.reshape(ad.reshape(V.T, (c * expand, cm)) @ L_in, (c, expand * cm))
    W = ad.solve(L_Q, VL)
    return MaterializedLayer(
        kind="last",
        weight=W,
        bias=b,
        gain_in=gain_in,
        gain=GainFactor(L_Q, False),
        dims=(c, cm),
        expand=expand,
    )


def param_conv1d(
    p: Conv1dParams,
    gain_in: GainFactor,
    order: int,
    pool: Optional[Pool] = None,
    stride: int = 1,
    eps: float = DEFAULT_EPS,
) -> MaterializedLayer:
    """
    Ĉ = [C D] = √2 Γ⁻¹ Vᵀ L_F,  L_F = chol(F),  L = (√2/ρ_p)·UΓ,  Λ = Γ²

    Args:
        order: space_to_depth 후 커널 차수 q
        pool: 평균 풀링 (없으면 ρ_p = 1)
    """
    tape = ad.tape_of(*(getattr(p, f.name) for f in fields(p)), gain_in.L)
    Y, Z, H, gamma_log, b = (ad.lift(getattr(p, f.name), tape) for f in fields(p))
    c = Y.shape[0]
    ce = gain_in.size * stride
    X_in = _x_in(gain_in, stride, tape)
    rho_p = pool.gain if pool is not None else 1.0

    F, P = _F_1d(X_in, H, eps, order, ce)
    L_F = ad.cholesky(F)
    gamma = ad.exp(gamma_log)
    U, V = cayley(Y, Z)
    C_hat = SQRT2 * (_inv_diag(gamma) @ V.T @ L_F)
    L_out = (SQRT2 / rho_p) * (U @ ad.diag(gamma))
    return _conv1d_layer(C_hat, b, gain_in, GainFactor(L_out, False), ad.square(gamma), P,
                         (c, ce, order), pool, stride)


def param_conv1d_maxpool(
    p: Conv1dMaxParams,
    gain_in: GainFactor,
    order: int,
    pool: Pool,
    stride: int = 1,
    eps: float = DEFAULT_EPS,
) -> MaterializedLayer:
    """
    Λ = ½(Γ̃² + ρ_p²X), X = diag(l)², Ĉ = Λ⁻¹Γ̃ŨᵀL_F  →  2Λ − ρ_p²X − Γ̃² = 0
    """
    tape = ad.tape_of(*(getattr(p, f.name) for f in fields(p)), gain_in.L)
    Yt, H, gamma_t, l_log, b = (ad.lift(getattr(p, f.name), tape) for f in fields(p))
    c = Yt.shape[1]
    ce = gain_in.size * stride
    X_in = _x_in(gain_in, stride, tape)

    F, P = _F_1d(X_in, H, eps, order, ce)
    L_F = ad.cholesky(F)
    l = ad.exp(l_log)
    lam = 0.5 * (ad.square(gamma_t) + (pool.gain ** 2) * ad.square(l))
    Ut = cayley_tall(Yt)
    C_hat = _inv_diag(lam) @ ad.diag(gamma_t) @ Ut.T @ L_F
    return _conv1d_layer(C_hat, b, gain_in, GainFactor(ad.diag(l), True), lam, P,
                         (c, ce, order), pool, stride)


def _F_1d(X_in: ad.Var, H: ad.Var, eps: float, order: int, ce: int) -> Tuple[ad.Var, ad.Var]:
    T = gramian_1d(X_in, H, eps, order, ce)
    P = ad.inverse_psd(T)
    A = statespace.shift_up(order, ce)
    B = statespace.last_block_injector(order, ce)
    return build_F(A, B, P, X_in), P


def _conv1d_layer(C_hat, b, gain_in, gain, lam, P, dims, pool, stride) -> MaterializedLayer:
    c, ce, q = dims
    n = ce * q
    C, D = C_hat[:, :n], C_hat[:, n:]
    taps = _taps_1d(C, D, dims)  # (q+1, c, ce)
    taps4 = _unpack(ad.reshape(taps, (1, q + 1, c, ce)), (1, stride))
    return MaterializedLayer(
        kind="conv1d",
        weight=taps4,
        bias=b,
        gain_in=gain_in,
        gain=gain,
        lam=lam,
        P=(P,),
        blocks={"C": C, "D": D},
        dims=dims,
        pool=pool,
        stride=(1, stride),
    )


def _conv2d_core(
    X_in: ad.Var,
    H1: ad.Var,
    H2: ad.Var,
    A12: ad.Var,
    B1: ad.Var,
    eps: float,
    dims: Tuple[int, int, int, int],
):
    """gramian → P → F → (F1⁻¹F12 의 C1 행, S, L_F, P1, P2)"""
    c, ce, q1, q2 = dims
    n1 = c * q1
    T1, T2 = gramian_2d(X_in, H1, H2, A12, B1, eps, dims)
    P1, P2 = ad.inverse_psd(T1), ad.inverse_psd(T2)
    A, B = roesser_ab(A12, B1, dims)
    F = build_F(A, B, block_diag_var(P1, P2), X_in)

    F1, F12, F2 = F[:n1, :n1], F[:n1, n1:], F[n1:, n1:]
    C1 = statespace.last_block_reader(q1, c)
    C1F1inv_F12 = C1 @ ad.solve_psd(F1, F12)
    S = C1 @ ad.solve_psd(F1, C1.T)
    S = 0.5 * (S + S.T)
    L_F = ad.cholesky(F2 - F12.T @ ad.solve_psd(F1, F12))
    return C1F1inv_F12, S, L_F, P1, P2


def param_conv2d(
    p: Conv2dParams,
    gain_in: GainFactor,
    order: Tuple[int, int],
    pool: Optional[Pool] = None,
    stride: Tuple[int, int] = (1, 1),
    eps: float = DEFAULT_EPS,
) -> MaterializedLayer:
    """
    2-D 합성곱 (+ 평균 풀링).

    γ = gamma_dd(S, δ, q), L_Γ = chol(2Γ − S), L_F = chol(F2 − F12ᵀF1⁻¹F12),
    Ĉ2 = [C2 D] = C1F1⁻¹F12 − L_ΓᵀVᵀL_F,  L = U L_Γ Γ⁻¹ / ρ_p,  Λ = Γ⁻¹

    Args:
        order: space_to_depth 후 커널 차수 (q1, q2)
        stride: 원래 합성곱 stride (입력 gain 은 I_{s1s2} ⊗ L₋ 로 확장)
    """
    tape = ad.tape_of(*(getattr(p, f.name) for f in fields(p)), gain_in.L)
    Y, Z, H1, H2, A12, B1, delta, q_log, b = (ad.lift(getattr(p, f.name), tape) for f in fields(p))
    copies = stride[0] * stride[1]
    c, ce = Y.shape[0], gain_in.size * copies
    dims = (c, ce, order[0], order[1])
    rho_p = pool.gain if pool is not None else 1.0

    C1F1inv_F12, S, L_F, P1, P2 = _conv2d_core(_x_in(gain_in, copies, tape), H1, H2, A12, B1, eps, dims)
    gamma = gamma_dd(S, delta, ad.exp(q_log), eps)
    L_G = ad.cholesky(2.0 * ad.diag(gamma) - S)
    U, V = cayley(Y, Z)
    C2_hat = C1F1inv_F12 - L_G.T @ V.T @ L_F
    L_out = (1.0 / rho_p) * (U @ L_G @ _inv_diag(gamma))

    return _conv2d_layer(C2_hat, A12, B1, b, gain_in, GainFactor(L_out, False), 1.0 / gamma,
                         (P1, P2), dims, pool, stride)


def param_conv2d_maxpool(
    p: Conv2dMaxParams,
    gain_in: GainFactor,
    order: Tuple[int, int],
    pool: Pool,
    stride: Tuple[int, int] = (1, 1),
    eps: float = DEFAULT_EPS,
) -> MaterializedLayer:
    """
    2-D 합성곱 + 최대 풀링. 출력 gain 은 대각 L = diag(l).

    η = ε + δ² + (|S|q)/q,  γ = ½η + ω²,  l = √2|ω| / (γ ρ_p),
    L_Γ = chol(2Γ − ρ_p²ΓXΓ − S),  Ĉ2 = C1F1⁻¹F12 − L_ΓᵀŨᵀL_F

    Raises:
        NotPositiveDefinite: ω_i = 0 (l_i = 0 이면 다음 레이어 X₋ 가 특이)
    """
    tape = ad.tape_of(*(getattr(p, f.name) for f in fields(p)), gain_in.L)
    Yt, H1, H2, A12, B1, delta, omega, q_log, b = (ad.lift(getattr(p, f.name), tape) for f in fields(p))
    if np.any(omega.value == 0.0):
        raise NotPositiveDefinite("최대 풀링 레이어의 ω에 0이 있습니다 (출력 gain l_i = 0)")
    copies = stride[0] * stride[1]
    c, ce = Yt.shape[1], gain_in.size * copies
    dims = (c, ce, order[0], order[1])
    rho_p = pool.gain

    C1F1inv_F12, S, L_F, P1, P2 = _conv2d_core(_x_in(gain_in, copies, tape), H1, H2, A12, B1, eps, dims)
    q = ad.exp(q_log)
    eta = eps + ad.square(delta) + (ad.abs(S) @ q) / q
    gamma = 0.5 * eta + ad.square(omega)
    l = (SQRT2 / rho_p) * (ad.abs(omega) / gamma)
    # ρ_p²ΓXΓ = diag(ρ_p² γ² l²) = diag(2ω²)
    L_G = ad.cholesky(2.0 * ad.diag(gamma) - ad.diag((rho_p ** 2) * ad.square(gamma * l)) - S)
    Ut = cayley_tall(Yt)
    C2_hat = C1F1inv_F12 - L_G.T @ Ut.T @ L_F

    return _conv2d_layer(C2_hat, A12, B1, b, gain_in, GainFactor(ad.diag(l), True), 1.0 / gamma,
                         (P1, P2), dims, pool, stride)


def _conv2d_layer(C2_hat, A12, B1, b, gain_in, gain, lam, P, dims, pool, stride) -> MaterializedLayer:
    c, ce, q1, q2 = dims
    n2 = ce * q2
    C2, D = C2_hat[:, :n2], C2_hat[:, n2:]
    taps = _unpack(_taps_2d((A12, B1, C2, D), dims), stride)
    return MaterializedLayer(
        kind="conv2d",
        weight=taps,
        bias=b,
        gain_in=gain_in,
        gain=gain,
        lam=lam,
        P=P,
        blocks={"A12": A12, "B1": B1, "C2": C2, "D": D},
        dims=dims,
        pool=pool,
        stride=tuple(stride),
    )


# ─── 파라미터 shape / 초기화 ─────────────────────────────────

def param_shapes(pl: LayerPlan, n_out_gain: Optional[int] = None) -> Dict[str, Tuple[int, ...]]:
    """레이어 계획 → 자유변수 이름별 shape"""
    c = pl.c_out
    if pl.kind in ("fc", "last"):
        shapes = {"Y": (c, c), "Z": (pl.n_in, c)}
        if pl.kind == "fc":
            shapes["gamma_log"] = (c,)
        shapes["b"] = (c,)
        return shapes

    ce = pl.c_eff
    is_max = pl.pool is not None and pl.pool.kind == "max"
    if pl.spatial_dims == 1:
        q = pl.order[1]
        n = ce * q
        if is_max:
            return {"Yt": (n + ce, c), "H": (n, n), "gamma_t": (c,), "l_log": (c,), "b": (c,)}
        return {"Y": (c, c), "Z": (n + ce, c), "H": (n, n), "gamma_log": (c,), "b": (c,)}

    q1, q2 = pl.order
    n1, n2 = c * q1, ce * q2
    common = {"H1": (n1, n1), "H2": (n2, n2), "A12": (n1, n2), "B1": (n1, ce), "delta": (c,)}
    if is_max:
        return {"Yt": (n2 + ce, c), **common, "omega": (c,), "q_log": (c,), "b": (c,)}
    return {"Y": (c, c), "Z": (n2 + ce, c), **common, "q_log": (c,), "b": (c,)}


_ONES = {"delta", "omega", "gamma_t"}
_ZEROS = {"gamma_log", "q_log", "l_log", "b"}


def init_params(plans: Sequence[LayerPlan], seed: int = 0, std: float = INIT_STD) -> Dict[str, np.ndarray]:
    """
    행렬 자유변수 ~ N(0, std²), γ_log = q_log = l_log = b = 0, δ = ω = γ̃ = 1

    Returns:
        {"layer{k}.{name}": ndarray}
    """
    rng = np.random.default_rng(seed)
    params: Dict[str, np.ndarray] = {}
    for k, pl in enumerate(plans):
        for name, shape in param_shapes(pl).items():
            if name in _ONES:
                value = np.ones(shape)
            elif name in _ZEROS:
                value = np.zeros(shape)
            else:
                value = std * rng.standard_normal(shape)
            params[f"layer{k}.{name}"] = value
    return params


def _params_cls(pl: LayerPlan):
    if pl.kind == "fc":
        return FcParams
    if pl.kind == "last":
        return LastFcParams
    is_max = pl.pool is not None and pl.pool.kind == "max"
    if pl.spatial_dims == 1:
        return Conv1dMaxParams if is_max else Conv1dParams
    return Conv2dMaxParams if is_max else Conv2dParams


def layer_pool(pl: LayerPlan) -> Optional[Pool]:
    if pl.pool is None:
        return None
    gain = pooling_gain(pl.pool.op, pl.pool_window, pl.pool_stride, pl.out_size)
    return Pool(pl.pool.op, pl.pool_window, pl.pool_stride, gain)


def materialize_layer(
    pl: LayerPlan,
    values: Dict[str, Tensor],
    gain_in: GainFactor,
    L_Q: Tensor,
    eps: float = DEFAULT_EPS,
) -> MaterializedLayer:
    """레이어 계획 + 자유변수 → MaterializedLayer"""
    p = _params_cls(pl)(**values)
    if pl.kind == "fc":
        return param_fc(p, gain_in, pl.expand)
    if pl.kind == "last":
        return param_last_fc(p, gain_in, L_Q, pl.expand)

    pool = layer_pool(pl)
    if pl.spatial_dims == 1:
        q, s = pl.order[1], pl.stride[1]
        if isinstance(p, Conv1dMaxParams):
            return param_conv1d_maxpool(p, gain_in, q, pool, s, eps)
        return param_conv1d(p, gain_in, q, pool, s, eps)
    if isinstance(p, Conv2dMaxParams):
        return param_conv2d_maxpool(p, gain_in, pl.order, pool, pl.stride, eps)
    return param_conv2d(p, gain_in, pl.order, pool, pl.stride, eps)


# ─── 네트워크 ───────────────────────────────────────────────

class LipNetwork:
    """
    φ-형식 네트워크 (학습 대상).

    L0 = chol(R) (기본 ρI), LQ = chol(Q) (기본 I).
    materialize() 는 매번 새 Tape 위에서 φ 를 레이어 가중치로 변환합니다.
    """

    def __init__(
        self,
        arch: Union[str, ArchSpec],
        input_shape: Sequence[int],
        rho: float = 1.0,
        L0: Optional[np.ndarray] = None,
        LQ: Optional[np.ndarray] = None,
        activation: str = "relu",
        eps: float = DEFAULT_EPS,
        padding: str = "same",
        params: Optional[Dict[str, np.ndarray]] = None,
        seed: int = 0,
    ):
        self.spec = parse_arch(arch) if isinstance(arch, str) else arch
        self.input_shape = tuple(int(v) for v in input_shape)
        self.plans: List[LayerPlan] = plan(self.spec, self.input_shape)
        self.activation = activation
        self.eps = eps
        self.padding = padding
        self.rho = float(rho)

        c0 = self.plans[0].c_in
        n_out = self.plans[-1].c_out
        self.L0 = np.array(L0, dtype=float) if L0 is not None else self.rho * np.eye(c0)
        self.LQ = np.array(LQ, dtype=float) if LQ is not None else np.eye(n_out)
        if self.L0.shape != (c0, c0) or self.LQ.shape != (n_out, n_out):
            raise ShapeMismatch(f"메트릭 인자 L0 {self.L0.shape}, LQ {self.LQ.shape} vs 입력 채널 {c0}, 출력 {n_out}")
        self.params = {k: np.array(v, dtype=float) for k, v in (params or init_params(self.plans, seed)).items()}

    @property
    def arch(self) -> str:
        return str(self.spec)

    def layer_values(self, k: int, source: Dict[str, Tensor]) -> Dict[str, Tensor]:
        prefix = f"layer{k}."
        return {name[len(prefix):]: v for name, v in source.items() if name.startswith(prefix)}

    def materialize(self, tape: Optional[ad.Tape] = None) -> Tuple[List[MaterializedLayer], Dict[str, ad.Var]]:
        """
        Returns:
            (레이어 목록, 이름 → leaf Var)
        """
        tape = tape or ad.Tape()
        leaves = {name: tape.leaf(v, name=name) for name, v in self.params.items()}
        gain = GainFactor(tape.constant(self.L0), False)
        L_Q = tape.constant(self.LQ)

        layers = []
        for k, pl in enumerate(self.plans):
            layer = materialize_layer(pl, self.layer_values(k, leaves), gain, L_Q, self.eps)
            layers.append(layer)
            gain = layer.gain
        return layers, leaves

    def forward_var(self, x: Tensor, layers: Sequence[MaterializedLayer]) -> ad.Var:
        """학습용 순전파 (pool ∘ σ ∘ conv, 마지막 fc 는 선형)"""
        tape = ad.tape_of(*(l.weight for l in layers))
        h = ad.lift(np.asarray(x, dtype=float) if not isinstance(x, ad.Var) else x, tape)
        if len(self.input_shape) == 2:
            h = ad.reshape(h, (h.shape[0], self.input_shape[0], 1, self.input_shape[1]))

        for layer in layers:
            if layer.kind in ("conv2d", "conv1d"):
                h = ad.conv2d(h, layer.weight, layer.stride, self.padding)
                h = ad.activation(ad.add_bias(h, layer.bias, axis=1), self.activation)
                if layer.pool is not None:
                    h = ad.pool2d(h, layer.pool.kind, layer.pool.window, layer.pool.stride)
                continue
            if h.ndim == 4:
                h = ad.flatten_pixels(h)
            h = ad.add_bias(h @ layer.weight.T, layer.bias, axis=1)
            if layer.kind == "fc":
                h = ad.activation(h, self.activation)
        return h

    def predict(self, x: np.ndarray) -> np.ndarray:
        layers, _ = self.materialize()
        return self.forward_var(x, layers).value
