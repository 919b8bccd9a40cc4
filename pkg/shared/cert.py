"""
LMI 조립 / 네트워크 인증 / 경험적 Lipschitz 하한 / 인증 정확도

인증은 항상 파라미터화가 만든 자체 승수(Λ, P)를 사용합니다 (SDP 풀이 없음).
레이어 k 의 LMI 는 직전 레이어가 내보낸 X_{k−1} 을 X₋ 로 사용하고,
X₀ = L0ᵀL0 (= R), 마지막 레이어는 Q = LQᵀLQ 를 사용합니다.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from shared import linalg, statespace
from shared.errors import ChainMismatch, InvalidGeometry, ShapeMismatch

TOL_SCALE = 1e-8


# ─── 풀링 gain ───────────────────────────────────────────────

def _pair(v) -> Tuple[int, int]:
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def pooling_gain(kind: str, window, stride, input_size, seed: int = 0) -> float:
    """
    풀링 레이어의 Lipschitz 상수 ρ_p.

    avg: 명시적 선형 사상에 대한 멱반복 (겹치지 않는 창이면 1/√(k1k2))
    max: 겹치지 않으면 1, 겹치면 √(입력 픽셀이 속하는 최대 창 개수)

    Raises:
        InvalidGeometry: window < stride, 알 수 없는 kind, 입력보다 큰 창
    """
    (k1, k2), (s1, s2), (n1, n2) = _pair(window), _pair(stride), _pair(input_size)
    if k1 < s1 or k2 < s2:
        raise InvalidGeometry(f"풀링 window ({k1}, {k2})는 stride ({s1}, {s2}) 이상이어야 합니다")
    if k1 > n1 or k2 > n2:
        raise InvalidGeometry(f"풀링 window ({k1}, {k2})가 입력 ({n1}, {n2})보다 큽니다")

    kind = "avg" if kind == "av" else kind
    if kind == "avg":
        shape = (1, 1, n1, n2)

        def apply(x):
            return statespace.pool2d(x, "avg", (k1, k2), (s1, s2))[0]

        def apply_t(g):
            return statespace.pool2d_backward(g, shape, "avg", (k1, k2), (s1, s2), None)

        sigma, _ = linalg.power_iteration(apply, apply_t, shape, seed=seed)
        return sigma

    if kind == "max":
        o1 = statespace.pool_output_size(n1, k1, s1)
        o2 = statespace.pool_output_size(n2, k2, s2)
        counts = np.zeros((n1, n2))
        for i in range(o1):
            for j in range(o2):
                counts[s1 * i:s1 * i + k1, s2 * j:s2 * j + k2] += 1
        return float(math.sqrt(counts.max()))

    raise InvalidGeometry(f"지원하지 않는 풀링: {kind}")


# ─── LMI 조립 ───────────────────────────────────────────────

def _sym(m: np.ndarray) -> np.ndarray:
    return linalg.symmetrize(m)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeMismatch(msg)


def lmi_conv(
    realization: Union[statespace.Roesser2D, statespace.Roesser1D],
    P: Union[np.ndarray, Sequence[np.ndarray]],
    lam: np.ndarray,
    X_in: np.ndarray,
    X: np.ndarray,
    rho_p: float = 1.0,
) -> np.ndarray:
    """
    [[P − AᵀPA, −AᵀPB,       −CᵀΛ        ],
     [−BᵀPA,    X₋ − BᵀPB,   −DᵀΛ        ],
     [−ΛC,      −ΛD,         2Λ − ρ_p²X  ]]

    Args:
        P: 전체 P 또는 블록 튜플 (P1, P2)
        lam: Λ 대각 성분 (벡터) 또는 대각행렬
    """
    A, B, C, D = realization.A, realization.B, realization.C, realization.D
    if not isinstance(P, np.ndarray):
        P = linalg.block_diag(*P)
    Lam = np.diag(lam) if np.ndim(lam) == 1 else np.asarray(lam, dtype=float)
    n, cm, c = A.shape[0], B.shape[1], C.shape[0]
    _require(P.shape == (n, n), f"P {P.shape} vs 상태 차원 {n}")
    _require(X_in.shape == (cm, cm), f"X₋ {X_in.shape} vs c₋ {cm}")
    _require(X.shape == (c, c) and Lam.shape == (c, c), f"X {X.shape} / Λ {Lam.shape} vs c {c}")

    PA, PB = P @ A, P @ B
    M = np.block([
        [P - A.T @ PA, -A.T @ PB, -C.T @ Lam],
        [-B.T @ PA, X_in - B.T @ PB, -D.T @ Lam],
        [-Lam @ C, -Lam @ D, 2.0 * Lam - rho_p ** 2 * X],
    ])
    return _sym(M)


def expand_metric(X_in: np.ndarray, expand: int) -> np.ndarray:
    """I_N ⊗ X₋"""
    return linalg.kron_eye(expand, X_in) if expand > 1 else np.asarray(X_in, dtype=float)


def lmi_fc(W: np.ndarray, lam: np.ndarray, X_in: np.ndarray, X: np.ndarray, expand: int = 1) -> np.ndarray:
    """[[X̃₋, −WᵀΛ], [−ΛW, 2Λ − X]]"""
    Xt = expand_metric(X_in, expand)
    Lam = np.diag(lam) if np.ndim(lam) == 1 else np.asarray(lam, dtype=float)
    _require(W.shape == (Lam.shape[0], Xt.shape[0]), f"W {W.shape} vs Λ {Lam.shape} / X̃₋ {Xt.shape}")
    _require(X.shape == Lam.shape, f"X {X.shape} vs Λ {Lam.shape}")
    return _sym(np.block([[Xt, -W.T @ Lam], [-Lam @ W, 2.0 * Lam - X]]))


def lmi_last(W: np.ndarray, X_in: np.ndarray, Q: np.ndarray, expand: int = 1) -> np.ndarray:
    """X̃₋ − WᵀQW"""
    Xt = expand_metric(X_in, expand)
    _require(W.shape == (Q.shape[0], Xt.shape[0]), f"W {W.shape} vs Q {Q.shape} / X̃₋ {Xt.shape}")
    return _sym(Xt - W.T @ Q @ W)


# ─── 인증 ───────────────────────────────────────────────────

@dataclass
class LayerRecord:
    name: str
    dim: int
    min_eig: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.min_eig >= -self.tol


@dataclass
class Certificate:
    records: List[LayerRecord]
    L0: np.ndarray
    LQ: np.ndarray
    rho: Optional[float] = None
    meta: Dict[str, str] = field(default_factory=dict)

    @property
    def verdict(self) -> bool:
        return all(r.passed for r in self.records)

    @property
    def min_eig(self) -> float:
        return min((r.min_eig for r in self.records), default=float("inf"))

    def report(self) -> str:
        """사람이 읽는 표 + key=value 블록"""
        lines = [
            "=" * 60,
            "Lipschitz 인증 결과",
            "=" * 60,
            f"{'layer':<12} {'dim':>6} {'min eig':>14} {'tol':>10}  ok",
        ]
        for r in self.records:
            lines.append(f"{r.name:<12} {r.dim:>6} {r.min_eig:>14.6e} {r.tol:>10.2e}  {'Y' if r.passed else 'N'}")
        lines.append("-" * 60)
        bound = f"ρ = {self.rho:g}" if self.rho is not None else "(Q, R) 일반 메트릭"
        lines.append(f"상한: {bound}")
        lines.append(f"판정: {'CERTIFIED' if self.verdict else 'NOT CERTIFIED'}")
        lines.append("")
        lines.append(self.key_values())
        return "\n".join(lines)

    def key_values(self) -> str:
        kv = {
            "verdict": "CERTIFIED" if self.verdict else "NOT_CERTIFIED",
            "layers": str(len(self.records)),
            "min_eig": f"{self.min_eig:.12e}",
        }
        if self.rho is not None:
            kv["rho"] = repr(self.rho)
        for r in self.records:
            kv[f"{r.name}.dim"] = str(r.dim)
            kv[f"{r.name}.min_eig"] = f"{r.min_eig:.12e}"
        kv.update(self.meta)
        return "\n".join(f"{k}={v}" for k, v in kv.items())


def metric_rho(L0: np.ndarray, LQ: np.ndarray) -> Optional[float]:
    """R = ρ²I, Q = I 이면 ρ, 아니면 None"""
    L0, LQ = np.asarray(L0, dtype=float), np.asarray(LQ, dtype=float)
    if not np.allclose(LQ, np.eye(LQ.shape[0])):
        return None
    rho = float(L0[0, 0]) if L0.size else 1.0
    if rho > 0 and np.allclose(L0, rho * np.eye(L0.shape[0])):
        return rho
    return None


def lipschitz_bound(L0: np.ndarray, LQ: np.ndarray) -> float:
    """(Q, R) 인증에서 따라오는 유클리드 Lipschitz 상한 ‖L0‖₂·‖LQ⁻¹‖₂"""
    L0, LQ = np.asarray(L0, dtype=float), np.asarray(LQ, dtype=float)
    return float(np.linalg.norm(L0, 2) * np.linalg.norm(np.linalg.inv(LQ), 2))


def _record(name: str, M: np.ndarray, tol_scale: float) -> LayerRecord:
    tol = tol_scale * max(1.0, linalg.frobenius(M))
    return LayerRecord(name, M.shape[0], linalg.min_eig_sym(M), tol)


def certify_network(layers: Sequence, L0: np.ndarray, LQ: np.ndarray, tol_scale: float = TOL_SCALE) -> Certificate:
    """
    레이어별 LMI 최소 고유값 기록 + 판정.

    Args:
        layers: MaterializedLayer 목록 (ndarray 또는 Var)

    Raises:
        ChainMismatch: 연속 레이어 gain 크기 / 대각 플래그 불일치, 최대 풀링 앞 gain 이 대각이 아님
    """
    L0, LQ = np.asarray(L0, dtype=float), np.asarray(LQ, dtype=float)
    Q = LQ.T @ LQ
    records: List[LayerRecord] = []

    if not layers:
        records.append(_record("identity", L0.T @ L0 - Q, tol_scale))
        return Certificate(records, L0, LQ, metric_rho(L0, LQ))

    prev_L, prev_diag = L0, False
    for k, layer in enumerate(layers):
        layer = layer.numpy()
        name = f"layer{k}"
        if layer.gain_in.size != prev_L.shape[0] or layer.gain_in.diagonal != prev_diag:
            raise ChainMismatch(
                f"{name}: 입력 gain ({layer.gain_in.size}, diag={layer.gain_in.diagonal}) vs "
                f"직전 출력 ({prev_L.shape[0]}, diag={prev_diag})"
            )
        X_in = prev_L.T @ prev_L

        if layer.kind == "last":
            M = lmi_last(layer.weight, X_in, Q, layer.expand)
        elif layer.kind == "fc":
            M = lmi_fc(layer.weight, layer.lam, X_in, layer.gain.X, layer.expand)
        else:
            if layer.pool is not None and layer.pool.kind == "max":
                L = layer.gain.L
                if not layer.gain.diagonal or np.any(L != np.diag(np.diag(L))):
                    raise ChainMismatch(f"{name}: 최대 풀링 레이어의 출력 gain 은 대각이어야 합니다")
            rho_p = layer.pool.gain if layer.pool is not None else 1.0
            X_eff = linalg.kron_eye(layer.stride_count, X_in) if layer.stride_count > 1 else X_in
            M = lmi_conv(layer.realization(), layer.P, layer.lam, X_eff, layer.gain.X, rho_p)

        records.append(_record(name, M, tol_scale))
        prev_L, prev_diag = np.asarray(layer.gain.L, dtype=float), layer.gain.diagonal

    if layers[-1].kind != "last":
        records.append(_record("output", prev_L.T @ prev_L - Q, tol_scale))
    return Certificate(records, L0, LQ, metric_rho(L0, LQ))


# ─── 경험적 하한 / 견고성 지표 ─────────────────────────────────

def empirical_lipschitz(
    net,
    trials: int = 8,
    iters: int = 50,
    seed: int = 0,
    ascent_steps: int = 30,
    step: float = 0.05,
) -> float:
    """
    Lipschitz 하한 = max(자코비안 멱반복, ‖f(x+δ)−f(x)‖/‖δ‖ 경사 상승).

    Args:
        net: nn.PlainNetwork
    """
    from shared import autodiff as ad
    from shared import nn

    rng = np.random.default_rng(seed)
    shape = (1, *net.input_shape)
    best = 0.0

    for _ in range(trials):
        x = rng.uniform(0.0, 1.0, shape)
        v = rng.standard_normal(shape)
        v /= np.linalg.norm(v)
        sigma = 0.0
        for _ in range(iters):
            w = nn.jvp(net, x, v)
            sigma = float(np.linalg.norm(w))
            if sigma == 0.0:
                break
            g = nn.vjp(net, x, w)
            norm_g = np.linalg.norm(g)
            if norm_g == 0.0:
                break
            v = g / norm_g
        best = max(best, sigma)

        # 유한 섭동 비율 상승 (x, δ 동시)
        delta = 1e-2 * v
        for _ in range(ascent_steps):
            tape = ad.Tape()
            xv, dv = tape.leaf(x), tape.leaf(delta)
            diff = nn.forward_var(net, xv + dv) - nn.forward_var(net, xv)
            num = ad.sum(ad.square(diff))
            den = ad.sum(ad.square(dv))
            ratio_sq = num / den
            r = math.sqrt(max(float(ratio_sq.value), 0.0))
            best = max(best, r)
            grads = tape.backward(ratio_sq)
            gx, gd = grads[xv], grads[dv]
            nx, nd = np.linalg.norm(gx), np.linalg.norm(gd)
            if nx > 0:
                x = x + step * gx / nx
            if nd > 0:
                delta = delta + step * np.linalg.norm(delta) * gd / nd
            if not np.any(delta):
                break
    return best


def logit_margins(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """정답 logit − 나머지 최대 logit (오분류면 ≤ 0)"""
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    rows = np.arange(labels.size)
    correct = logits[rows, labels]
    others = logits.copy()
    others[rows, labels] = -np.inf
    return correct - others.max(axis=1)


def certified_accuracy(margins: np.ndarray, rho: float, eps: float) -> float:
    """margin > √2·ρ·ε 인 샘플 비율"""
    margins = np.asarray(margins, dtype=float)
    if margins.size == 0:
        return 0.0
    return float(np.mean(margins > math.sqrt(2.0) * rho * eps))
