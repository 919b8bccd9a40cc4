"""
역방향 자동미분 (동적 테이프)

φ → 레이어 가중치 → 네트워크 손실 전체를 미분하기 위한 행렬 연산 집합입니다.
매 학습 스텝마다 새 Tape를 만들고, 연산은 입력 뒤에 추가되므로 노드 순서가 곧 위상 순서입니다.

사용법:
    tape = Tape()
    W = tape.leaf(np.ones((2, 2)), name="W")
    loss = ad.sum(ad.square(W @ x))
    grads = tape.backward(loss)
    grads[W]
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from shared import linalg, statespace
from shared.errors import NotScalarLoss, ShapeMismatch

ArrayLike = Union[np.ndarray, float, int]
VJP = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class _Node:
    kind: str
    inputs: Tuple[int, ...]
    value: np.ndarray
    vjp: Optional[VJP]
    name: Optional[str] = None
    is_leaf: bool = False


class Var:
    """테이프 위 노드 핸들 (node id + shape)"""

    __slots__ = ("tape", "id")
    __array_ufunc__ = None  # ndarray 이항 연산이 Var의 reflected 메서드로 위임되도록

    def __init__(self, tape: "Tape", node_id: int):
        self.tape = tape
        self.id = node_id

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.id].value

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def T(self) -> "Var":
        return transpose(self)

    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return hadamard(self, other)
    def __rmul__(self, other): return hadamard(other, self)
    def __truediv__(self, other): return div(self, other)
    def __rtruediv__(self, other): return div(other, self)
    def __matmul__(self, other): return matmul(self, other)
    def __rmatmul__(self, other): return matmul(other, self)
    def __neg__(self): return scale(self, -1.0)
    def __getitem__(self, key): return index(self, key)

    def __repr__(self) -> str:
        node = self.tape.nodes[self.id]
        return f"Var(id={self.id}, kind={node.kind}, shape={self.shape})"


class Tape:
    """append-only 노드 리스트"""

    def __init__(self):
        self.nodes: List[_Node] = []

    def leaf(self, value: ArrayLike, name: Optional[str] = None) -> Var:
        """학습 대상 변수 (gradient를 돌려받는 노드)"""
        arr = np.array(value, dtype=float)
        self.nodes.append(_Node("leaf", (), arr, None, name=name, is_leaf=True))
        return Var(self, len(self.nodes) - 1)

    def constant(self, value: ArrayLike) -> Var:
        arr = np.asarray(value, dtype=float)
        self.nodes.append(_Node("const", (), arr, None))
        return Var(self, len(self.nodes) - 1)

    def record(self, kind: str, inputs: Sequence[Var], value: np.ndarray, vjp: VJP) -> Var:
        self.nodes.append(_Node(kind, tuple(v.id for v in inputs), np.asarray(value, dtype=float), vjp))
        return Var(self, len(self.nodes) - 1)

    def leaves(self) -> List[Var]:
        return [Var(self, i) for i, n in enumerate(self.nodes) if n.is_leaf]

    def backward(self, loss: Var) -> Dict[Var, np.ndarray]:
        return backward(self, loss)


class _GradMap(dict):
    """Var 키 dict (Var는 identity hash라서 id 기준으로 다시 조회)"""

    def __init__(self, by_id: Dict[int, np.ndarray], tape: Tape):
        super().__init__()
        self._by_id = by_id
        self._tape = tape
        for i, g in by_id.items():
            super().__setitem__(Var(tape, i), g)

    def __getitem__(self, var: Var) -> np.ndarray:
        return self._by_id[var.id]

    def __contains__(self, var) -> bool:
        return isinstance(var, Var) and var.id in self._by_id

    def named(self) -> Dict[str, np.ndarray]:
        return {self._tape.nodes[i].name: g for i, g in self._by_id.items() if self._tape.nodes[i].name}


def backward(tape: Tape, loss: Var) -> Dict[Var, np.ndarray]:
    """
    역방향 누적. 모든 leaf에 대한 gradient를 반환 (loss와 무관한 leaf는 0).

    Raises:
        NotScalarLoss: loss가 스칼라가 아님
    """
    if loss.value.size != 1:
        raise NotScalarLoss(f"loss shape {loss.shape}는 스칼라가 아닙니다")

    adj: Dict[int, np.ndarray] = {loss.id: np.ones_like(loss.value)}
    for node_id in range(loss.id, -1, -1):
        g = adj.get(node_id)
        node = tape.nodes[node_id]
        if g is None or node.vjp is None:
            continue
        for parent, pg in zip(node.inputs, node.vjp(g)):
            if pg is None:
                continue
            pg = np.reshape(pg, tape.nodes[parent].value.shape)
            if parent in adj:
                adj[parent] = adj[parent] + pg
            else:
                adj[parent] = pg

    grads = {
        i: adj.get(i, np.zeros_like(n.value))
        for i, n in enumerate(tape.nodes) if n.is_leaf
    }
    return _GradMap(grads, tape)


# ─── 내부 헬퍼 ───────────────────────────────────────────────

def tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return Tape()


def lift(x, tape: Tape) -> Var:
    """ndarray/스칼라를 상수 노드로 올림"""
    if isinstance(x, Var):
        if x.tape is not tape:
            raise ShapeMismatch("서로 다른 Tape의 Var를 섞을 수 없습니다")
        return x
    return tape.constant(x)


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=float)


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    # 스칼라 피연산자만 broadcast 허용
    if g.shape == shape:
        return g
    return np.sum(g).reshape(shape)


def _check_elementwise(a: Var, b: Var, op: str) -> None:
    if a.shape != b.shape and a.value.size != 1 and b.value.size != 1:
        raise ShapeMismatch(f"{op}: {a.shape} vs {b.shape}")


def _outer_or_matmul(g: np.ndarray, x: np.ndarray) -> np.ndarray:
    """g·xᵀ (x가 벡터면 외적)"""
    if x.ndim == 1:
        return np.outer(g, x)
    return g @ x.T


# ─── 기본 연산 ───────────────────────────────────────────────

def add(a, b) -> Var:
    tape = tape_of(a, b)
    a, b = lift(a, tape), lift(b, tape)
    _check_elementwise(a, b, "add")
    sa, sb = a.shape, b.shape
    return tape.record("add", (a, b), a.value + b.value,
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Var:
    tape = tape_of(a, b)
    a, b = lift(a, tape), lift(b, tape)
    _check_elementwise(a, b, "sub")
    sa, sb = a.shape, b.shape
    return tape.record("sub", (a, b), a.value - b.value,
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def hadamard(a, b) -> Var:
    tape = tape_of(a, b)
    a, b = lift(a, tape), lift(b, tape)
    _check_elementwise(a, b, "hadamard")
    av, bv = a.value, b.value
    return tape.record("hadamard", (a, b), av * bv,
                       lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def div(a, b) -> Var:
    tape = tape_of(a, b)
    a, b = lift(a, tape), lift(b, tape)
    _check_elementwise(a, b, "div")
    av, bv = a.value, b.value
    out = av / bv
    return tape.record("div", (a, b), out,
                       lambda g: (_unbroadcast(g / bv, av.shape), _unbroadcast(-g * out / bv, bv.shape)))


def scale(x, s: float) -> Var:
    tape = tape_of(x)
    x = lift(x, tape)
    return tape.record("scale", (x,), s * x.value, lambda g: (s * g,))


def matmul(a, b) -> Var:
    tape = tape_of(a, b)
    a, b = lift(a, tape), lift(b, tape)
    av, bv = a.value, b.value
    if av.ndim not in (1, 2) or bv.ndim not in (1, 2) or av.shape[-1] != bv.shape[0]:
        raise ShapeMismatch(f"matmul: {av.shape} @ {bv.shape}")

    def vjp(g):
        if av.ndim == 1:
            return bv @ g, np.outer(av, g)
        return _outer_or_matmul(g, bv), av.T @ g

    return tape.record("matmul", (a, b), av @ bv, vjp)


def transpose(x) -> Var:
    tape = tape_of(x)
    x = lift(x, tape)
    return tape.record("transpose", (x,), x.value.T, lambda g: (g.T,))


def permute(x, axes: Sequence[int]) -> Var:
    tape = tape_of(x)
    x = lift(x, tape)
    inv = np.argsort(axes)
    return tape.record("permute", (x,), np.transpose(x.value, axes), lambda g: (np.transpose(g, inv),))


def reshape(x, shape: Sequence[int]) -> Var:
    tape = tape_of(x)
    x = lift(x, tape)
    old = x.shape
    return tape.record("reshape", (x,), x.value.reshape(shape), lambda g: (g.reshape(old),))


def concat(xs: Sequence, axis: int = 0) -> Var:
    tape = tape_of(*xs)
    xs = [lift(x, tape) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]
    return tape.record("concat", xs, np.concatenate([x.value for x in xs], axis=axis),
                       lambda g: tuple(np.split(g, splits, axis=axis)))


def block(rows: Sequence[Sequence]) -> Var:
    """[[A, B], [C, D]] 블록 행렬 조립 (모든 블록이 한 Tape를 공유)"""
    tape = tape_of(*(x for r in rows for x in r))
    lifted = [[lift(x, tape) for x in r] for r in rows]
    return concat([concat(r, axis=1) for r in lifted], axis=0)


def index(x, key) -> Var:
    """기본 slicing (행/열/블록 추출)"""
    tape = tape_of(x)
    x = lift(x, tape)
    shape = x.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, key, g)
        return (out,)

    return tape.record("index", (x,), x.value[key], vjp)


def gather(x, idx: np.ndarray) -> Var:
    """
    out.flat[k] = x.flat[idx.flat[k]] (idx < 0 이면 0).

    탭 재배치, stride 커널 펼치기 같은 선택/영채움 재배열을 하나의 연산으로 처리합니다.
    """
    tape = tape_of(x)
    x = lift(x, tape)
    idx = np.asarray(idx, dtype=np.int64)
    valid = idx >= 0
    flat = x.value.ravel()
    out = np.where(valid, flat[np.where(valid, idx, 0)], 0.0)
    size, shape = flat.size, x.shape

    def vjp(g):
        gx = np.zeros(size)
        np.add.at(gx, idx[valid], g[valid])
        return (gx.reshape(shape),)

    return tape.record("gather", (x,), out, vjp)


def index_map(fn: Callable[[np.ndarray], np.ndarray], shape: Tuple[int, ...]) -> np.ndarray:
    """선택/영채움 numpy 함수 fn을 gather 인덱스로 변환"""
    ids = np.arange(1, int(np.prod(shape)) + 1, dtype=float).reshape(shape)
    return np.rint(fn(ids)).astype(np.int64) - 1


def diag(v) -> Var:
    """벡터 → 대각행렬"""
    tape = tape_of(v)
    v = lift(v, tape)
    return tape.record("diag", (v,), np.diag(v.value), lambda g: (np.diag(g).copy(),))


def diag_part(x) -> Var:
    """행렬 → 대각 벡터"""
    tape = tape_of(x)
    x = lift(x, tape)
    n = x.shape[0]
    return tape.record("diag_part", (x,), np.diag(x.value).copy(), lambda g: (np.diag(g) if n else np.zeros((0, 0)),))


def kron_eye(n: int, x) -> Var:
    """I_n ⊗ X"""
    tape = tape_of(x)
    x = lift(x, tape)
    r, c = x.shape

    def vjp(g):
        return (np.einsum("iaib->ab", g.reshape(n, r, n, c)),)

    return tape.record("kron_eye", (x,), linalg.kron_eye(n, x.value), vjp)


def add_bias(x, b, axis: int = 1) -> Var:
    """x + b (b를 axis 방향으로 broadcast)"""
    tape = tape_of(x, b)
    x, b = lift(x, tape), lift(b, tape)
    if x.shape[axis] != b.shape[0]:
        raise ShapeMismatch(f"add_bias: {x.shape} axis={axis} vs {b.shape}")
    view = [1] * x.ndim
    view[axis] = -1
    others = tuple(i for i in range(x.ndim) if i != axis)
    return tape.record("add_bias", (x, b), x.value + b.value.reshape(view),
                       lambda g: (g, g.sum(axis=others)))


# ─── 원소별 연산 ─────────────────────────────────────────────

def _unary(kind: str, x, fn, dfn) -> Var:
    tape = tape_of(x)
    x = lift(x, tape)
    xv = x.value
    out = fn(xv)
    return tape.record(kind, (x,), out, lambda g: (g * dfn(xv, out),))


def exp(x) -> Var:
    return _unary("exp", x, np.exp, lambda xv, out: out)


def log(x) -> Var:
    return _unary("log", x, np.log, lambda xv, out: 1.0 / xv)


def tanh(x) -> Var:
    return _unary("tanh", x, np.tanh, lambda xv, out: 1.0 - out ** 2)


def relu(x) -> Var:
    # 0에서 subgradient 0
    return _unary("relu", x, lambda v: np.maximum(v, 0.0), lambda xv, out: (xv > 0).astype(float))


def abs(x) -> Var:  # noqa: A001
    return _unary("abs", x, np.abs, lambda xv, out: np.sign(xv))


def square(x) -> Var:
    return _unary("square", x, np.square, lambda xv, out: 2.0 * xv)


def sqrt(x) -> Var:
    return _unary("sqrt", x, np.sqrt, lambda xv, out: 0.5 / out)


def activation(x, kind: str) -> Var:
    if kind == "relu":
        return relu(x)
    if kind == "tanh":
        return tanh(x)
    if kind in ("identity", "none"):
        return x
    raise ShapeMismatch(f"지원하지 않는 활성함수: {kind}")


# ─── 축약 / 손실 ─────────────────────────────────────────────

def sum(x) -> Var:  # noqa: A001
    tape = tape_of(x)
    x = lift(x, tape)
    shape = x.shape
    return tape.record("sum", (x,), np.sum(x.value), lambda g: (np.full(shape, float(g)),))


def mean(x) -> Var:
    return scale(sum(x), 1.0 / max(value_of(x).size, 1))


def mse(pred, target) -> Var:
    """평균 제곱 오차 (target은 상수)"""
    tape = tape_of(pred)
    pred = lift(pred, tape)
    t = value_of(target).reshape(pred.shape)
    diff = pred.value - t
    n = diff.size
    return tape.record("mse", (pred,), np.mean(diff ** 2), lambda g: (float(g) * 2.0 * diff / n,))


def log_softmax_np(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(logits, labels: np.ndarray) -> Var:
    """배치 평균 cross-entropy (labels: 정수 클래스)"""
    tape = tape_of(logits)
    logits = lift(logits, tape)
    labels = np.asarray(labels, dtype=np.int64)
    logp = log_softmax_np(logits.value)
    rows = np.arange(labels.size)
    loss = -np.mean(logp[rows, labels])

    def vjp(g):
        grad = np.exp(logp)
        grad[rows, labels] -= 1.0
        return (float(g) * grad / labels.size,)

    return tape.record("cross_entropy", (logits,), loss, vjp)


# ─── 선형대수 연산 ───────────────────────────────────────────

def solve(a, b) -> Var:
    """일반 정방 A에 대한 A⁻¹B (Cayley의 (I+M)⁻¹)"""
    tape = tape_of(a, b)
    a, b = lift(a, tape), lift(b, tape)
    av = a.value
    x = np.linalg.solve(av, b.value) if av.size else np.zeros_like(b.value)

    def vjp(g):
        gb = np.linalg.solve(av.T, g) if av.size else np.zeros_like(g)
        return -_outer_or_matmul(gb, x), gb

    return tape.record("solve", (a, b), x, vjp)


def solve_psd(a, b) -> Var:
    tape = tape_of(a, b)
    a, b = lift(a, tape), lift(b, tape)
    av = a.value
    x = linalg.solve_psd(av, b.value)

    def vjp(g):
        gb = linalg.solve_psd(av, g)
        return linalg.symmetrize(-_outer_or_matmul(gb, x)), gb

    return tape.record("solve_psd", (a, b), x, vjp)


def inverse_psd(a) -> Var:
    """대칭 PD 역행렬 (adjoint: −A⁻ᵀ·Ḡ·A⁻ᵀ 대칭화)"""
    tape = tape_of(a)
    a = lift(a, tape)
    inv = linalg.inverse_psd(a.value)

    def vjp(g):
        return (-inv @ linalg.symmetrize(g) @ inv,)

    return tape.record("inverse_psd", (a,), inv, vjp)


def cholesky(a) -> Var:
    """
    A = LᵀL 인 상삼각 L. 입력은 (A+Aᵀ)/2 로 대칭화해서 분해합니다.

    adjoint는 하삼각 인자 Lc = Lᵀ 에 대한 표준 삼각계 공식:
        Φ = ½(tril(LcᵀḠc) + tril(LcᵀḠc, −1)ᵀ),  Ā = Lc⁻ᵀ Φ Lc⁻¹
    """
    tape = tape_of(a)
    a = lift(a, tape)
    L = linalg.cholesky(a.value)

    def vjp(g):
        if L.size == 0:
            return (np.zeros((0, 0)),)
        lc, glc = L.T, g.T
        phi = np.tril(lc.T @ glc)
        phi = 0.5 * (phi + np.tril(phi, -1).T)
        tmp = scipy.linalg.solve_triangular(lc.T, phi, lower=False)
        ga = scipy.linalg.solve_triangular(lc, tmp.T, lower=True, trans="T").T
        return (linalg.symmetrize(ga),)

    return tape.record("cholesky", (a,), L, vjp)


# ─── 합성곱 / 풀링 ───────────────────────────────────────────

def conv2d(x, taps, stride: Tuple[int, int] = (1, 1), padding: str = "causal") -> Var:
    """
    im2col 합성곱. x: (B, C_in, N1, N2), taps: (r1+1, r2+1, C_out, C_in)
    """
    tape = tape_of(x, taps)
    x, taps = lift(x, tape), lift(taps, tape)
    xv, kv = x.value, taps.value
    if xv.shape[1] != kv.shape[3]:
        raise ShapeMismatch(f"conv2d: 입력 채널 {xv.shape[1]} vs 커널 {kv.shape[3]}")
    r1, r2 = kv.shape[0] - 1, kv.shape[1] - 1
    cols = statespace.im2col(xv, r1, r2, stride, padding)
    out = statespace.conv_cols(cols, kv)

    def vjp(g):
        gcols = np.einsum("boij,uvoc->bijuvc", g, kv, optimize=True)
        gx = statespace.col2im(gcols, xv.shape, r1, r2, stride, padding)
        gk = np.einsum("boij,bijuvc->uvoc", g, cols, optimize=True)
        return gx, gk

    return tape.record("conv2d", (x, taps), out, vjp)


def pool2d(x, kind: str, window: Union[int, Tuple[int, int]], stride: Union[int, Tuple[int, int]]) -> Var:
    tape = tape_of(x)
    x = lift(x, tape)
    shape = x.shape
    out, arg = statespace.pool2d(x.value, kind, window, stride)
    return tape.record(f"{kind}_pool", (x,), out,
                       lambda g: (statespace.pool2d_backward(g, shape, kind, window, stride, arg),))


def flatten_pixels(x) -> Var:
    """(B, C, H, W) → (B, H·W·C), 픽셀 우선/채널 나중 순서"""
    b = value_of(x).shape[0]
    return reshape(permute(x, (0, 2, 3, 1)), (b, -1))


# ─── 기울기 검사 ─────────────────────────────────────────────

@dataclass
class GradCheckReport:
    max_rel_error: float
    passed: bool
    worst: Optional[Tuple[str, int]] = None
    details: Dict[str, float] = field(default_factory=dict)


def grad_check(
    f: Callable,
    point: Union[np.ndarray, Dict[str, np.ndarray]],
    step: float = 1e-4,
    tol: float = 1e-5,
) -> GradCheckReport:
    """
    역방향 gradient와 중앙 차분 비교.

    Args:
        f: Var (또는 이름→Var dict)를 받아 스칼라 Var를 반환하는 함수
        point: 평가 지점 (ndarray 또는 이름→ndarray dict)

    Returns:
        GradCheckReport (상대오차 = |g−ĝ| / max(1, |g|, |ĝ|))
    """
    named = isinstance(point, dict)
    base = {k: np.array(v, dtype=float) for k, v in (point.items() if named else [("x", point)])}

    def evaluate(values: Dict[str, np.ndarray], with_grad: bool = False):
        tape = Tape()
        leaves = {k: tape.leaf(v, name=k) for k, v in values.items()}
        out = f(leaves if named else leaves["x"])
        if not with_grad:
            return float(out.value)
        grads = tape.backward(out)
        return float(out.value), {k: grads[v] for k, v in leaves.items()}

    _, analytic = evaluate(base, with_grad=True)

    worst_err, worst = 0.0, None
    details = {}
    for k, v in base.items():
        key_err = 0.0
        for i in range(v.size):
            plus = {kk: vv.copy() for kk, vv in base.items()}
            minus = {kk: vv.copy() for kk, vv in base.items()}
            plus[k].flat[i] += step
            minus[k].flat[i] -= step
            # 실제로 반영된 간격 (x±h 반올림 포함)
            h2 = plus[k].flat[i] - minus[k].flat[i]
            numeric = (evaluate(plus) - evaluate(minus)) / h2
            exact = analytic[k].flat[i]
            err = np.abs(exact - numeric) / max(1.0, np.abs(exact), np.abs(numeric))
            key_err = max(key_err, err)
            if err > worst_err:
                worst_err, worst = err, (k, i)
        details[k] = float(key_err)

    return GradCheckReport(float(worst_err), bool(worst_err <= tol), worst, details)
