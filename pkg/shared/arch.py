"""
아키텍처 문자열

문법: 점(.)으로 구분한 토큰 나열
    c(C,K,S)          합성곱 (출력 채널, 커널 크기, stride)
    p(av|max,K,S)     풀링 (직전 합성곱 레이어에 붙음)
    f(N)              전결합 (마지막 f가 출력 레이어)

예) "c(16,4,2).c(32,4,2).f(100).f(10)"  (2C2F)
    "c(16,4,1).p(av,2,2).c(32,4,1).p(av,2,2).f(100).f(10)"  (2CP2F)
"""

import re
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

from shared.errors import ArchShapeError, ArchSyntaxError


@dataclass(frozen=True)
class ConvToken:
    channels: int
    kernel: int
    stride: int


@dataclass(frozen=True)
class PoolToken:
    kind: str  # "av" | "max"
    window: int
    stride: int

    @property
    def op(self) -> str:
        """풀링 연산 이름 ("avg" | "max")"""
        return "avg" if self.kind == "av" else "max"


@dataclass(frozen=True)
class FcToken:
    units: int


Token = Union[ConvToken, PoolToken, FcToken]


@dataclass(frozen=True)
class ArchSpec:
    tokens: Tuple[Token, ...]

    def __str__(self) -> str:
        return render_arch(self)


# ─── 파싱 ───────────────────────────────────────────────────

_TOKEN_RE = re.compile(r"([cpf])\(([^()]*)\)")
_INT_RE = re.compile(r"\s*([0-9]+)\s*$")


def _parse_int(text: str, pos: int) -> int:
    m = _INT_RE.match(text)
    if not m:
        raise ArchSyntaxError(f"정수가 필요합니다: '{text.strip()}'", pos)
    return int(m.group(1))


def parse_arch(s: str) -> ArchSpec:
    """
    Raises:
        ArchSyntaxError: 문법 오류 (position: 문제 토큰의 0-based 시작 위치)
    """
    if not s or not s.strip():
        raise ArchSyntaxError("빈 아키텍처 문자열", 0)

    tokens: List[Token] = []
    pos = 0
    while True:
        m = _TOKEN_RE.match(s, pos)
        if not m:
            raise ArchSyntaxError(f"알 수 없는 토큰: '{s[pos:pos + 12]}'", pos)
        kind, body = m.group(1), m.group(2)
        args = body.split(",")
        arg_pos = m.start(2)

        if kind == "c":
            if len(args) != 3:
                raise ArchSyntaxError(f"c(C,K,S)는 인자 3개가 필요합니다 (받음: {len(args)})", m.start())
            vals = [_parse_int(a, arg_pos) for a in args]
            tokens.append(ConvToken(*vals))
        elif kind == "p":
            if len(args) != 3:
                raise ArchSyntaxError(f"p(kind,K,S)는 인자 3개가 필요합니다 (받음: {len(args)})", m.start())
            pool_kind = args[0].strip()
            if pool_kind not in ("av", "max"):
                raise ArchSyntaxError(f"풀링 종류는 av 또는 max: '{pool_kind}'", arg_pos)
            tokens.append(PoolToken(pool_kind, _parse_int(args[1], arg_pos), _parse_int(args[2], arg_pos)))
        else:
            if len(args) != 1:
                raise ArchSyntaxError(f"f(N)는 인자 1개가 필요합니다 (받음: {len(args)})", m.start())
            tokens.append(FcToken(_parse_int(args[0], arg_pos)))

        pos = m.end()
        if pos == len(s):
            break
        if s[pos] != ".":
            raise ArchSyntaxError(f"토큰 사이에는 '.'가 필요합니다: '{s[pos]}'", pos)
        pos += 1

    return ArchSpec(tuple(tokens))


def render_arch(spec: ArchSpec) -> str:
    parts = []
    for t in spec.tokens:
        if isinstance(t, ConvToken):
            parts.append(f"c({t.channels},{t.kernel},{t.stride})")
        elif isinstance(t, PoolToken):
            parts.append(f"p({t.kind},{t.window},{t.stride})")
        else:
            parts.append(f"f({t.units})")
    return ".".join(parts)


# ─── 형상 체인 ──────────────────────────────────────────────

@dataclass(frozen=True)
class LayerPlan:
    """
    kind: "conv" | "fc" | "last"
    conv 는 항상 4-D 텐서 (B, C, H, W) 기준 (1-D 신호는 H = 1)
    fc 의 입력 특징 수 = c_in · expand (expand: 평탄화 직전 픽셀 수)
    """

    kind: str
    c_in: int
    c_out: int
    kernel: Tuple[int, int] = (1, 1)
    stride: Tuple[int, int] = (1, 1)
    in_size: Tuple[int, int] = (1, 1)
    out_size: Tuple[int, int] = (1, 1)
    pool: Optional[PoolToken] = None
    pool_out: Tuple[int, int] = (1, 1)
    expand: int = 1
    spatial_dims: int = 2

    @property
    def order(self) -> Tuple[int, int]:
        """space_to_depth 후 stride 1 실현의 커널 차수 (q1, q2)"""
        return (self.kernel[0] - 1) // self.stride[0], (self.kernel[1] - 1) // self.stride[1]

    @property
    def c_eff(self) -> int:
        """space_to_depth 후 입력 채널 수"""
        return self.c_in * self.stride[0] * self.stride[1]

    @property
    def pool_window(self) -> Tuple[int, int]:
        if self.pool is None:
            return (1, 1)
        return (1, self.pool.window) if self.spatial_dims == 1 else (self.pool.window, self.pool.window)

    @property
    def pool_stride(self) -> Tuple[int, int]:
        if self.pool is None:
            return (1, 1)
        return (1, self.pool.stride) if self.spatial_dims == 1 else (self.pool.stride, self.pool.stride)

    @property
    def n_in(self) -> int:
        return self.c_in * self.expand


def plan(spec: ArchSpec, input_shape: Sequence[int]) -> List[LayerPlan]:
    """
    입력 shape ((C, N1, N2) | (C, N) | (D,))에서 레이어별 형상 계산.

    Raises:
        ArchShapeError: 빈 아키텍처, 마지막 토큰이 f 가 아님, 풀링 위치 오류, fc 뒤 합성곱,
                        stride 로 나누어떨어지지 않는 크기, 창이 입력보다 크거나 stride 보다 작은 풀링,
                        출력 채널이 c_eff·(q+1) 을 넘는 최대 풀링 합성곱
    """
    tokens = list(spec.tokens)
    if not tokens:
        raise ArchShapeError("레이어가 하나 이상 필요합니다")
    if not isinstance(tokens[-1], FcToken):
        raise ArchShapeError("마지막 레이어는 f(N)이어야 합니다")

    shape = tuple(int(v) for v in input_shape)
    if len(shape) == 3:
        channels, size, dims = shape[0], (shape[1], shape[2]), 2
    elif len(shape) == 2:
        channels, size, dims = shape[0], (1, shape[1]), 1
    elif len(shape) == 1:
        channels, size, dims = shape[0], (1, 1), 0
    else:
        raise ArchShapeError(f"입력 shape {shape}는 (C,N1,N2), (C,N), (D,) 중 하나여야 합니다")

    plans: List[LayerPlan] = []
    spatial = dims > 0
    i = 0
    while i < len(tokens):
        t = tokens[i]
        if isinstance(t, PoolToken):
            raise ArchShapeError(f"{i}번째 토큰: 풀링은 합성곱 바로 뒤에만 올 수 있습니다")

        if isinstance(t, ConvToken):
            if not spatial:
                raise ArchShapeError(f"{i}번째 토큰: 전결합 뒤에 합성곱을 둘 수 없습니다")
            if min(t.channels, t.kernel, t.stride) < 1:
                raise ArchShapeError(f"{i}번째 토큰: 채널/커널/stride는 1 이상이어야 합니다")
            kernel = (1, t.kernel) if dims == 1 else (t.kernel, t.kernel)
            stride = (1, t.stride) if dims == 1 else (t.stride, t.stride)
            if size[0] % stride[0] or size[1] % stride[1]:
                raise ArchShapeError(f"{i}번째 토큰: 크기 {size}는 stride {t.stride}로 나누어떨어지지 않습니다")
            out = (size[0] // stride[0], size[1] // stride[1])

            pool, pool_out = None, out
            if i + 1 < len(tokens) and isinstance(tokens[i + 1], PoolToken):
                pool = tokens[i + 1]
                win = (1, pool.window) if dims == 1 else (pool.window, pool.window)
                pst = (1, pool.stride) if dims == 1 else (pool.stride, pool.stride)
                if pool.window < 1 or pool.stride < 1 or win[0] > out[0] or win[1] > out[1]:
                    raise ArchShapeError(f"{i + 1}번째 토큰: 풀링 창 {pool.window}가 입력 {out}에 맞지 않습니다")
                if pool.window < pool.stride:
                    raise ArchShapeError(f"{i + 1}번째 토큰: 풀링 창 {pool.window}가 stride {pool.stride}보다 작습니다")
                pool_out = ((out[0] - win[0]) // pst[0] + 1, (out[1] - win[1]) // pst[1] + 1)
                i += 1

            plans.append(LayerPlan("conv", channels, t.channels, kernel, stride, size, out,
                                   pool, pool_out, 1, dims))
            if pool is not None and pool.op == "max":
                rows = plans[-1].c_eff * (plans[-1].order[1] + 1)
                if t.channels > rows:
                    raise ArchShapeError(
                        f"{i - 1}번째 토큰: 최대 풀링 합성곱의 출력 채널 {t.channels}이 "
                        f"c_eff·(q+1) = {rows}를 넘습니다"
                    )
            channels, size = t.channels, pool_out

        else:
            if t.units < 1:
                raise ArchShapeError(f"{i}번째 토큰: 유닛 수는 1 이상이어야 합니다")
            expand = size[0] * size[1] if spatial else 1
            kind = "last" if i == len(tokens) - 1 else "fc"
            plans.append(LayerPlan(kind, channels, t.units, expand=expand, spatial_dims=dims if spatial else 0))
            channels, size, spatial = t.units, (1, 1), False
        i += 1

    return plans
