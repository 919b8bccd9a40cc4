import pytest

from shared.arch import ConvToken, FcToken, PoolToken, parse_arch, plan, render_arch
from shared.config import ARCH_2C2F, ARCH_2CP2F
from shared.errors import ArchShapeError, ArchSyntaxError


def test_parse_2c2f():
    spec = parse_arch(ARCH_2C2F)
    assert spec.tokens == (ConvToken(16, 4, 2), ConvToken(32, 4, 2), FcToken(100), FcToken(10))


def test_parse_2cp2f():
    spec = parse_arch(ARCH_2CP2F)
    assert spec.tokens[1] == PoolToken("av", 2, 2)
    assert spec.tokens[1].op == "avg"
    assert len(spec.tokens) == 6


@pytest.mark.parametrize("text", [ARCH_2C2F, ARCH_2CP2F, "c(4,3,1).p(max,2,2).f(5)"])
def test_render_round_trip(text):
    spec = parse_arch(text)
    assert render_arch(spec) == text
    assert parse_arch(str(spec)) == spec


@pytest.mark.parametrize("text, position", [
    ("c(16,4)", 0),
    ("", 0),
    ("c(16,4,2)f(10)", 9),
    ("c(16,4,2).x(3)", 10),
    ("p(avg,2,2).f(1)", 2),
])
def test_syntax_errors_carry_position(text, position):
    with pytest.raises(ArchSyntaxError) as info:
        parse_arch(text)
    assert info.value.position == position


def test_plan_2c2f_on_mnist():
    plans = plan(parse_arch(ARCH_2C2F), (1, 32, 32))
    assert [p.kind for p in plans] == ["conv", "conv", "fc", "last"]
    assert plans[0].out_size == (16, 16) and plans[0].order == (1, 1) and plans[0].c_eff == 4
    assert plans[1].c_eff == 64 and plans[1].out_size == (8, 8)
    assert plans[2].expand == 64 and plans[2].n_in == 32 * 64
    assert plans[3].c_in == 100 and plans[3].c_out == 10


def test_plan_2cp2f_pool_sizes():
    plans = plan(parse_arch(ARCH_2CP2F), (1, 32, 32))
    assert plans[0].pool_out == (16, 16)
    assert plans[1].pool_out == (8, 8)
    assert plans[2].expand == 64


def test_plan_one_dimensional_signal():
    plans = plan(parse_arch("c(3,3,2).p(max,2,2).f(4)"), (2, 16))
    assert plans[0].spatial_dims == 1
    assert plans[0].kernel == (1, 3) and plans[0].stride == (1, 2)
    assert plans[0].pool_window == (1, 2)
    assert plans[1].expand == 4


@pytest.mark.parametrize("text, shape", [
    ("c(4,3,1)", (1, 8, 8)),             # 마지막이 f 가 아님
    ("f(4).c(2,3,1).f(1)", (1, 8, 8)),   # fc 뒤 합성곱
    ("p(av,2,2).f(1)", (1, 8, 8)),       # 합성곱 없이 풀링
    ("c(4,3,2).f(1)", (1, 7, 8)),        # stride 로 나누어떨어지지 않음
    ("c(4,3,1).p(av,9,1).f(1)", (1, 8, 8)),
    ("c(4,3,1).p(av,1,2).f(1)", (1, 8, 8)),   # 창이 stride 보다 작음
    ("c(16,4,1).p(max,2,2).f(10)", (1, 32, 32)),
    ("f(3)", (1, 2, 3, 4)),
])
def test_plan_shape_errors(text, shape):
    with pytest.raises(ArchShapeError):
        plan(parse_arch(text), shape)


@pytest.mark.parametrize("channels, ok", [(4, True), (5, False)])
def test_plan_maxpool_channel_limit(channels, ok):
    # c_eff = 1, q = 3 → Ỹ 는 4행
    text = f"c({channels},4,1).p(max,2,2).f(10)"
    if ok:
        assert plan(parse_arch(text), (1, 8, 8))[0].c_out == channels
    else:
        with pytest.raises(ArchShapeError, match="0번째 토큰"):
            plan(parse_arch(text), (1, 8, 8))


def test_plan_maxpool_limit_counts_space_to_depth_channels():
    # stride 2: c_eff = 4, q = 1 → 8행
    assert plan(parse_arch("c(8,4,2).p(max,2,2).f(3)"), (1, 8, 8))[0].c_eff == 4
    with pytest.raises(ArchShapeError):
        plan(parse_arch("c(9,4,2).p(max,2,2).f(3)"), (1, 8, 8))
    # 평균 풀링은 제한 없음
    assert plan(parse_arch("c(9,4,2).p(av,2,2).f(3)"), (1, 8, 8))[0].c_out == 9
