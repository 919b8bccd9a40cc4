"""
CLI 기본값 (환경변수 → 플래그 기본값)

    LIPKERNEL_DATA_DIR      MNIST IDX 디렉토리 (기본 data/mnist)
    LIPKERNEL_OUT_DIR       산출물 디렉토리 (기본 out)
    LIPKERNEL_SEED          난수 시드 (기본 0)
    LIPKERNEL_EPS_GRAMIAN   Gramian 정칙화 ε (기본 1e-3)
"""

import argparse
import os
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from shared.errors import InvalidConfig
from shared.layers import DEFAULT_EPS
from shared.model_file import load_metric

ARCH_2C2F = "c(16,4,2).c(32,4,2).f(100).f(10)"
ARCH_2CP2F = "c(16,4,1).p(av,2,2).c(32,4,1).p(av,2,2).f(100).f(10)"
CERT_EPS = (36 / 255, 72 / 255, 108 / 255)
PGD_EPS = (1.0, 2.0, 3.0)


def _env(name: str, default: str) -> str:
    value = os.environ.get(name, "").strip()
    return value or default


def _env_number(name: str, default, cast):
    raw = _env(name, str(default))
    try:
        return cast(raw)
    except ValueError as e:
        raise InvalidConfig(f"환경변수 {name}={raw!r}를 해석할 수 없습니다") from e


def data_dir() -> str:
    return _env("LIPKERNEL_DATA_DIR", "data/mnist")


def out_dir() -> str:
    return _env("LIPKERNEL_OUT_DIR", "out")


def seed() -> int:
    return _env_number("LIPKERNEL_SEED", 0, int)


def eps_gramian() -> float:
    return _env_number("LIPKERNEL_EPS_GRAMIAN", DEFAULT_EPS, float)


def ensure_dir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


# ─── 공통 플래그 ─────────────────────────────────────────────

def add_metric_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--q-file", default=None, help="출력 메트릭 Cholesky 인자 L_Q (모델 파일 텐서)")
    parser.add_argument("--r-file", default=None, help="입력 메트릭 Cholesky 인자 L0 (모델 파일 텐서)")


def metric_factors(args: argparse.Namespace) -> Tuple[Optional[np.ndarray], Optional[np.ndarray]]:
    """(L0, LQ), 지정되지 않은 쪽은 None (기본 ρI / I)"""
    L0 = load_metric(args.r_file) if getattr(args, "r_file", None) else None
    LQ = load_metric(args.q_file) if getattr(args, "q_file", None) else None
    return L0, LQ


def parse_eps_list(text: Optional[str], default: Tuple[float, ...]) -> Tuple[float, ...]:
    """'0.1,36/255' → (0.1, 0.141...)"""
    if not text:
        return default
    values = []
    for part in text.split(","):
        part = part.strip()
        try:
            if "/" in part:
                num, den = part.split("/", 1)
                values.append(float(num) / float(den))
            else:
                values.append(float(part))
        except (ValueError, ZeroDivisionError) as e:
            raise InvalidConfig(f"ε 목록을 해석할 수 없습니다: {part!r}") from e
    return tuple(values)
