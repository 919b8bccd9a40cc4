"""
lipkernel CLI

    lipkernel train | certify | export | eval | attack | bench | fit-cosine

각 하위 명령은 tasks/<이름>/main.py 의 add_arguments / run 으로 위임합니다.
"""

import argparse
import sys
from typing import Optional, Sequence

from dotenv import load_dotenv

from shared.errors import LipKernelError
from tasks.attack import main as attack
from tasks.bench import main as bench
from tasks.certify import main as certify
from tasks.eval import main as evaluate
from tasks.export import main as export
from tasks.fit_cosine import main as fit_cosine
from tasks.train import main as train

COMMANDS = {
    "train": (train, "MNIST 학습 (lipkernel / spectral / vanilla)"),
    "certify": (certify, "레이어별 LMI 인증"),
    "export": (export, "φ-형식 → 커널 형식 내보내기"),
    "eval": (evaluate, "깨끗한 / 인증 정확도, Lipschitz 하한·상한"),
    "attack": (attack, "ℓ2 PGD 공격 정확도"),
    "bench": (bench, "추론 시간 벤치마크"),
    "fit-cosine": (fit_cosine, "cosine 회귀 비교"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lipkernel", description="Lipschitz 상한이 보장된 CNN")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (module, help_text) in COMMANDS.items():
        cmd = sub.add_parser(name, help=help_text)
        module.add_arguments(cmd)
        cmd.set_defaults(handler=module.run)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (LipKernelError, OSError) as e:
        print(f"[오류] {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
