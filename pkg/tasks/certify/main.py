"""
인증: φ-형식 모델의 레이어별 LMI 최소 고유값과 판정 출력

커널 형식 모델은 승수가 없으므로 내보낼 때 저장된 인증 결과만 보여줍니다.
"""

import argparse
import sys

from dotenv import load_dotenv

from shared import cert
from shared.errors import ShapeMismatch
from shared.model_file import load_model, to_lipnet


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", required=True, help="모델 파일 (.lpkn)")
    parser.add_argument("--tol", type=float, default=cert.TOL_SCALE, help="허용 오차 배율 (−tol·max(1, ‖M‖_F))")


def run(args: argparse.Namespace) -> int:
    mf = load_model(args.model)

    if mf.flavor == "kernel":
        stored = mf.header.get("certificate")
        if not stored:
            raise ShapeMismatch(f"{args.model}: 커널 형식 모델에 저장된 인증 결과가 없습니다")
        print("[certify] 커널 형식 모델: 내보낼 때 저장된 인증 결과")
        for key, value in stored.items():
            print(f"{key}={value}")
        return 0 if stored.get("verdict") == "CERTIFIED" else 1

    net = to_lipnet(mf)
    layers, _ = net.materialize()
    certificate = cert.certify_network(layers, net.L0, net.LQ, args.tol)
    print(certificate.report())
    return 0 if certificate.verdict else 1


if __name__ == "__main__":
    load_dotenv()
    parser = argparse.ArgumentParser(description=__doc__)
    add_arguments(parser)
    sys.exit(run(parser.parse_args()))
