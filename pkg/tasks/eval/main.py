"""
평가: 깨끗한 정확도, ε 별 인증 정확도, 경험적 Lipschitz 하한, 인증 상한
"""

import argparse
import sys
from typing import Optional

from dotenv import load_dotenv
import numpy as np

from shared import cert, config
from shared.data import load_mnist
from shared.model_file import load_plain
from shared.nn import PlainNetwork, forward
from shared.train import predict_batched


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", required=True)
    parser.add_argument("--data-dir", default=None)
    parser.add_argument("--eps", default=None, help="쉼표 구분 ε 목록 (기본 36/255,72/255,108/255)")
    parser.add_argument("--limit", type=int, default=0, help="평가 샘플 수 (0이면 전체)")
    parser.add_argument("--trials", type=int, default=4, help="경험적 하한 시도 수 (0이면 생략)")
    parser.add_argument("--seed", type=int, default=None)


def certified_bound(net: PlainNetwork) -> Optional[float]:
    """유클리드 Lipschitz 상한 (인증서 또는 선언된 ρ)"""
    if net.L0 is not None and net.LQ is not None:
        return cert.lipschitz_bound(net.L0, net.LQ)
    return net.rho


def run(args: argparse.Namespace) -> int:
    seed = config.seed() if args.seed is None else args.seed
    eps_list = config.parse_eps_list(args.eps, config.CERT_EPS)
    net = load_plain(args.model)
    test_set = load_mnist(args.data_dir or config.data_dir(), "test", args.limit or None)

    logits = predict_batched(lambda x: forward(net, x), test_set.inputs)
    margins = cert.logit_margins(logits, test_set.targets)
    clean = float(np.mean(np.argmax(logits, axis=1) == test_set.targets))
    bound = certified_bound(net)

    print("=" * 60)
    print(f"평가: {args.model} ({len(test_set)}개)")
    print("=" * 60)
    print(f"{'항목':<24} {'값':>12}")
    print(f"{'clean accuracy':<24} {clean:>12.4f}")
    for eps in eps_list:
        value = f"{cert.certified_accuracy(margins, bound, eps):.4f}" if bound is not None else "-"
        print(f"{f'certified @ ε={eps:.4f}':<24} {value:>12}")
    if args.trials > 0:
        lb = cert.empirical_lipschitz(net, trials=args.trials, seed=seed)
        print(f"{'empirical LB':<24} {lb:>12.4f}")
    print(f"{'certified UB':<24} {(f'{bound:.4f}' if bound is not None else '-'):>12}")
    if net.certificate is not None:
        print(f"{'certificate':<24} {'CERTIFIED' if net.certificate.verdict else 'NOT CERTIFIED':>12}")
    return 0


if __name__ == "__main__":
    load_dotenv()
    parser = argparse.ArgumentParser(description=__doc__)
    add_arguments(parser)
    sys.exit(run(parser.parse_args()))
