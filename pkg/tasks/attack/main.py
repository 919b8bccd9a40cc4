"""
ℓ2 PGD 공격 정확도 표
"""

import argparse
import sys

from dotenv import load_dotenv
import numpy as np

from shared import config
from shared.data import load_mnist
from shared.model_file import load_plain
from shared.nn import forward
from shared.train import adversarial_accuracy, predict_batched


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", required=True)
    parser.add_argument("--data-dir", default=None)
    parser.add_argument("--eps", default=None, help="쉼표 구분 ε 목록 (기본 1,2,3)")
    parser.add_argument("--steps", type=int, default=10)
    parser.add_argument("--limit", type=int, default=1000, help="공격 샘플 수 (0이면 전체)")


def run(args: argparse.Namespace) -> int:
    eps_list = config.parse_eps_list(args.eps, config.PGD_EPS)
    net = load_plain(args.model)
    test_set = load_mnist(args.data_dir or config.data_dir(), "test", args.limit or None)

    logits = predict_batched(lambda x: forward(net, x), test_set.inputs)
    clean = float(np.mean(np.argmax(logits, axis=1) == test_set.targets))

    print("=" * 60)
    print(f"ℓ2 PGD 공격: {args.model} ({len(test_set)}개, {args.steps} steps)")
    print("=" * 60)
    print(f"{'ε':>8} {'accuracy':>10}")
    print(f"{0.0:>8.3f} {clean:>10.4f}")
    for eps in eps_list:
        acc = adversarial_accuracy(net, test_set, eps, args.steps)
        print(f"{eps:>8.3f} {acc:>10.4f}")
    return 0


if __name__ == "__main__":
    load_dotenv()
    parser = argparse.ArgumentParser(description=__doc__)
    add_arguments(parser)
    sys.exit(run(parser.parse_args()))
