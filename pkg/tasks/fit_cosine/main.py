"""
cosine 회귀: LipKernel vs 스펙트럼 정규화 vs 손으로 만든 Lipschitz-1 네트워크

1. [−π/2, π/2] 균등 샘플 생성
2. 두 방법 학습 (ρ=1, tanh, MSE)
3. 예측 곡선 CSV + MSE 표
"""

import argparse
import csv
import sys
import time
from pathlib import Path

from dotenv import load_dotenv
import numpy as np

from shared import config
from shared.data import cosine_dataset, cosine_grid
from shared.nn import forward
from shared.notifier import Notifier
from shared.train import cosine_config, hand_cosine_network, mse_of, spectral_baseline_train, train

notifier = Notifier(task_key="FIT_COSINE", task_name="LipKernel cosine 회귀")


def _silent(_: str) -> None:
    return None


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epochs", type=int, default=500)
    parser.add_argument("--rho", type=float, default=1.0)
    parser.add_argument("--lr", type=float, default=0.05)
    parser.add_argument("--batch", type=int, default=50)
    parser.add_argument("--n", type=int, default=200, help="학습 샘플 수")
    parser.add_argument("--grid", type=int, default=101, help="예측 곡선 점 수")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None)


def run(args: argparse.Namespace) -> int:
    start_time = time.time()
    seed = config.seed() if args.seed is None else args.seed
    out = config.ensure_dir(args.out or config.out_dir())
    cfg = cosine_config(epochs=args.epochs, lr=args.lr, batch_size=args.batch, seed=seed, rho=args.rho)

    print("=" * 60)
    print(f"cosine 회귀: n={args.n} epochs={cfg.epochs} lr={cfg.lr} ρ={cfg.rho}")
    print("=" * 60)

    try:
        print("\n[1/3] 데이터")
        data = cosine_dataset(args.n, seed)

        print("\n[2/3] 학습")
        lipnet, _ = train(cfg, data, log=_silent)
        print("  lipkernel 완료")
        spectral, _ = spectral_baseline_train(cfg, data, project=True, log=_silent)
        print("  spectral 완료")
        hand = hand_cosine_network()

        predictors = {
            "lipkernel": lipnet.predict,
            "spectral": lambda x: forward(spectral, x),
            "hand": lambda x: forward(hand, x),
        }

        print("\n[3/3] 결과")
        grid = cosine_grid(args.grid)
        csv_path = Path(out) / "cosine_predictions.csv"
        columns = {name: np.asarray(fn(grid)).reshape(-1) for name, fn in predictors.items()}
        with open(csv_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["x", "target", *predictors])
            for i, x in enumerate(grid[:, 0]):
                writer.writerow([f"{x:.6f}", f"{np.cos(x):.6f}", *(f"{columns[k][i]:.6f}" for k in predictors)])

        print(f"{'method':<12} {'mse':>12}")
        mses = {}
        for name, fn in predictors.items():
            mses[name] = mse_of(fn, data)
            print(f"{name:<12} {mses[name]:>12.6f}")
        print(f"\n  CSV: {csv_path}")

        duration = time.time() - start_time
        notifier.send_summary("완료", {**{k: f"{v:.6f}" for k, v in mses.items()}, "소요": f"{duration:.0f}초"})
        return 0

    except Exception as e:
        duration = time.time() - start_time
        notifier.send("실패", f"{type(e).__name__}: {e}\n소요: {duration:.0f}초")
        raise


if __name__ == "__main__":
    load_dotenv()
    parser = argparse.ArgumentParser(description=__doc__)
    add_arguments(parser)
    sys.exit(run(parser.parse_args()))
