"""
MNIST 학습 파이프라인

1. IDX 로드 (32×32 패딩, 학습 부분집합)
2. 학습 (lipkernel: φ 직접 파라미터화 / spectral: 스펙트럼 정규화 투영 / vanilla: 무제약)
3. 모델 파일 + 지표 CSV 저장
"""

import argparse
import sys
import time
from pathlib import Path

from dotenv import load_dotenv

from shared import config
from shared.data import load_mnist
from shared.model_file import from_lipnet, from_plain, save_model
from shared.notifier import Notifier
from shared.train import make_config, spectral_baseline_train, train, write_metrics_csv

notifier = Notifier(task_key="TRAIN", task_name="LipKernel 학습")


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--arch", default=config.ARCH_2C2F)
    parser.add_argument("--rho", type=float, default=1.0)
    config.add_metric_args(parser)
    parser.add_argument("--method", choices=["lipkernel", "spectral", "vanilla"], default="lipkernel")
    parser.add_argument("--epochs", type=int, default=3)
    parser.add_argument("--batch", type=int, default=64)
    parser.add_argument("--lr", type=float, default=1e-3)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--eps-gramian", type=float, default=None)
    parser.add_argument("--activation", choices=["relu", "tanh"], default="relu")
    parser.add_argument("--data-dir", default=None)
    parser.add_argument("--limit", type=int, default=10000, help="학습 샘플 수 (0이면 전체)")
    parser.add_argument("--test-limit", type=int, default=0, help="평가 샘플 수 (0이면 전체)")
    parser.add_argument("--out", default=None)


def run(args: argparse.Namespace) -> int:
    start_time = time.time()
    seed = config.seed() if args.seed is None else args.seed
    out = config.ensure_dir(args.out or config.out_dir())
    data_dir = args.data_dir or config.data_dir()

    cfg = make_config(
        arch=args.arch, rho=args.rho, lr=args.lr, epochs=args.epochs, batch_size=args.batch, seed=seed,
        eps_gramian=config.eps_gramian() if args.eps_gramian is None else args.eps_gramian,
        loss="ce", activation=args.activation,
    )

    print("=" * 60)
    print(f"학습 ({args.method})")
    print(f"arch: {cfg.arch}  ρ={cfg.rho}  epochs={cfg.epochs}  batch={cfg.batch_size}  seed={seed}")
    print("=" * 60)

    try:
        print("\n[1/3] 데이터 로드")
        train_set = load_mnist(data_dir, "train", args.limit or None)
        test_set = load_mnist(data_dir, "test", args.test_limit or None)
        print(f"  train {len(train_set)}개, test {len(test_set)}개, shape {train_set.input_shape}")

        print("\n[2/3] 학습")
        if args.method == "lipkernel":
            L0, LQ = config.metric_factors(args)
            net, metrics = train(cfg, train_set, eval_set=test_set, L0=L0, LQ=LQ)
            model = from_lipnet(net, {"method": args.method})
        else:
            plain, metrics = spectral_baseline_train(cfg, train_set, project=args.method == "spectral",
                                                     eval_set=test_set)
            model = from_plain(plain, {"method": args.method})

        print("\n[3/3] 저장")
        model_path = Path(out) / "model.lpkn"
        metrics_path = Path(out) / "metrics.csv"
        save_model(model_path, model)
        write_metrics_csv(metrics_path, metrics)
        print(f"  모델: {model_path}")
        print(f"  지표: {metrics_path}")

        duration = time.time() - start_time
        last = [m for m in metrics if m.split == "test"][-1:] or metrics[-1:]
        summary = {"method": args.method, "arch": cfg.arch, "rho": cfg.rho, "소요": f"{duration:.0f}초"}
        if last:
            summary["최종"] = f"{last[0].split} loss={last[0].loss:.4f} acc={last[0].accuracy:.4f}"
        notifier.send_summary("완료", summary)

        print(f"\n{'=' * 60}")
        print(f"학습 완료 ({duration:.0f}초)")
        print(f"{'=' * 60}")
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
