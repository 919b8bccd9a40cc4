"""
추론 시간 벤치마크: 커널 엔진 vs Fourier 직교 레이어
"""

import argparse
import csv
import sys
import time
from pathlib import Path

from dotenv import load_dotenv

from shared import config
from shared.nn import CSV_HEADER, ENGINES, SWEEPS, machine_metadata, run_sweep
from shared.notifier import Notifier

notifier = Notifier(task_key="BENCH", task_name="LipKernel 벤치마크")


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--engine", choices=[*ENGINES, "both"], default="both")
    parser.add_argument("--sweep", choices=list(SWEEPS), default="point")
    parser.add_argument("--reps", type=int, default=10)
    parser.add_argument("--warmup", type=int, default=2)
    parser.add_argument("--inits", type=int, default=3)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None)


def run(args: argparse.Namespace) -> int:
    start_time = time.time()
    seed = config.seed() if args.seed is None else args.seed
    engines = ENGINES if args.engine == "both" else (args.engine,)
    out = config.ensure_dir(args.out or config.out_dir())

    print("=" * 60)
    print(f"벤치마크: sweep={args.sweep} engines={','.join(engines)} reps={args.reps} inits={args.inits}")
    for key, value in machine_metadata().items():
        print(f"  {key}: {value}")
    print("=" * 60)

    try:
        results = run_sweep(args.sweep, engines, args.reps, args.warmup, args.inits, seed)

        csv_path = Path(out) / f"bench_{args.sweep}.csv"
        with open(csv_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(CSV_HEADER)
            for r in results:
                writer.writerow(r.row())

        print(f"{'engine':<8} {'c':>4} {'N':>4} {'k':>3} {'avg_ms':>10} {'std_ms':>10}")
        for r in results:
            print(f"{r.engine:<8} {r.channels:>4} {r.image:>4} {r.kernel:>3} {r.avg_ms:>10.3f} {r.std_ms:>10.3f}")
        print(f"\n  CSV: {csv_path}")

        duration = time.time() - start_time
        notifier.send_summary("완료", {"sweep": args.sweep, "행": len(results), "소요": f"{duration:.0f}초"})
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
