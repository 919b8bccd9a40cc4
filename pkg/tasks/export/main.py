"""
내보내기: φ-형식 모델 → 커널 형식 모델 + 인증 보고서
"""

import argparse
import sys
import time
from pathlib import Path

from dotenv import load_dotenv

from shared import config
from shared.model_file import from_plain, load_model, save_model, to_lipnet
from shared.nn import export_plain
from shared.notifier import Notifier

notifier = Notifier(task_key="EXPORT", task_name="LipKernel 내보내기")


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", required=True, help="φ-형식 모델 파일")
    parser.add_argument("--out", default=None)


def run(args: argparse.Namespace) -> int:
    start_time = time.time()
    out = config.ensure_dir(args.out or config.out_dir())

    print("[1/2] 파라미터화 + 인증")
    plain = export_plain(to_lipnet(load_model(args.model)))
    report = plain.certificate.report()
    print(report)

    print("\n[2/2] 저장")
    model_path = Path(out) / "model_kernel.lpkn"
    report_path = Path(out) / "certificate.txt"
    save_model(model_path, from_plain(plain, {"source": str(args.model)}))
    report_path.write_text(report + "\n", encoding="utf-8")
    print(f"  모델: {model_path}")
    print(f"  인증서: {report_path}")

    verdict = "CERTIFIED" if plain.certificate.verdict else "NOT CERTIFIED"
    notifier.send_summary("완료", {"판정": verdict, "소요": f"{time.time() - start_time:.0f}초"})
    return 0 if plain.certificate.verdict else 1


if __name__ == "__main__":
    load_dotenv()
    parser = argparse.ArgumentParser(description=__doc__)
    add_arguments(parser)
    sys.exit(run(parser.parse_args()))
