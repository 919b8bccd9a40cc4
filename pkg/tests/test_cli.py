import csv

import pytest

from main import build_parser, main
from shared import config
from shared.errors import InvalidConfig


@pytest.fixture
def trained(tmp_path, synthetic_mnist):
    out = tmp_path / "out"
    code = main(["train", "--arch", "c(2,4,2).f(10)", "--epochs", "1", "--batch", "8", "--limit", "0",
                 "--data-dir", str(synthetic_mnist), "--out", str(out), "--seed", "0"])
    assert code == 0
    return out


def test_parser_lists_commands():
    parser = build_parser()
    args = parser.parse_args(["bench", "--engine", "kernel"])
    assert args.command == "bench"
    with pytest.raises(SystemExit):
        parser.parse_args([])


def test_train_writes_model_and_metrics(trained):
    assert (trained / "model.lpkn").exists()
    with open(trained / "metrics.csv", newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["epoch", "split", "loss", "accuracy"]
    assert [r[1] for r in rows[1:]] == ["train", "test"]


def test_certify_export_and_certify_kernel(trained, capsys):
    model = str(trained / "model.lpkn")
    assert main(["certify", "--model", model]) == 0
    assert "CERTIFIED" in capsys.readouterr().out

    assert main(["export", "--model", model, "--out", str(trained)]) == 0
    assert (trained / "model_kernel.lpkn").exists()
    assert "verdict=CERTIFIED" in (trained / "certificate.txt").read_text(encoding="utf-8")

    assert main(["certify", "--model", str(trained / "model_kernel.lpkn")]) == 0
    assert "verdict=CERTIFIED" in capsys.readouterr().out


def test_eval_and_attack(trained, synthetic_mnist, capsys):
    model = str(trained / "model.lpkn")
    assert main(["eval", "--model", model, "--data-dir", str(synthetic_mnist), "--trials", "1"]) == 0
    out = capsys.readouterr().out
    assert "clean accuracy" in out
    assert "certified UB" in out

    assert main(["attack", "--model", model, "--data-dir", str(synthetic_mnist),
                 "--steps", "2", "--eps", "1", "--limit", "0"]) == 0
    assert "1.000" in capsys.readouterr().out


def test_spectral_baseline_kernel_file_has_no_certificate(tmp_path, synthetic_mnist):
    out = tmp_path / "spectral"
    assert main(["train", "--arch", "c(2,4,2).f(10)", "--method", "spectral", "--epochs", "1",
                 "--limit", "0", "--data-dir", str(synthetic_mnist), "--out", str(out)]) == 0
    assert main(["certify", "--model", str(out / "model.lpkn")]) == 1


def test_bench_writes_csv(tmp_path):
    assert main(["bench", "--engine", "both", "--reps", "1", "--warmup", "0", "--inits", "1",
                 "--out", str(tmp_path)]) == 0
    with open(tmp_path / "bench_point.csv", newline="") as f:
        rows = list(csv.reader(f))
    assert len(rows) == 3
    assert {r[0] for r in rows[1:]} == {"kernel", "fourier"}


def test_fit_cosine_writes_predictions(tmp_path):
    assert main(["fit-cosine", "--epochs", "2", "--n", "20", "--grid", "5", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "cosine_predictions.csv", newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["x", "target", "lipkernel", "spectral", "hand"]
    assert len(rows) == 6


def test_bad_model_file_exits_with_error(tmp_path, capsys):
    bad = tmp_path / "bad.lpkn"
    bad.write_bytes(b"not a model")
    assert main(["certify", "--model", str(bad)]) == 1
    assert "[오류]" in capsys.readouterr().err
    assert main(["certify", "--model", str(tmp_path / "missing.lpkn")]) == 1


def test_missing_data_dir(tmp_path):
    assert main(["train", "--epochs", "1", "--data-dir", str(tmp_path / "nowhere"), "--out", str(tmp_path)]) == 1


def test_parse_eps_list():
    assert config.parse_eps_list("36/255, 0.5", (1.0,)) == pytest.approx((36 / 255, 0.5))
    assert config.parse_eps_list(None, (1.0,)) == (1.0,)
    with pytest.raises(InvalidConfig):
        config.parse_eps_list("a/b", (1.0,))
