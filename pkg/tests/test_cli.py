import json
import subprocess
import sys
from pathlib import Path

import pytest

from sctsvm import formats
from sctsvm.cli import main

ROOT = Path(__file__).resolve().parents[1]
FIXTURE = ROOT / "fixtures" / "drift5.csv"


def files(d: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def small_config(tmp_path) -> Path:
    doc = {
        "classes": [
            {"class_id": 1, "mean0": [0.0, 0.0], "covariance": [[0.2, 0.0], [0.0, 0.2]],
             "drift": {"kind": "linear", "terms": [[0.05, 0.0]]}, "samples": 30},
            {"class_id": 2, "mean0": [2.0, 2.0], "covariance": [[0.2, 0.0], [0.0, 0.2]], "samples": 30},
            {"class_id": 3, "mean0": [0.0, 3.0], "covariance": [[0.2, 0.0], [0.0, 0.2]], "samples": 30},
        ],
        "dates": [0, 10, 20, 30, 40],
        "reference_date": "2021-03-01",
    }
    path = tmp_path / "s.json"
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("sim")
    out = tmp / "sim"
    assert main(["simulate", "--config", str(small_config(tmp)), "--seed", "7", "--out", str(out)]) == 0
    return out


def test_simulate_is_byte_identical(tmp_path, sim):
    again = tmp_path / "again"
    assert main(["simulate", "--config", str(sim.parent / "s.json"), "--seed", "7", "--out", str(again)]) == 0
    assert files(again) == files(sim)
    assert {"samples.csv", "scenario.json", "manifest.json", "date_00000.csv"} <= set(files(sim))
    assert (sim / "samples.csv").read_text().startswith("# reference_date=2021-03-01\ndate,label,f1,f2\n")


def test_manifest_contents(sim):
    doc = json.loads((sim / "manifest.json").read_text())
    assert doc["tool"] == "sctsvm" and doc["command"] == "simulate" and doc["seed"] == 7
    assert "out" not in doc["config"] and "samples.csv" in doc["artifacts"]


def test_bootstrap_predict_finetune_chain(tmp_path, sim):
    early = [str(sim / f"date_{d:05d}.csv") for d in (0, 10, 20, 30)]
    assert main(["bootstrap", "--data", *early, "--window", "4", "--out", str(tmp_path / "b")]) == 0
    hs = formats.read_histories(tmp_path / "b" / "history.json")
    assert sorted(hs) == [(1, 2), (1, 3), (2, 3)] and all(len(h) == 4 for h in hs.values())

    assert main(["predict", "--history", str(tmp_path / "b" / "history.json"), "--date", "40",
                 "--order", "auto", "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "p" / "trend_models.json").exists()

    assert main(["finetune", "--predicted", str(tmp_path / "p" / "predicted.json"),
                 "--data", str(sim / "date_00040.csv"), "--nt", "5", "--C", "50", "--F", "20",
                 "--out", str(tmp_path / "f")]) == 0
    report = formats.read_json(tmp_path / "f" / "kkt_report.json")
    assert report  # one entry per pair
    assert (tmp_path / "f" / "finetuned.json").exists()


def test_run_on_canned_fixture(tmp_path):
    out = tmp_path / "r"
    argv = ["run", "--data", str(FIXTURE), "--window", "4", "--nt", "5", "--C", "50", "--F", "20", "--out", str(out)]
    assert main(argv) == 0
    names = set(files(out))
    assert {"results.csv", "manifest.json", "history.json"} <= names
    header = (out / "results.csv").read_text().splitlines()[0]
    assert header.startswith("trial,seed,date,method,overall_acc")
    assert main(argv[:-1] + [str(tmp_path / "r2")]) == 0
    assert files(tmp_path / "r2") == files(out)


def test_benchmark_and_replay_are_byte_identical(tmp_path):
    out = tmp_path / "bm"
    assert main(["benchmark", "--fixture", "paper_like", "--nt-list", "5", "--f-list", "0.1,20",
                 "--order-list", "1,auto", "--trials", "2", "--out", str(out)]) == 0
    rows = (out / "benchmark.csv").read_text().splitlines()
    assert rows[0].startswith("method,nt,F,C,order,trial,overall_acc,acc_1")
    assert len(rows) == 1 + 2 * (1 + 2 * 2)
    assert main(["replay", str(out / "manifest.json"), "--out", str(tmp_path / "again")]) == 0
    assert files(tmp_path / "again") == files(out)


def test_perturb_and_replay(tmp_path):
    sim = tmp_path / "ls"
    assert main(["simulate", "--fixture", "landsat_like", "--out", str(sim)]) == 0
    data = [str(sim / f"date_{d:05d}.csv") for d in (0, 16, 32)]
    out = tmp_path / "pt"
    assert main(["perturb", "--data", *data, "--band", "0.6:0.7", "--max-attempts", "500", "--out", str(out)]) == 0
    h = formats.read_histories(out / "perturbed.json")[(1, 2)]
    assert len(h) == 3 and all(0.6 <= e.accuracy <= 0.7 for e in h.entries)
    assert main(["replay", str(out / "manifest.json"), "--out", str(tmp_path / "pt2")]) == 0
    assert files(tmp_path / "pt2") == files(out)


def test_usage_errors_exit_1(tmp_path, capsys):
    assert main(["finetune", "--bogus"]) == 1
    assert main([]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["simulate", "--out", str(tmp_path)]) == 1
    assert "usage" in capsys.readouterr().err


def test_data_errors_exit_2(tmp_path, capsys):
    assert main(["bootstrap", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "o")]) == 2
    assert "sctsvm: E_IO:" in capsys.readouterr().err
    bad = tmp_path / "bad.csv"
    bad.write_text("date,label\n")
    assert main(["bootstrap", "--data", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "E_FORMAT" in capsys.readouterr().err
    sim = tmp_path / "ls"
    assert main(["simulate", "--fixture", "landsat_like", "--out", str(sim)]) == 0
    assert main(["perturb", "--data", str(sim / "date_00000.csv"), "--band", "0.999:1.0",
                 "--max-attempts", "5", "--out", str(tmp_path / "pt")]) == 2
    assert "sctsvm: E_BAND:" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "sctsvm.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("sctsvm ")
