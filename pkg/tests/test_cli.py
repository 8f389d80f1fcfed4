import csv
import io
import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from busnet import cli, synthetic

CONFIG = """\
[run]
seed = 5
[data]
image_size = 16
[dataset.syn]
root = data
[folds]
k = {k}
[train]
epochs = {epochs}
learning_rate = {lr}
[model.small]
family = plain_stack
stage_widths = 3
[model.res]
family = residual
optimizer = adam
learning_rate = 1e-3
stage_widths = 3
[ensemble]
m = 2
"""


def make_project(root: Path, k=5, lr="5e-4", n=30, epochs=1):
    synthetic.write_dataset(root / "data", n=n, size=16, seed=1)
    (root / "run.ini").write_text(CONFIG.format(k=k, lr=lr, epochs=epochs))
    return root / "run.ini"


@pytest.fixture(scope="module")
def project(tmp_path_factory):
    root = tmp_path_factory.mktemp("proj")
    return root, make_project(root)


@pytest.fixture(scope="module")
def cv_run(project):
    root, ini = project
    out = root / "runs"
    assert cli.main(["cv", "--config", str(ini), "--out", str(out)]) == cli.EXIT_OK
    (run,) = out.glob("cv-*")
    return run


def files_under(p: Path):
    return sorted(x for x in p.rglob("*") if x.is_file())


def test_no_command_is_usage_error(capsys):
    assert cli.main([]) == cli.EXIT_USAGE
    assert cli.main(["frobnicate"]) == cli.EXIT_USAGE
    assert cli.main(["cv"]) == cli.EXIT_USAGE
    assert cli.main(["ingest"]) == cli.EXIT_USAGE


def test_missing_config_file(tmp_path):
    assert cli.main(["cv", "--config", str(tmp_path / "nope.ini")]) != cli.EXIT_OK


def test_ingest_dry_run_writes_nothing(project, tmp_path, capsys):
    root, _ = project
    out = tmp_path / "o"
    assert cli.main(["ingest", f"syn={root / 'data'}", "--out", str(out), "--dry-run"]) == cli.EXIT_OK
    assert not out.exists()
    assert "Total" in capsys.readouterr().out


def test_ingest_writes_manifest(project, tmp_path):
    root, _ = project
    assert cli.main(["ingest", f"syn={root / 'data'}", "--out", str(tmp_path)]) == cli.EXIT_OK
    (d,) = tmp_path.glob("ingest-*")
    assert len((d / "manifest.csv").read_text().splitlines()) == 31


def test_ingest_two_roots_total_row(tmp_path, capsys):
    for origin, counts in (("d1", {"benign": 3, "malignant": 4}), ("d2", {"normal": 2, "benign": 1, "malignant": 2})):
        for cls, n in counts.items():
            d = tmp_path / origin / cls
            d.mkdir(parents=True)
            for i in range(n):
                Image.fromarray(np.full((4, 4), i * 10, np.uint8)).save(d / f"{i}.png")
    code = cli.main(["ingest", f"d1={tmp_path / 'd1'}", f"d2={tmp_path / 'd2'}", "--dry-run"])
    assert code == cli.EXIT_OK
    last = capsys.readouterr().out.strip().splitlines()[-1].split()
    assert last == ["Total", "2", "4", "6", "12"]


def test_single_class_is_data_error(tmp_path):
    d = tmp_path / "only" / "benign"
    d.mkdir(parents=True)
    for i in range(3):
        Image.fromarray(np.zeros((4, 4), np.uint8)).save(d / f"{i}.png")
    assert cli.main(["ingest", str(tmp_path / "only"), "--dry-run"]) == cli.EXIT_DATA


def test_cv_dry_run_writes_nothing(project, tmp_path, capsys):
    _, ini = project
    assert cli.main(["cv", "--config", str(ini), "--out", str(tmp_path / "o"), "--dry-run"]) == cli.EXIT_OK
    assert not (tmp_path / "o").exists()
    assert "10 training jobs" in capsys.readouterr().out


def test_cv_counting_contract(cv_run):
    assert len(list(cv_run.glob("fold*/*/checkpoint.bin"))) == 10
    assert len(list(cv_run.glob("fold*/*/metrics.json"))) == 10
    assert json.loads((cv_run / "run.json").read_text())["status"] == "complete"
    for name in ("small", "res"):
        assert (cv_run / "models" / name / "mean_metrics.json").exists()
    preds = sum(len(p.read_text().splitlines()) for p in cv_run.glob("fold*/small/predictions.jsonl"))
    assert preds == 30


def test_cv_config_persisted(cv_run):
    text = (cv_run / "config.ini").read_text()
    # fully defaulted: keys never written in the user file are present
    assert "momentum" in text and "translate_px" in text


def test_cv_rerun_is_byte_identical(project, cv_run, tmp_path):
    _, ini = project
    assert cli.main(["cv", "--config", str(ini), "--out", str(tmp_path)]) == cli.EXIT_OK
    (again,) = tmp_path.glob("cv-*")
    assert (again / "fold_plan.json").read_bytes() == (cv_run / "fold_plan.json").read_bytes()
    for ck in cv_run.glob("fold*/*/checkpoint.bin"):
        assert (again / ck.relative_to(cv_run)).read_bytes() == ck.read_bytes()


def test_seed_override_changes_plan(project, cv_run, tmp_path):
    _, ini = project
    assert cli.main(["cv", "--config", str(ini), "--seed", "6", "--out", str(tmp_path), "--dry-run"]) == 0
    assert cli.load_config(ini, 6).seed == 6
    assert cli.load_config(ini).seed == 5


def test_ensemble_and_report(cv_run, capsys):
    assert cli.main(["ensemble", str(cv_run)]) == cli.EXIT_OK
    (ens_dir,) = cv_run.parent.glob(f"{cv_run.name}-ensemble-*")
    votes = (ens_dir / "votes.jsonl").read_text().splitlines()
    assert len(votes) == 30
    for name in ("ensemble.json", "metrics.json", "confusion.csv", "roc.svg", "confusion.svg"):
        assert (ens_dir / name).exists()
    # the cv run itself is left untouched
    assert not list(cv_run.glob("ensemble*"))

    capsys.readouterr()
    assert cli.main(["report", str(cv_run), "--format", "csv"]) == cli.EXIT_OK
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 2 + 1
    small = json.loads((cv_run / "models" / "small" / "mean_metrics.json").read_text())
    assert float(rows[0]["accuracy"]) == small["accuracy"]
    assert float(rows[0]["sensitivity"]) == small["macro"]["sensitivity"]
    ens = json.loads((ens_dir / "metrics.json").read_text())
    assert float(rows[2]["accuracy"]) == ens["accuracy"]

    for fmt in ("text", "markdown"):
        assert cli.main(["report", str(ens_dir), "--format", fmt]) == cli.EXIT_OK
        out = capsys.readouterr().out
        assert "ensemble" in out and "small" in out


def test_ensemble_too_many_members(cv_run):
    assert cli.main(["ensemble", str(cv_run), "-m", "3"]) == cli.EXIT_USAGE


def test_ensemble_missing_run(tmp_path):
    assert cli.main(["ensemble", str(tmp_path / "nothing")]) == cli.EXIT_DATA


def test_training_failure_exit_code(tmp_path):
    ini = make_project(tmp_path, k=2, lr="1e300", n=12, epochs=3)
    code = cli.main(["cv", "--config", str(ini), "--out", str(tmp_path / "runs")])
    assert code == cli.EXIT_TRAIN
    (run,) = (tmp_path / "runs").glob("cv-*")
    meta = json.loads((run / "run.json").read_text())
    assert meta["status"] == "failed" and meta["failures"]
