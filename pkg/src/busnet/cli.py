"""Command-line driver: ``ingest``, ``cv``, ``ensemble`` and ``report``.

Every command that produces output writes a fresh directory under the run
root (``--out``, else ``$HARNESS_RUN_ROOT``, else ``./runs``); existing run
directories are only ever read.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from busnet import ensemble as ens
from busnet.augment import AugmentPolicy, no_augmentation
from busnet.dataset import (
    DatasetError,
    DatasetManifest,
    FoldPlan,
    ingest,
    load_all,
    make_folds,
    merge,
    split_images,
    summary_table,
)
from busnet.labels import ClassLabel, class_names
from busnet.metrics import MetricsReport, accumulate, mean_report, report, roc
from busnet.neuralnet import ModelSpec, Prediction
from busnet.neuralnet import checkpoint
from busnet.optim import OptimizerConfig
from busnet.trainer import TrainConfig, TrainingError, evaluate, train

log = logging.getLogger("busnet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAIN = 0, 1, 2, 3

TRAIN_DEFAULTS = {
    "epochs": "15",
    "batch_size": "8",
    "optimizer": "sgdm",
    "learning_rate": "5e-05",
    "momentum": "0.9",
    "beta1": "0.9",
    "beta2": "0.999",
    "epsilon": "1e-08",
    "dtype": "float64",
    "augment": "true",
    "reflect_x_prob": "0.5",
    "reflect_y_prob": "0.5",
    "rotation_deg": "0, 360",
    "translate_px": "-30, 30",
    "scale": "0.9, 1.1",
}
MODEL_DEFAULTS = {
    "family": "plain_stack",
    "stage_widths": "8, 16",
    "stem_stride": "1",
    "input_mean": "0.0",
    "input_std": "1.0",
}
ENSEMBLE_DEFAULTS = {"m": "4", "tie_break": "summed_probability", "bagging": "shared_folds"}


class UsageError(Exception):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(" ", "").split(",") if v)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(" ", "").split(",") if v)


@dataclass
class ModelEntry:
    name: str
    spec: ModelSpec
    train: TrainConfig


@dataclass
class RunConfig:
    datasets: list[tuple[str, str]] = field(default_factory=list)  # (origin, root)
    manifest: Optional[str] = None
    exclude: tuple[str, ...] = ("*_mask*",)
    image_size: tuple[int, int] = (64, 64)
    channels: int = 1
    k: int = 5
    seed: int = 0
    stratified: bool = True
    models: list[ModelEntry] = field(default_factory=list)
    ensemble_m: int = 4
    tie_break: str = "summed_probability"
    bagging: str = "shared_folds"
    parser: Optional[configparser.ConfigParser] = None

    def train_config(self, model: ModelEntry, fold: int) -> TrainConfig:
        """Per-fold copy of the model's training config with its derived seed."""
        s = self.seed * 1000 + fold
        t = model.train
        aug = t.augment
        aug = AugmentPolicy(aug.reflect_x_prob, aug.reflect_y_prob, aug.rotation_range_deg,
                            aug.translate_range_px, aug.scale_range, s)
        return TrainConfig(t.spec, t.optimizer, aug, t.epochs, t.batch_size, s, t.dtype)


def _read_ini(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path) as f:
            cp.read_file(f)
    except FileNotFoundError:
        raise UsageError(f"config file {path} not found") from None
    except configparser.Error as e:
        raise UsageError(f"cannot parse {path}: {e}") from None
    return cp


def load_config(path, seed: Optional[int] = None) -> RunConfig:
    """Parse an INI run config, fill in defaults and return the explicit result.

    ``cfg.parser`` holds the fully defaulted file, which is what gets stored
    in the run directory.
    """
    src = _read_ini(path)
    base = Path(path).resolve().parent
    full = configparser.ConfigParser(interpolation=None)
    full.optionxform = str
    try:
        full["run"] = {"seed": src.get("run", "seed", fallback="0")}
        if seed is not None:
            full["run"]["seed"] = str(seed)
        data = dict(src["data"]) if src.has_section("data") else {}
        full["data"] = {
            "image_size": data.get("image_size", "64"),
            "channels": data.get("channels", "1"),
            "exclude": data.get("exclude", "*_mask*"),
        }
        if data.get("manifest"):
            full["data"]["manifest"] = str((base / data["manifest"]).resolve())
        datasets = []
        for sec in src.sections():
            if sec.startswith("dataset."):
                origin = sec.split(".", 1)[1]
                root = str((base / src[sec]["root"]).resolve())
                full[sec] = {"root": root}
                datasets.append((origin, root))
        folds = dict(src["folds"]) if src.has_section("folds") else {}
        full["folds"] = {"k": folds.get("k", "5"), "stratified": folds.get("stratified", "true")}
        train_sec = dict(TRAIN_DEFAULTS)
        if src.has_section("train"):
            train_sec.update(src["train"])
        full["train"] = train_sec
        ens_sec = dict(ENSEMBLE_DEFAULTS)
        if src.has_section("ensemble"):
            ens_sec.update(src["ensemble"])
        full["ensemble"] = ens_sec

        cfg = RunConfig(
            datasets=datasets,
            manifest=full["data"].get("manifest"),
            exclude=tuple(p.strip() for p in full["data"]["exclude"].split(",") if p.strip()),
            channels=full["data"].getint("channels"),
            k=full["folds"].getint("k"),
            seed=full["run"].getint("seed"),
            stratified=full["folds"].getboolean("stratified"),
            ensemble_m=full["ensemble"].getint("m"),
            tie_break=full["ensemble"]["tie_break"],
            bagging=full["ensemble"]["bagging"],
        )
        size = _ints(full["data"]["image_size"])
        cfg.image_size = (size[0], size[-1])

        for sec in src.sections():
            if not sec.startswith("model."):
                continue
            name = sec.split(".", 1)[1]
            merged = {**MODEL_DEFAULTS, **train_sec, **src[sec]}
            full[sec] = merged
            cfg.models.append(_model_entry(name, merged, cfg))
    except (KeyError, ValueError) as e:
        raise UsageError(f"invalid config {path}: {e}") from None
    if not cfg.models:
        raise UsageError(f"config {path} defines no [model.<name>] sections")
    if cfg.bagging not in ens.BAGGING_MODES:
        raise UsageError(f"unknown bagging mode {cfg.bagging!r}; expected one of {ens.BAGGING_MODES}")
    if cfg.tie_break not in ens.TIE_BREAKS:
        raise UsageError(f"unknown tie_break {cfg.tie_break!r}")
    if not cfg.datasets and not cfg.manifest:
        raise UsageError(f"config {path} names no [dataset.<origin>] section and no data.manifest")
    cfg.parser = full
    return cfg


def _model_entry(name: str, s: dict, cfg: RunConfig) -> ModelEntry:
    spec = ModelSpec(
        family=s["family"],
        input_hw=cfg.image_size,
        input_channels=cfg.channels,
        stage_widths=_ints(s["stage_widths"]),
        stem_stride=int(s["stem_stride"]),
        input_mean=float(s["input_mean"]),
        input_std=float(s["input_std"]),
    )
    opt = OptimizerConfig(
        kind=s["optimizer"],
        learning_rate=float(s["learning_rate"]),
        momentum=float(s["momentum"]),
        beta1=float(s["beta1"]),
        beta2=float(s["beta2"]),
        epsilon=float(s["epsilon"]),
    )
    if s["augment"].strip().lower() in ("1", "true", "yes", "on"):
        aug = AugmentPolicy(float(s["reflect_x_prob"]), float(s["reflect_y_prob"]), _floats(s["rotation_deg"]),
                            _floats(s["translate_px"]), _floats(s["scale"]), 0)
    else:
        aug = no_augmentation()
    tc = TrainConfig(spec, opt, aug, int(s["epochs"]), int(s["batch_size"]), 0, s["dtype"])
    return ModelEntry(name, spec, tc)


def run_root(out: Optional[str]) -> Path:
    return Path(out or os.environ.get("HARNESS_RUN_ROOT") or "runs")


def new_run_dir(root: Path, prefix: str) -> Path:
    """Create a directory that did not exist before."""
    root.mkdir(parents=True, exist_ok=True)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    for i in range(1000):
        d = root / (f"{prefix}-{stamp}" + (f"-{i}" if i else ""))
        try:
            d.mkdir()
            return d
        except FileExistsError:
            continue
    raise RuntimeError(f"could not create a fresh run directory under {root}")


def _versions() -> dict:
    import scipy
    import PIL

    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pillow": PIL.__version__,
        "platform": platform.platform(),
    }


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _format_table(rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for j, r in enumerate(rows):
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))))
        if j == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _parse_roots(specs: Sequence[str]) -> list[tuple[str, str]]:
    out = []
    for s in specs:
        origin, sep, root = s.partition("=")
        if not sep:
            root, origin = s, Path(s.rstrip("/")).name
        if not origin or not root:
            raise UsageError(f"bad dataset argument {s!r}; expected ORIGIN=PATH or PATH")
        out.append((origin, root))
    return out


def build_manifest(datasets: Sequence[tuple[str, str]], exclude=("*_mask*",), workers: int = 4) -> DatasetManifest:
    manifest = None
    for origin, root in datasets:
        m = ingest(root, origin, exclude=exclude, workers=workers)
        manifest = m if manifest is None else merge(manifest, m)
    if manifest is None:
        raise DatasetError("no dataset roots given")
    return manifest


def check_classes(m: DatasetManifest, stratified: bool = True) -> None:
    present = [c for c, n in m.class_counts.items() if n]
    if stratified and len(present) < 2:
        raise DatasetError(
            f"only class {present[0].title!r} is present; stratified cross-validation needs at least two classes"
        )


# ---------------------------------------------------------------- ingest

def cmd_ingest(args) -> int:
    if args.config:
        cfg = load_config(args.config, args.seed)
        datasets, exclude = cfg.datasets, cfg.exclude
    else:
        datasets, exclude = _parse_roots(args.roots), tuple(args.exclude)
    if not datasets:
        raise UsageError("ingest needs dataset roots (ORIGIN=PATH ...) or --config")
    m = build_manifest(datasets, exclude, workers=args.jobs or 4)
    check_classes(m)
    table = _format_table(summary_table(m))
    print(table)
    if m.skipped:
        print(f"skipped {len(m.skipped)} unreadable file(s)")
    if args.dry_run:
        return EXIT_OK
    out = new_run_dir(run_root(args.out), "ingest")
    m.save(out / "manifest.csv")
    (out / "summary.txt").write_text(table + "\n")
    print(f"manifest written to {out / 'manifest.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------- cv

def _fit(job):
    cfg, train_set, test_set = job
    params, record = train(cfg, train_set)
    return params, record, evaluate(params, cfg.spec, test_set)


def _predictions_jsonl(ev) -> str:
    return "".join(
        json.dumps({"sample_id": sid, "label": ClassLabel(int(y)).title,
                    "probabilities": [float(v) for v in p.probabilities], "predicted": p.predicted.title}) + "\n"
        for sid, p, y in ev
    )


def read_predictions(path) -> list[tuple[str, Prediction, int]]:
    out = []
    with open(path) as f:
        for line in f:
            if line.strip():
                d = json.loads(line)
                out.append((d["sample_id"], Prediction.from_probabilities(np.asarray(d["probabilities"])),
                            int(ClassLabel.parse(d["label"]))))
    return out


def fold_report(ev) -> MetricsReport:
    cm = accumulate((int(y), int(p.predicted)) for _, p, y in ev)
    return report(cm, [(sid, p.probabilities, int(y)) for sid, p, y in ev])


def cmd_cv(args) -> int:
    if not args.config:
        raise UsageError("cv needs --config")
    cfg = load_config(args.config, args.seed)
    if cfg.manifest:
        manifest = DatasetManifest.load(cfg.manifest)
    else:
        manifest = build_manifest(cfg.datasets, cfg.exclude)
    check_classes(manifest, cfg.stratified)
    plan = make_folds(manifest, cfg.k, cfg.seed, cfg.stratified)
    jobs = [(m, f) for m in cfg.models for f in range(cfg.k)]
    if args.dry_run:
        print(_format_table(summary_table(manifest)))
        print(f"{len(cfg.models)} model(s) x {cfg.k} folds = {len(jobs)} training jobs; fold sizes {plan.fold_sizes()}")
        for m in cfg.models:
            print(f"  {m.name}: {m.spec.family} widths={list(m.spec.stage_widths)} "
                  f"optimizer={m.train.optimizer.kind} lr={m.train.optimizer.learning_rate}")
        return EXIT_OK

    run = new_run_dir(run_root(args.out), "cv")
    with open(run / "config.ini", "w") as f:
        cfg.parser.write(f)
    manifest.save(run / "manifest.csv")
    plan.save(run / "fold_plan.json")
    _write_json(run / "environment.json", {"versions": _versions(), "argv": sys.argv[1:]})
    print(f"run directory {run}", flush=True)

    images = load_all(manifest, cfg.image_size, cfg.channels)
    splits = [split_images(images, plan, f) for f in range(cfg.k)]

    def job_input(model, fold):
        tc = cfg.train_config(model, fold)
        train_set, test_set = splits[fold]
        if cfg.bagging == "bootstrap":
            idx = ens.bootstrap_indices(len(train_set), tc.seed, cfg.models.index(model))
            train_set = [train_set[i] for i in idx]
        return tc, train_set, test_set

    failures = []
    fold_reports: dict[str, list[MetricsReport]] = {m.name: [] for m in cfg.models}

    def store(model, fold, result):
        params, record, ev = result
        d = run / f"fold{fold}" / model.name
        d.mkdir(parents=True)
        checkpoint.save(d / "checkpoint.bin", params, model.spec, len(record.epochs))
        record.checkpoint = str((d / "checkpoint.bin").relative_to(run))
        tc = cfg.train_config(model, fold)
        _write_json(d / "trainrecord.json", {**record.to_dict(), "config": tc.to_dict()})
        (d / "predictions.jsonl").write_text(_predictions_jsonl(ev))
        rep = fold_report(ev)
        _write_json(d / "metrics.json", rep.to_dict())
        fold_reports[model.name].append(rep)
        print(f"{model.name} fold {fold}: accuracy {rep.accuracy:.4f} ({record.wall_time_s:.1f}s)", flush=True)

    def fail(model, fold, err):
        failures.append({"model": model.name, "fold": fold, "error": f"{type(err).__name__}: {err}"})
        print(f"{model.name} fold {fold}: FAILED {type(err).__name__}: {err}", flush=True)

    n_jobs = max(1, args.jobs or 1)
    if n_jobs == 1:
        for model, fold in jobs:
            try:
                store(model, fold, _fit(job_input(model, fold)))
            except (TrainingError, ValueError, FloatingPointError) as e:
                fail(model, fold, e)
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futures = [pool.submit(_fit, job_input(m, f)) for m, f in jobs]
            for (model, fold), fut in zip(jobs, futures):
                try:
                    store(model, fold, fut.result())
                except (TrainingError, ValueError, FloatingPointError) as e:
                    fail(model, fold, e)

    for model in cfg.models:
        reps = fold_reports[model.name]
        if len(reps) != cfg.k:
            continue
        d = run / "models" / model.name
        d.mkdir(parents=True)
        mean = mean_report(reps)
        _write_json(d / "mean_metrics.json", mean.to_dict())
        (d / "confusion.csv").write_text(mean.confusion.to_csv())
        print(f"{model.name}: mean accuracy {mean.accuracy:.4f}", flush=True)

    status = "complete" if not failures else "failed"
    _write_json(run / "run.json", {
        "status": status,
        "models": [m.name for m in cfg.models],
        "k": cfg.k,
        "seed": cfg.seed,
        "failures": failures,
    })
    if failures:
        print(f"{len(failures)} training job(s) failed:")
        for f in failures:
            print(f"  {f['model']} fold {f['fold']}: {f['error']}")
        return EXIT_TRAIN
    return EXIT_OK


# ---------------------------------------------------------------- ensemble

def _load_run(run: Path) -> dict:
    meta_path = run / "run.json"
    if not meta_path.exists():
        raise DatasetError(f"{run} is not a completed cv run (no run.json)")
    return json.loads(meta_path.read_text())


def load_mean_reports(run: Path) -> dict[str, MetricsReport]:
    out = {}
    for name in _load_run(run)["models"]:
        p = run / "models" / name / "mean_metrics.json"
        if p.exists():
            out[name] = MetricsReport.from_dict(json.loads(p.read_text()))
    return out


def cmd_ensemble(args) -> int:
    if not args.run_dir:
        raise UsageError("ensemble needs a cv run directory")
    run = Path(args.run_dir)
    meta = _load_run(run)
    cfg_parser = _read_ini(run / "config.ini")
    m = args.m if args.m is not None else cfg_parser.getint("ensemble", "m", fallback=4)
    tie_break = args.tie_break or cfg_parser.get("ensemble", "tie_break", fallback="summed_probability")
    reports = load_mean_reports(run)
    if m > len(reports):
        raise UsageError(f"ensemble of {m} requested but the run has only {len(reports)} completed model(s)")
    members = ens.select_members(reports, m)
    spec = ens.EnsembleSpec(tuple(members), tie_break=tie_break)
    if args.dry_run:
        print("members: " + ", ".join(members))
        return EXIT_OK

    out = new_run_dir(run_root(args.out) if args.out or os.environ.get("HARNESS_RUN_ROOT") else run.parent,
                      f"{run.name}-ensemble")
    outcomes_all, fold_reps = [], []
    for fold in range(meta["k"]):
        per_member = {mid: read_predictions(run / f"fold{fold}" / mid / "predictions.jsonl") for mid in members}
        outcomes, cm = ens.evaluate_ensemble(spec, per_member)
        fold_reps.append(report(cm, [(o.sample_id, o.mean_probabilities, int(o.truth)) for o in outcomes]))
        outcomes_all.extend((fold, o) for o in outcomes)

    mean = mean_report(fold_reps)
    _write_json(out / "ensemble.json", {
        **spec.to_dict(),
        "source_run": str(run.resolve()),
        "m": m,
        "member_accuracy": {mid: reports[mid].accuracy for mid in members},
        "fold_accuracy": [r.accuracy for r in fold_reps],
    })
    with open(out / "votes.jsonl", "w") as f:
        for fold, o in outcomes_all:
            f.write(json.dumps({"fold": fold, **o.to_dict()}) + "\n")
    _write_json(out / "metrics.json", mean.to_dict())
    (out / "confusion.csv").write_text(mean.confusion.to_csv())

    from busnet import plots

    probs = np.asarray([o.mean_probabilities for _, o in outcomes_all])
    truth = np.asarray([int(o.truth) for _, o in outcomes_all])
    curves = {}
    for c in ClassLabel:
        pos = truth == int(c)
        if pos.any() and (~pos).any():
            curves[c.title] = roc(list(zip(probs[:, int(c)], pos)))
            (out / f"roc_{c.title}.csv").write_text(curves[c.title].to_csv())
    if curves:
        plots.roc_svg(out / "roc.svg", curves, "Ensemble, one-vs-rest (pooled folds)")
    plots.confusion_svg(out / "confusion.svg", mean.confusion, "Ensemble")

    print(f"ensemble directory {out}")
    print("members: " + ", ".join(f"{mid} ({reports[mid].accuracy:.4f})" for mid in members))
    print(f"ensemble mean accuracy {mean.accuracy:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------- report

REPORT_COLUMNS = ("Sensitivity", "Specificity", "Accuracy", "AUC")


def report_rows(directory: Path) -> list[tuple[str, list[Optional[float]]]]:
    """(name, [sensitivity, specificity, accuracy, auc]) for every model plus the ensemble.

    ``directory`` may be a cv run or an ensemble directory. Missing values are None.
    """
    ens_dir = None
    if (directory / "ensemble.json").exists():
        ens_dir = directory
        run = Path(json.loads((directory / "ensemble.json").read_text())["source_run"])
    else:
        run = directory
        candidates = sorted(run.parent.glob(f"{run.name}-ensemble*"))
        ens_dir = candidates[-1] if candidates else None
    meta = _load_run(run)

    def values(path: Path) -> list[Optional[float]]:
        if not path.exists():
            return [None] * 4
        d = json.loads(path.read_text())
        return [d["macro"].get("sensitivity"), d["macro"].get("specificity"), d.get("accuracy"), d["macro"].get("auc")]

    rows = [(name, values(run / "models" / name / "mean_metrics.json")) for name in meta["models"]]
    ens_name = "ensemble"
    if ens_dir is not None:
        members = json.loads((ens_dir / "ensemble.json").read_text())["member_ids"]
        ens_name = "ensemble [" + "+".join(members) + "]"
        rows.append((ens_name, values(ens_dir / "metrics.json")))
    else:
        rows.append((ens_name, [None] * 4))
    return rows


def render_report(rows, fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", *(c.lower() for c in REPORT_COLUMNS)])
        for name, vals in rows:
            w.writerow([name, *("" if v is None else repr(float(v)) for v in vals)])
        return buf.getvalue()
    cells = [[name, *("-" if v is None else f"{100 * v:.1f}%" if i < 3 else f"{v:.3f}" for i, v in enumerate(vals))]
             for name, vals in rows]
    if fmt == "markdown":
        lines = ["| Model | " + " | ".join(REPORT_COLUMNS) + " |", "|---|" + "---:|" * len(REPORT_COLUMNS)]
        lines += ["| " + " | ".join(r) + " |" for r in cells]
        return "\n".join(lines) + "\n"
    return _format_table([["Model", *REPORT_COLUMNS], *cells]) + "\n"


def cmd_report(args) -> int:
    if not args.run_dir:
        raise UsageError("report needs a run directory")
    rows = report_rows(Path(args.run_dir))
    sys.stdout.write(render_report(rows, args.format))
    return EXIT_OK


# ---------------------------------------------------------------- entry point

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="INI run configuration")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the run seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output root (default $HARNESS_RUN_ROOT or ./runs)")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="parallel training jobs (default 1)")
    common.add_argument("--dry-run", action="store_true", default=argparse.SUPPRESS, help="print what would happen, write nothing")

    p = _Parser(prog="busnet", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    pi = sub.add_parser("ingest", parents=[common], help="scan dataset roots and write a manifest")
    pi.add_argument("roots", nargs="*", help="ORIGIN=PATH (or PATH, origin taken from the directory name)")
    pi.add_argument("--exclude", action="append", default=["*_mask*"], help="filename glob to skip")
    pi.set_defaults(func=cmd_ingest)

    pc = sub.add_parser("cv", parents=[common], help="cross-validated training of every configured model")
    pc.set_defaults(func=cmd_cv)

    pe = sub.add_parser("ensemble", parents=[common], help="majority-vote ensemble over a cv run")
    pe.add_argument("run_dir")
    pe.add_argument("-m", type=int, default=None, help="number of members (default from the run config)")
    pe.add_argument("--tie-break", choices=ens.TIE_BREAKS, default=None)
    pe.set_defaults(func=cmd_ensemble)

    pr = sub.add_parser("report", parents=[common], help="summary table of a run")
    pr.add_argument("run_dir")
    pr.add_argument("--format", choices=("text", "markdown", "csv"), default="text")
    pr.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    for name, default in (("config", None), ("seed", None), ("out", None), ("jobs", 1), ("dry_run", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, ens.EnsembleError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as e:
        print(f"training failed: {e}", file=sys.stderr)
        return EXIT_TRAIN


if __name__ == "__main__":
    sys.exit(main())
