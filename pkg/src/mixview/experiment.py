"""Experiment orchestration: single runs, sweeps and report aggregation."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .config import ExperimentConfig, atomic_write, code_version, dump_json
from .dataset import make_dataset
from .errors import ConfigError, ContractError
from .evalsuite import distribution_metrics, linear_eval
from .params import save_params
from .trainer import HISTORY_COLUMNS, pretrain
from .views import CROPMIX_TABLE, PRESETS

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("run_id", "split", "accuracy", "n")
REPORT_FILE = "report.json"

SWEEPS = {
    "regimes": ("regime", ("real", "syn", "mixdiff", "mixing", "sequential")),
    "guidance": ("guidance", (2.0, 3.0, 6.0, 8.0, 12.0)),
    "fraction": ("fraction", (0.25, 0.5, 1.0)),
    "augmentation": ("aug", ("all", "none", "flip", "blur", "solarization", "jitter")),
    "cropmix": ("crop_mix", tuple(m.as_tuple() for m in CROPMIX_TABLE)),
}


def _csv(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path) -> dict:
    """make_dataset -> pretrain -> probe -> evaluate -> metrics; returns the report dict.

    ``report.json`` is written last, so its presence marks a complete run.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / REPORT_FILE).unlink(missing_ok=True)
    run_id = cfg.run_id
    version = code_version()
    atomic_write(out / "config.json", dump_json({
        "config": cfg.to_dict(), "config_hash": cfg.config_hash, "run_id": run_id, "code_version": version,
    }))
    t0 = time.perf_counter()
    ds = make_dataset(cfg.dataset)
    t_data = time.perf_counter()
    result = pretrain(cfg.method, ds, run_id=run_id)
    t_train = time.perf_counter()

    history = [dict(r) for r in result.history]
    if not cfg.eval.record_wall_ms:
        for r in history:
            r["wall_ms"] = ""
    atomic_write(out / "history.csv", _csv(history, HISTORY_COLUMNS))
    enc = result.encoder
    save_params(enc.params, out / "checkpoint", {
        "encoder": enc.spec.to_dict(), "run_id": run_id, "config_hash": cfg.config_hash, "code_version": version,
    })

    transfer = make_dataset(cfg.dataset.transfer()) if cfg.eval.transfer else None
    _, probe = linear_eval(enc, ds, transfer, cfg.eval.probe_epochs, cfg.eval.probe_lr)
    atomic_write(out / "results.csv", _csv(probe.rows(run_id), RESULT_COLUMNS))
    metrics = {"run_id": run_id, "fid_kind": "local-FID"}
    metrics.update(distribution_metrics(enc, ds, cfg.eval.metrics_k, cfg.eval.metrics_n))
    atomic_write(out / "metrics.json", dump_json(metrics))
    t_eval = time.perf_counter()

    report = {
        "run_id": run_id,
        "label": cfg.label,
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash,
        "code_version": version,
        "history_csv": "history.csv",
        "results_csv": "results.csv",
        "metrics_json": "metrics.json",
        "checkpoint": "checkpoint",
        "accuracy": probe.accuracy,
        "n": probe.n,
        "mean_shift": probe.mean_shift,
        "overall": probe.overall,
        "transfer_choice": probe.transfer_choice,
        "collapsed": result.collapsed,
        "final_loss": history[-1]["loss"] if history else None,
        "wall_clock_s": {
            "dataset": t_data - t0, "pretrain": t_train - t_data, "eval": t_eval - t_train, "total": t_eval - t0,
        },
    }
    atomic_write(out / REPORT_FILE, dump_json(report))
    log.info("%s done: test %.4f mean-shift %.4f", run_id, probe.accuracy["test"], probe.mean_shift)
    return report


# --------------------------------------------------------------------------- sweeps
@dataclass(frozen=True)
class SweepPoint:
    tag: str
    value: object
    config: ExperimentConfig


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return "-".join(str(v) for v in value)
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


def sweep_points(kind: str, base: ExperimentConfig, seeds: int = 1) -> list[SweepPoint]:
    if kind not in SWEEPS:
        raise ConfigError("kind", f"unknown sweep {kind!r}; expected one of {sorted(SWEEPS)}")
    fieldname, values = SWEEPS[kind]
    points = []
    for value in values:
        method = replace(base.method, **{fieldname: value})
        if kind == "cropmix":
            rl, rg, sl, sg = value
            regime = "real" if sl + sg == 0 else "syn" if rl + rg == 0 else "mixdiff"
            method = replace(method, objective="dino", regime=regime)
        if method.objective == "supervised" and method.regime == "mixdiff":
            continue  # no second branch to replace
        method.validate()
        for i in range(seeds):
            seed = base.seed + i
            tag = f"{kind}-{_fmt(value)}" + (f"-s{seed}" if seeds > 1 else "")
            cfg = replace(base, label=tag, method=method).with_seed(seed)
            points.append(SweepPoint(tag, value, cfg))
    return points


def _run_point(args) -> dict:
    cfg, out = args
    return run_experiment(cfg, out)


def run_sweep(kind: str, base: ExperimentConfig, out_dir: str | Path, jobs: int = 1, seeds: int = 1) -> list[dict]:
    """One run per grid point (and seed); writes ``comparison.csv`` with one row per run."""
    out = Path(out_dir)
    points = sweep_points(kind, base, seeds)
    tasks = [(p.config, out / p.tag) for p in points]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_run_point, tasks))
    else:
        reports = [_run_point(t) for t in tasks]
    rows = [
        {"run_id": r["run_id"], "kind": kind, "value": _fmt(p.value), "seed": p.config.seed, **_summary_row(r)}
        for p, r in zip(points, reports)
    ]
    atomic_write(out / "comparison.csv", _csv(rows, ["run_id", "kind", "value", "seed", *SUMMARY_COLUMNS]))
    return reports


# --------------------------------------------------------------------------- reports
SUMMARY_COLUMNS = ("test", "mean_shift", "overall", "v2", "sketch", "rendition", "corrupted", "adversarial_pose", "transfer")


def _summary_row(report: dict) -> dict:
    acc = report["accuracy"]
    row = {"test": acc["test"], "mean_shift": report["mean_shift"], "overall": report["overall"]}
    for k in SUMMARY_COLUMNS[3:]:
        row[k] = acc.get(k, "")
    return row


@dataclass
class Collected:
    reports: list[dict]
    missing: list[str]


def collect_reports(root: str | Path) -> Collected:
    """Complete reports under ``root`` plus directories holding an unfinished run."""
    root = Path(root)
    reports, missing = [], []
    for cfg_path in sorted(root.rglob("config.json")):
        run_dir = cfg_path.parent
        rep = run_dir / REPORT_FILE
        if not rep.exists():
            missing.append(str(run_dir.relative_to(root)) or ".")
            continue
        try:
            reports.append(json.loads(rep.read_text()))
        except json.JSONDecodeError:
            missing.append(str(run_dir.relative_to(root)) or ".")
    reports.sort(key=lambda r: r["run_id"])
    versions = {r["code_version"] for r in reports}
    if len(versions) > 1:
        raise ContractError(f"refusing to merge runs from different code versions: {sorted(versions)}")
    return Collected(reports, missing)


def format_table(reports: list[dict], missing: list[str]) -> str:
    header = f"{'run_id':<40} {'in-dist':>10} {'mean-shift':>10} {'overall':>10}"
    lines = [header, "-" * len(header)]
    for r in reports:
        lines.append(f"{r['run_id']:<40} {r['accuracy']['test']:>10.6g} {r['mean_shift']:>10.6g} {r['overall']:>10.6g}")
    for m in missing:
        lines.append(f"{m:<40} {'MISSING':>10}")
    return "\n".join(lines)


def write_long_csv(reports: list[dict], path: str | Path) -> Path:
    rows = []
    for r in reports:
        for split, acc in sorted(r["accuracy"].items()):
            rows.append({"run_id": r["run_id"], "label": r["label"], "metric": "accuracy", "split": split, "value": acc})
        for metric in ("mean_shift", "overall"):
            rows.append({"run_id": r["run_id"], "label": r["label"], "metric": metric, "split": "", "value": r[metric]})
    return atomic_write(path, _csv(rows, ["run_id", "label", "metric", "split", "value"]))
