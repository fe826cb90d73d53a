"""Experiment configuration files and artifact helpers.

An experiment config is a flat JSON object::

    {
      "seed": 0,                      # required, unsigned 64-bit
      "label": "simclr-mixdiff",      # optional, prefixes the run id
      "out": "runs/simclr-mixdiff",   # optional, overridden by --out
      "dataset": {...},               # DatasetSpec fields
      "method": {...},                # MethodConfig fields except seed
      "eval": {...}                   # EvalConfig fields
    }
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .dataset import DatasetSpec
from .errors import ConfigError, MixviewError
from .trainer import MethodConfig

TOP_LEVEL = ("seed", "label", "out", "dataset", "method", "eval")
U64_MAX = 2**64 - 1


@dataclass(frozen=True)
class EvalConfig:
    probe_epochs: int = 200
    probe_lr: float = 1e-3
    transfer: bool = True
    metrics_k: tuple[float, ...] = (2.0, 3.0, 6.0, 8.0, 12.0)
    metrics_n: int = 500
    record_wall_ms: bool = False  # real timings make history.csv non-reproducible

    def validate(self) -> None:
        if self.probe_epochs < 0:
            raise ConfigError("eval.probe_epochs", "must be non-negative")
        if not self.probe_lr > 0:
            raise ConfigError("eval.probe_lr", "must be positive")
        if self.metrics_n < 2:
            raise ConfigError("eval.metrics_n", "must be at least 2")
        for k in self.metrics_k:
            if not 1.0 <= k <= 16.0:
                raise ConfigError("eval.metrics_k", f"guidance scale {k} outside [1, 16]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["metrics_k"] = [float(k) for k in self.metrics_k]
        return d


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    method: MethodConfig = field(default_factory=MethodConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    label: str = "run"
    out: str | None = None

    def to_dict(self) -> dict:
        method = self.method.to_dict()
        method.pop("seed")
        return {
            "seed": self.seed,
            "label": self.label,
            "dataset": self.dataset.to_dict(),
            "method": method,
            "eval": self.eval.to_dict(),
        }

    def canonical_json(self) -> str:
        # ``out`` is excluded: moving a run directory must not change its identity
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    @property
    def run_id(self) -> str:
        return f"{self.label}-{self.config_hash[:10]}"

    def with_seed(self, seed: int) -> "ExperimentConfig":
        _check_seed(seed)
        return replace(self, seed=seed, method=replace(self.method, seed=seed))


def _check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed <= U64_MAX:
        raise ConfigError("seed", "must be an unsigned 64-bit integer")
    return seed


def _block(raw: dict, name: str, cls):
    block = raw.get(name, {})
    if not isinstance(block, dict):
        raise ConfigError(name, "must be an object")
    known = {f.name for f in fields(cls)}
    for key in block:
        if key not in known or (cls is MethodConfig and key == "seed"):
            raise ConfigError(f"{name}.{key}", "unknown field")
    block = dict(block)
    for key, value in block.items():
        if isinstance(value, list):
            block[key] = tuple(value)
    try:
        return cls(**block)
    except TypeError as exc:
        raise ConfigError(name, str(exc)) from None


def parse_config(raw: dict, seed_override: int | None = None) -> ExperimentConfig:
    """Build and validate an :class:`ExperimentConfig`; every failure names its field."""
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a JSON object")
    for key in raw:
        if key not in TOP_LEVEL:
            raise ConfigError(key, "unknown field")
    if seed_override is not None:
        raw = {**raw, "seed": seed_override}
    if "seed" not in raw:
        raise ConfigError("seed", "required field missing")
    seed = _check_seed(raw["seed"])
    label = raw.get("label", "run")
    if not isinstance(label, str) or not label or "/" in label:
        raise ConfigError("label", "must be a non-empty string without '/'")
    out = raw.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError("out", "must be a string path")

    dataset = _block(raw, "dataset", DatasetSpec)
    try:
        dataset.validate()
    except MixviewError as exc:
        raise ConfigError("dataset", str(exc)) from None
    method = replace(_block(raw, "method", MethodConfig), seed=seed)
    method.validate()
    ev = _block(raw, "eval", EvalConfig)
    ev.validate()
    return ExperimentConfig(seed=seed, dataset=dataset, method=method, eval=ev, label=label, out=out)


def load_config(path: str | Path, seed_override: int | None = None) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError("config", f"no such file {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from None
    return parse_config(raw, seed_override)


# --------------------------------------------------------------------------- artifacts
def atomic_write(path: str | Path, data: str | bytes) -> Path:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = data.encode() if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def dump_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def code_version() -> str:
    """Hash of the package sources; runs from different code never merge in reports."""
    h = hashlib.sha256()
    root = Path(__file__).parent
    for p in sorted(root.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:16]
