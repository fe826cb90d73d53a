"""Materialised datasets over the glyph world.

A :class:`Dataset` is a pure function of its :class:`DatasetSpec`: a real
train split, a real test split, one synthetic counterpart per train image for
every requested guidance scale, and one test set per shift kind.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .world import (
    GLYPH_SETS,
    SHIFT_KINDS,
    ImageSample,
    _check_k,
    derive_seed,
    render_shift,
    sample_real,
    synth_counterpart,
)


@dataclass(frozen=True)
class DatasetSpec:
    n_classes: int = 10
    n_per_class: int = 200
    n_test_per_class: int = 50
    n_shift_per_class: int = 50
    image_size: int = 64
    train_seed: int = 0
    test_seed: int = 1
    guidance_scales: tuple[float, ...] = (8.0,)
    shift_kinds: tuple[str, ...] = SHIFT_KINDS
    glyph_set: str = "base"

    def validate(self) -> None:
        if self.glyph_set not in GLYPH_SETS:
            raise ParameterError(f"unknown glyph set {self.glyph_set!r}")
        if not 2 <= self.n_classes <= len(GLYPH_SETS[self.glyph_set]):
            raise ParameterError(f"n_classes must be in [2, {len(GLYPH_SETS[self.glyph_set])}]")
        if self.n_per_class < 1:
            raise ParameterError("n_per_class must be at least 1")
        if self.n_test_per_class < 1:
            raise ParameterError("n_test_per_class must be at least 1")
        if not 0 <= self.n_shift_per_class <= self.n_test_per_class:
            raise ParameterError("n_shift_per_class must be in [0, n_test_per_class]")
        if self.image_size < 8:
            raise ParameterError("image_size must be at least 8")
        if self.train_seed == self.test_seed:
            raise ParameterError("train and test seeds must differ")
        for k in self.guidance_scales:
            _check_k(k)
        for kind in self.shift_kinds:
            if kind not in SHIFT_KINDS:
                raise ParameterError(f"unknown shift kind {kind!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["guidance_scales"] = [float(k) for k in self.guidance_scales]
        d["shift_kinds"] = list(self.shift_kinds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        d = dict(d)
        if "guidance_scales" in d:
            d["guidance_scales"] = tuple(float(k) for k in d["guidance_scales"])
        if "shift_kinds" in d:
            d["shift_kinds"] = tuple(d["shift_kinds"])
        return cls(**d)

    def transfer(self) -> "DatasetSpec":
        """Spec for the disjoint-glyph transfer target."""
        return DatasetSpec(
            n_classes=self.n_classes,
            n_per_class=self.n_per_class,
            n_test_per_class=self.n_test_per_class,
            n_shift_per_class=0,
            image_size=self.image_size,
            train_seed=self.train_seed,
            test_seed=self.test_seed,
            guidance_scales=(),
            shift_kinds=(),
            glyph_set="transfer",
        )


@dataclass
class Split:
    images: np.ndarray  # (N, C, H, W) float32
    labels: np.ndarray  # (N,) int64
    samples: list[ImageSample] = field(repr=False, default_factory=list)

    def __len__(self) -> int:
        return len(self.labels)


def _stream(spec: DatasetSpec, split: str) -> str:
    return split if spec.glyph_set == "base" else f"transfer_{split}"


def _draw_split(spec: DatasetSpec, split: str, n_per_class: int) -> Split:
    root = spec.train_seed if split == "train" else spec.test_seed
    stream = _stream(spec, split)
    samples = [
        sample_real(c, derive_seed(root, stream, c, i), spec.image_size, spec.glyph_set)
        for i in range(n_per_class)
        for c in range(spec.n_classes)
    ]
    return _pack(samples)


def _pack(samples: list[ImageSample]) -> Split:
    images = np.stack([s.pixels for s in samples]).astype(np.float32)
    labels = np.array([s.class_id for s in samples], dtype=np.int64)
    return Split(images, labels, samples)


class Dataset:
    """Indexed accessor over train/test splits, counterparts and shift sets."""

    def __init__(self, spec: DatasetSpec):
        spec.validate()
        self.spec = spec
        self.train = _draw_split(spec, "train", spec.n_per_class)
        self.test = _draw_split(spec, "test", spec.n_test_per_class)
        self._counterparts: dict[float, np.ndarray] = {}
        for k in spec.guidance_scales:
            self.counterparts(k)
        shift_src = [s for s in self.test.samples[: spec.n_shift_per_class * spec.n_classes]]
        self.shifts: dict[str, Split] = {
            kind: _pack([render_shift(s, kind) for s in shift_src]) for kind in spec.shift_kinds
        }
        self._perm = np.random.default_rng(derive_seed(spec.train_seed, "misc", 0)).permutation(
            len(self.train)
        )

    @property
    def n_classes(self) -> int:
        return self.spec.n_classes

    def counterparts(self, k: float) -> np.ndarray:
        """Synthetic counterpart pixels aligned with ``train.images``."""
        k = _check_k(k)
        if k not in self._counterparts:
            imgs = [
                synth_counterpart(s, k, derive_seed(self.spec.train_seed, "synthetic", i)).pixels
                for i, s in enumerate(self.train.samples)
            ]
            self._counterparts[k] = np.stack(imgs).astype(np.float32)
        return self._counterparts[k]

    def counterpart_sample(self, index: int, k: float) -> ImageSample:
        return synth_counterpart(
            self.train.samples[index], k, derive_seed(self.spec.train_seed, "synthetic", index)
        )

    def subset_indices(self, fraction: float) -> np.ndarray:
        """Train indices for a data fraction; smaller fractions are prefixes of larger ones."""
        if not 0.0 < fraction <= 1.0:
            raise ParameterError(f"fraction must lie in (0, 1], got {fraction}")
        n = max(1, int(round(fraction * len(self.train))))
        return np.sort(self._perm[:n])

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for arr in (self.train.images, self.train.labels, self.test.images, self.test.labels):
            h.update(np.ascontiguousarray(arr).tobytes())
        for k in sorted(self._counterparts):
            h.update(f"k={k}".encode())
            h.update(self._counterparts[k].tobytes())
        for kind in sorted(self.shifts):
            h.update(kind.encode())
            h.update(self.shifts[kind].images.tobytes())
        return h.hexdigest()

    def manifest(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "content_hash": self.content_hash(),
            "n_train": len(self.train),
            "n_test": len(self.test),
            "shift_sizes": {k: len(v) for k, v in self.shifts.items()},
        }


@lru_cache(maxsize=2)
def _cached(spec: DatasetSpec) -> Dataset:
    return Dataset(spec)


def make_dataset(spec: DatasetSpec, cache: bool = True) -> Dataset:
    spec.validate()
    return _cached(spec) if cache else Dataset(spec)


# --------------------------------------------------------------------------- export
def write_ppm(path: str | Path, pixels: np.ndarray) -> None:
    """Write a (3, H, W) image in [0, 1] as binary PPM (P6)."""
    arr = np.clip(np.round(np.asarray(pixels, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    h, w = arr.shape[1:]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(arr.transpose(1, 2, 0).tobytes())


def read_ppm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ParameterError(f"{path} is not a P6 file")
    w, h = int(parts[1]), int(parts[2])
    raw = np.frombuffer(parts[4][: w * h * 3], dtype=np.uint8).reshape(h, w, 3)
    return raw.transpose(2, 0, 1).astype(np.float64) / 255.0


def dump_dataset(ds: Dataset, out_dir: str | Path, per_class: int = 2) -> Path:
    """Export a few images per split as PPM plus a JSON manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []

    def emit(tag: str, split: Split):
        for c in range(ds.n_classes):
            idx = np.flatnonzero(split.labels == c)[:per_class]
            for j, i in enumerate(idx):
                name = f"{tag}_c{c}_{j}.ppm"
                write_ppm(out / name, split.images[i])
                files.append(name)

    emit("train", ds.train)
    emit("test", ds.test)
    for k in sorted(ds._counterparts):
        emit(f"syn_k{k:g}", Split(ds.counterparts(k), ds.train.labels))
    for kind, split in ds.shifts.items():
        emit(kind, split)
    manifest = ds.manifest()
    manifest["files"] = files
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return path
