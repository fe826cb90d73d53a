"""Named parameter stores and the MXV1 checkpoint format.

A checkpoint is two files sharing a stem:

``<stem>.json``
    manifest with ``magic``, ``meta`` and one entry per tensor giving its
    path, shape and byte offset into the binary file;
``<stem>.bin``
    the 4-byte magic ``MXV1`` followed by every tensor as little-endian f64,
    in manifest order.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from .errors import ContractError, FormatError
from .tensor import Tensor

MAGIC = b"MXV1"


class ParamStore:
    """Ordered mapping from parameter path to :class:`Tensor`."""

    def __init__(self, items: Mapping[str, Tensor] | None = None):
        self._params: dict[str, Tensor] = {}
        for name, t in (items or {}).items():
            self[name] = t

    def __setitem__(self, name: str, value) -> None:
        if name in self._params:
            raise ContractError(f"duplicate parameter path {name!r}")
        t = value if isinstance(value, Tensor) else Tensor(value)
        t.requires_grad = True
        self._params[name] = t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def keys(self):
        return self._params.keys()

    def values(self):
        return self._params.values()

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def copy(self) -> "ParamStore":
        return ParamStore({k: Tensor(v.data.copy()) for k, v in self._params.items()})

    def structure(self) -> list[tuple[str, tuple[int, ...]]]:
        return [(k, v.shape) for k, v in self._params.items()]

    def check_isomorphic(self, other: "ParamStore") -> None:
        if self.structure() != other.structure():
            raise ContractError("parameter stores differ in paths or shapes")

    def num_parameters(self) -> int:
        return sum(v.size for v in self._params.values())

    def to_bytes(self) -> bytes:
        return MAGIC + b"".join(
            np.ascontiguousarray(v.data, dtype="<f8").tobytes() for v in self._params.values()
        )

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for name, shape in self.structure():
            h.update(f"{name}:{shape};".encode())
        h.update(self.to_bytes())
        return h.hexdigest()


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def _sibling(stem: Path, suffix: str) -> Path:
    return stem.with_name(stem.name + suffix)


def save_params(store: ParamStore, stem: str | os.PathLike, meta: dict | None = None) -> Path:
    """Write ``store`` as ``<stem>.json`` + ``<stem>.bin``; returns the manifest path."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = len(MAGIC)
    for name, t in store.items():
        nbytes = t.size * 8
        entries.append({"path": name, "shape": list(t.shape), "offset": offset, "nbytes": nbytes})
        offset += nbytes
    manifest = {
        "magic": MAGIC.decode(),
        "dtype": "<f8",
        "binary": stem.name + ".bin",
        "meta": meta or {},
        "tensors": entries,
    }
    _atomic_write(_sibling(stem, ".bin"), store.to_bytes())
    man_path = _sibling(stem, ".json")
    _atomic_write(man_path, json.dumps(manifest, indent=1, sort_keys=True).encode())
    return man_path


def load_params(stem: str | os.PathLike) -> tuple[ParamStore, dict]:
    """Inverse of :func:`save_params`. Returns ``(store, meta)``."""
    stem = Path(stem)
    if stem.suffix in (".json", ".bin"):
        stem = stem.with_suffix("")
    try:
        manifest = json.loads(_sibling(stem, ".json").read_text())
        blob = _sibling(stem, ".bin").read_bytes()
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read checkpoint {stem}: {exc}") from exc
    if manifest.get("magic") != MAGIC.decode() or blob[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{stem}: bad magic header")
    store = ParamStore()
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        off = entry["offset"]
        if off + 8 * n > len(blob):
            raise FormatError(f"{stem}: tensor {entry['path']} runs past end of binary")
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=off).astype(np.float64)
        store[entry["path"]] = Tensor(arr.reshape(shape))
    return store, manifest.get("meta", {})
