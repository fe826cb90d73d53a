"""Frozen-backbone evaluation: linear probes, shift/transfer accuracy, local-FID, diversity."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .errors import DegenerateInputError, DimensionError, FormatError, NumericalError, ParameterError
from .model import Encoder, EncoderSpec
from .nn import linear
from .objectives import supervised_ce
from .optim import SGD, Adam
from .params import ParamStore, load_params
from .tensor import Tensor, no_grad
from .views import resize
from .world import SHIFT_KINDS

SPLITS = ("test",) + SHIFT_KINDS + ("transfer",)
TRANSFER_LRS = (0.5, 0.05, 0.01, 0.005)
EIG_TOL = 1e-8


@dataclass
class FeatureSet:
    x: np.ndarray  # (M, D)
    source: str = ""
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim != 2:
            raise DimensionError(f"features must be (M, D), got {self.x.shape}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (len(self.x),):
                raise DimensionError("one label per feature row required")

    def __len__(self) -> int:
        return len(self.x)

    @property
    def dim(self) -> int:
        return self.x.shape[1]


def load_encoder(checkpoint) -> Encoder:
    """Accept an :class:`Encoder` or a checkpoint stem written by ``save_params``."""
    if isinstance(checkpoint, Encoder):
        return checkpoint
    if isinstance(checkpoint, (str, Path)):
        store, meta = load_params(checkpoint)
        if "encoder" not in meta:
            raise FormatError("checkpoint manifest lacks an encoder spec")
        return Encoder(EncoderSpec.from_dict(meta["encoder"]), store)
    raise FormatError(f"cannot interpret {type(checkpoint).__name__} as a checkpoint")


def extract_features(checkpoint, images, source: str = "", labels=None, batch: int = 500) -> FeatureSet:
    """Pooled backbone features; images are resized to the encoder input, never augmented."""
    enc = load_encoder(checkpoint)
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4 or images.shape[1] != enc.spec.in_channels:
        raise FormatError(f"images of shape {images.shape} do not fit encoder input")
    if images.shape[-1] != enc.spec.input_size:
        images = resize(images, enc.spec.input_size)
    out = []
    with no_grad():
        for s in range(0, len(images), batch):
            out.append(enc.features(images[s : s + batch]).data)
    x = np.concatenate(out) if out else np.zeros((0, enc.spec.feature_dim))
    return FeatureSet(x, source, labels)


# --------------------------------------------------------------------------- probes
@dataclass
class LinearProbe:
    """Affine classifier on features; the input standardisation is folded in."""

    weight: np.ndarray  # (D, K)
    bias: np.ndarray  # (K,)
    curve: list[float] = field(default_factory=list)

    @property
    def n_classes(self) -> int:
        return self.bias.shape[0]

    def logits(self, feats) -> np.ndarray:
        x = feats.x if isinstance(feats, FeatureSet) else np.asarray(feats, dtype=np.float64)
        if x.shape[1] != self.weight.shape[0]:
            raise DimensionError(f"probe expects {self.weight.shape[0]}-d features, got {x.shape[1]}")
        return x @ self.weight + self.bias

    def predict(self, feats) -> np.ndarray:
        # np.argmax returns the first maximum, i.e. the lowest class index on ties
        return np.argmax(self.logits(feats), axis=1)

    def accuracy(self, feats: FeatureSet) -> float:
        if len(feats) == 0:
            raise ParameterError(f"empty split {feats.source!r}")
        return float(np.mean(self.predict(feats) == feats.labels))


def _standardizer(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    return mu, np.where(sd > 1e-12, sd, 1.0)


def _fold(w: np.ndarray, b: np.ndarray, mu: np.ndarray, sd: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w_raw = w / sd[:, None]
    return w_raw, b - mu @ w_raw


def _check_probe_input(feats: FeatureSet, n_classes: int | None) -> int:
    if feats.labels is None:
        raise ParameterError("probe training needs labels")
    present = np.unique(feats.labels)
    if len(present) < 2:
        raise ParameterError("probe training needs at least two classes")
    return int(n_classes if n_classes is not None else feats.labels.max() + 1)


def train_linear_probe(
    feats: FeatureSet, epochs: int = 200, lr: float = 1e-3, n_classes: int | None = None
) -> LinearProbe:
    """Full-batch Adam on cross-entropy, starting from a zero affine map."""
    k = _check_probe_input(feats, n_classes)
    mu, sd = _standardizer(feats.x)
    xs = (feats.x - mu) / sd
    store = ParamStore({"w": np.zeros((feats.dim, k)), "b": np.zeros(k)})
    opt = Adam(store)
    curve = []
    for _ in range(epochs):
        loss = supervised_ce(linear(Tensor(xs), store["w"], store["b"]), feats.labels)
        loss.backward()
        opt.step(lr)
        opt.zero_grad()
        curve.append(loss.item())
    w, b = _fold(store["w"].data, store["b"].data, mu, sd)
    return LinearProbe(w, b, curve)


def transfer_probe(
    train: FeatureSet,
    test: FeatureSet,
    lrs=TRANSFER_LRS,
    steps: int = 300,
    every: int = 10,
    val_fraction: float = 0.2,
) -> tuple[float, dict]:
    """Learning-rate sweep with best-checkpoint selection on a held-out slice of ``train``.

    Returns the test accuracy of the selected (lr, step) probe and a record of the choice.
    """
    k = _check_probe_input(train, None)
    n_val = max(1, int(round(val_fraction * len(train))))
    order = np.random.default_rng(0).permutation(len(train))
    val_idx, fit_idx = order[:n_val], order[n_val:]
    fit = FeatureSet(train.x[fit_idx], "fit", train.labels[fit_idx])
    val = FeatureSet(train.x[val_idx], "val", train.labels[val_idx])
    mu, sd = _standardizer(fit.x)
    xs = Tensor((fit.x - mu) / sd)
    best = (-1.0, None, None, None)
    for lr in lrs:
        store = ParamStore({"w": np.zeros((fit.dim, k)), "b": np.zeros(k)})
        opt = SGD(store, momentum=0.9)
        for step in range(1, steps + 1):
            supervised_ce(linear(xs, store["w"], store["b"]), fit.labels).backward()
            opt.step(lr)
            opt.zero_grad()
            if step % every == 0:
                probe = LinearProbe(*_fold(store["w"].data, store["b"].data, mu, sd))
                acc = probe.accuracy(val)
                if acc > best[0]:
                    best = (acc, lr, step, probe)
    val_acc, lr, step, probe = best
    return probe.accuracy(test), {"lr": lr, "step": step, "val_accuracy": val_acc}


@dataclass
class ProbeResult:
    accuracy: dict[str, float]
    n: dict[str, int]
    curve: list[float] = field(default_factory=list)
    transfer_choice: dict | None = None

    @property
    def mean_shift(self) -> float:
        shifts = [self.accuracy[s] for s in SHIFT_KINDS if s in self.accuracy]
        return float(np.mean(shifts)) if shifts else float("nan")

    @property
    def overall(self) -> float:
        """Mean of in-distribution and the individual shift accuracies."""
        vals = [self.accuracy["test"]] + [self.accuracy[s] for s in SHIFT_KINDS if s in self.accuracy]
        return float(np.mean(vals))

    def rows(self, run_id: str) -> list[dict]:
        return [{"run_id": run_id, "split": s, "accuracy": self.accuracy[s], "n": self.n[s]} for s in self.accuracy]


def evaluate_probe(probe: LinearProbe, checkpoint, dataset: Dataset, transfer: Dataset | None = None) -> ProbeResult:
    """Top-1 accuracy on the in-distribution test split, every shift split and optionally transfer."""
    enc = load_encoder(checkpoint)
    splits = {"test": dataset.test}
    splits.update(dataset.shifts)
    acc, n = {}, {}
    for name, split in splits.items():
        feats = extract_features(enc, split.images, name, split.labels)
        acc[name] = probe.accuracy(feats)
        n[name] = len(feats)
    choice = None
    if transfer is not None:
        tr = extract_features(enc, transfer.train.images, "transfer_train", transfer.train.labels)
        te = extract_features(enc, transfer.test.images, "transfer", transfer.test.labels)
        acc["transfer"], choice = transfer_probe(tr, te)
        n["transfer"] = len(te)
    return ProbeResult(acc, n, list(probe.curve), choice)


def linear_eval(checkpoint, dataset: Dataset, transfer: Dataset | None = None, epochs: int = 200, lr: float = 1e-3):
    """Fit a probe on real training features and evaluate it everywhere."""
    enc = load_encoder(checkpoint)
    feats = extract_features(enc, dataset.train.images, "train", dataset.train.labels)
    probe = train_linear_probe(feats, epochs, lr, dataset.n_classes)
    return probe, evaluate_probe(probe, enc, dataset, transfer)


# --------------------------------------------------------------------------- distribution metrics
def _moments(f: FeatureSet) -> tuple[np.ndarray, np.ndarray]:
    if len(f) < 2:
        raise ParameterError("covariance needs at least two samples")
    return f.x.mean(axis=0), np.atleast_2d(np.cov(f.x, rowvar=False, ddof=1))


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def frechet_distance(mu_a, cov_a, mu_b, cov_b) -> float:
    mu_a, mu_b = np.atleast_1d(mu_a), np.atleast_1d(mu_b)
    cov_a, cov_b = np.atleast_2d(cov_a), np.atleast_2d(cov_b)
    if mu_a.shape != mu_b.shape or cov_a.shape != cov_b.shape:
        raise ParameterError("feature dimensions differ")
    root_a = _psd_sqrt(cov_a)
    mid = root_a @ cov_b @ root_a
    eig = np.linalg.eigvalsh((mid + mid.T) / 2.0)
    if eig.min() < -EIG_TOL:
        raise NumericalError(f"covariance product has eigenvalue {eig.min():.3g}")
    tr_sqrt = np.sqrt(np.clip(eig, 0.0, None)).sum()
    d = float(((mu_a - mu_b) ** 2).sum() + np.trace(cov_a) + np.trace(cov_b) - 2.0 * tr_sqrt)
    return max(d, 0.0)


def fid(a: FeatureSet, b: FeatureSet) -> float:
    """Frechet distance between Gaussian fits of two feature sets (local-FID)."""
    if a.dim != b.dim:
        raise ParameterError(f"feature dimensions differ: {a.dim} vs {b.dim}")
    for f in (a, b):
        if len(f) < f.dim + 1:
            raise ParameterError(f"need at least D+1={f.dim + 1} samples, got {len(f)}")
    return frechet_distance(*_moments(a), *_moments(b))


def mean_pairwise_cosine_distance(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    if len(x) < 2:
        raise ParameterError("need at least two samples")
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateInputError("zero feature vector")
    u = x / norms[:, None]
    cos = np.clip(u @ u.T, -1.0, 1.0)
    iu = np.triu_indices(len(x), k=1)
    return float(np.mean(1.0 - cos[iu]))


def diversity(feats: FeatureSet) -> dict[int, float]:
    """Per-class mean pairwise cosine distance."""
    if feats.labels is None:
        raise ParameterError("diversity needs class labels")
    return {int(c): mean_pairwise_cosine_distance(feats.x[feats.labels == c]) for c in np.unique(feats.labels)}


def distribution_metrics(checkpoint, dataset: Dataset, ks, n_max: int = 500) -> dict:
    """local-FID and diversity of real train images against counterparts at each k."""
    enc = load_encoder(checkpoint)
    n = min(n_max, len(dataset.train))
    labels = dataset.train.labels[:n]
    real = extract_features(enc, dataset.train.images[:n], "real", labels)
    div_real = diversity(real)
    out = {"fid_by_k": {}, "diversity_real": _summary(div_real), "diversity_syn_by_k": {}}
    for k in ks:
        syn = extract_features(enc, dataset.counterparts(k)[:n], f"syn_k{k:g}", labels)
        out["fid_by_k"][f"{k:g}"] = fid(real, syn) if n > real.dim else None
        out["diversity_syn_by_k"][f"{k:g}"] = _summary(diversity(syn))
    return out


def _summary(per_class: dict[int, float]) -> dict:
    vals = [per_class[c] for c in sorted(per_class)]
    return {"per_class": vals, "mean": float(np.mean(vals))}
