"""Augmentations and view-set construction.

Augmentations run in the fixed order crop -> flip -> jitter -> blur ->
solarization on whole batches; every image draws its own parameters from its
own seed, so a batch result equals the per-image results stacked.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractError, ParameterError
from .world import ImageSample

AUGMENTATIONS = ("crop", "flip", "jitter", "blur", "solarization")
BLUR_RADIUS = 4


@dataclass(frozen=True)
class AugPolicy:
    enabled: frozenset = frozenset(AUGMENTATIONS)
    out_size: int = 32
    flip_p: float = 0.5
    global_scale: tuple[float, float] = (0.08, 1.0)
    local_scale: tuple[float, float] = (0.05, 0.4)
    ratio: tuple[float, float] = (3 / 4, 4 / 3)
    jitter_p: float = 0.8
    brightness: tuple[float, float] = (0.6, 1.4)
    contrast: tuple[float, float] = (0.6, 1.4)
    saturation: tuple[float, float] = (0.6, 1.4)
    blur_p: float = 0.5
    blur_sigma: tuple[float, float] = (0.1, 2.0)
    solarize_p: float = 0.2
    solarize_threshold: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "enabled", frozenset(self.enabled))
        self.validate()

    def validate(self) -> None:
        unknown = set(self.enabled) - set(AUGMENTATIONS)
        if unknown:
            raise ParameterError(f"unknown augmentations {sorted(unknown)}")
        for name in ("flip_p", "jitter_p", "blur_p", "solarize_p"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ParameterError(f"{name} must be a probability")
        for name in ("global_scale", "local_scale"):
            lo, hi = getattr(self, name)
            if not 0.0 < lo <= hi <= 1.0:
                raise ParameterError(f"{name} must satisfy 0 < lo <= hi <= 1")
        lo, hi = self.blur_sigma
        if not 0.0 < lo <= hi <= BLUR_RADIUS / 2:
            raise ParameterError(f"blur_sigma must lie in (0, {BLUR_RADIUS / 2}]")
        if self.out_size < 4:
            raise ParameterError("out_size must be at least 4")


PRESETS: dict[str, frozenset] = {
    "all": frozenset(AUGMENTATIONS),
    "none": frozenset({"flip"}),
    "flip": frozenset({"crop", "flip"}),
    "blur": frozenset({"crop", "flip", "blur"}),
    "solarization": frozenset({"crop", "flip", "solarization"}),
    "jitter": frozenset({"crop", "flip", "jitter"}),
}


def preset(name: str, **overrides) -> AugPolicy:
    try:
        enabled = PRESETS[name]
    except KeyError:
        raise ParameterError(f"unknown augmentation preset {name!r}; expected one of {sorted(PRESETS)}") from None
    return AugPolicy(enabled=enabled, **overrides)


# --------------------------------------------------------------------------- parameters
@dataclass
class _Params:
    box: np.ndarray  # (B, 4) y0, x0, h, w
    flip: np.ndarray
    jitter: np.ndarray  # (B, 3) brightness, contrast, saturation; 1 = identity
    blur_sigma: np.ndarray  # 0 = no blur
    solarize: np.ndarray


def _crop_box(rng, H, W, scale, ratio) -> tuple[float, float, float, float]:
    area = H * W
    log_r = np.log(ratio)
    for _ in range(10):
        target = area * rng.uniform(*scale)
        r = np.exp(rng.uniform(*log_r))
        w = np.sqrt(target * r)
        h = np.sqrt(target / r)
        if w <= W and h <= H:
            y0 = rng.uniform(0.0, H - h)
            x0 = rng.uniform(0.0, W - w)
            return y0, x0, h, w
    return 0.0, 0.0, float(H), float(W)


def _draw_params(seeds, policy: AugPolicy, H: int, W: int, crop: str) -> _Params:
    B = len(seeds)
    box = np.tile([0.0, 0.0, float(H), float(W)], (B, 1))
    flip = np.zeros(B, bool)
    jitter = np.ones((B, 3))
    sigma = np.zeros(B)
    sol = np.zeros(B, bool)
    scale = policy.global_scale if crop == "global" else policy.local_scale
    en = policy.enabled
    for b, seed in enumerate(seeds):
        rng = np.random.default_rng(int(seed))
        if "crop" in en:
            box[b] = _crop_box(rng, H, W, scale, policy.ratio)
        if "flip" in en:
            flip[b] = rng.random() < policy.flip_p
        if "jitter" in en and rng.random() < policy.jitter_p:
            jitter[b] = [
                rng.uniform(*policy.brightness),
                rng.uniform(*policy.contrast),
                rng.uniform(*policy.saturation),
            ]
        if "blur" in en and rng.random() < policy.blur_p:
            sigma[b] = rng.uniform(*policy.blur_sigma)
        if "solarization" in en:
            sol[b] = rng.random() < policy.solarize_p
    return _Params(box, flip, jitter, sigma, sol)


# --------------------------------------------------------------------------- kernels
def _interp_matrix(start: np.ndarray, length: np.ndarray, n_in: int, out: int) -> np.ndarray:
    """(B, out, n_in) bilinear weights sampling ``[start, start+length)`` at ``out`` points."""
    t = (np.arange(out) + 0.5) / out
    pos = np.clip(start[:, None] + t * length[:, None] - 0.5, 0.0, n_in - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    B = len(start)
    m = np.zeros((B, out, n_in))
    bi = np.arange(B)[:, None]
    oi = np.arange(out)[None, :]
    np.add.at(m, (bi, oi, lo), 1.0 - frac)
    np.add.at(m, (bi, oi, hi), frac)
    return m


def resample(images: np.ndarray, boxes: np.ndarray, out: int, flip: np.ndarray | None = None) -> np.ndarray:
    """Bilinear resample of per-image boxes (y0, x0, h, w) to ``out`` x ``out``.

    ``flip`` mirrors the selected outputs horizontally.
    """
    B, C, H, W = images.shape
    ry = _interp_matrix(boxes[:, 0], boxes[:, 2], H, out)
    rx = _interp_matrix(boxes[:, 1], boxes[:, 3], W, out)
    if flip is not None and flip.any():
        rx[flip] = rx[flip][:, ::-1]
    # columns first: the large input is consumed as one contiguous (C*H, W) block per image
    x = np.matmul(images.reshape(B, C * H, W), rx.transpose(0, 2, 1))  # B, C*H, out
    return np.matmul(ry[:, None], x.reshape(B, C, H, out))


def _gray(x: np.ndarray) -> np.ndarray:
    return 0.299 * x[:, 0:1] + 0.587 * x[:, 1:2] + 0.114 * x[:, 2:3]


def _jitter(x: np.ndarray, f: np.ndarray) -> np.ndarray:
    on = np.any(f != 1.0, axis=1)
    if not on.any():
        return x
    br = f[on, 0, None, None, None]
    co = f[on, 1, None, None, None]
    sa = f[on, 2, None, None, None]
    y = x[on] * br
    np.clip(y, 0.0, 1.0, out=y)
    m = _gray(y).mean(axis=(1, 2, 3), keepdims=True)
    y -= m
    y *= co
    y += m
    np.clip(y, 0.0, 1.0, out=y)
    g = _gray(y)
    y -= g
    y *= sa
    y += g
    np.clip(y, 0.0, 1.0, out=y)
    x = x.copy()
    x[on] = y
    return x


def _blur_matrix(sigma: np.ndarray, n: int) -> np.ndarray:
    """(B, n, n) Gaussian smoothing with reflect boundaries; sigma 0 gives identity."""
    R = BLUR_RADIUS
    taps = np.arange(-R, R + 1)
    on = sigma > 0
    s = np.where(on, sigma, 1.0)[:, None]
    k = np.exp(-0.5 * (taps[None, :] / s) ** 2)
    k /= k.sum(axis=1, keepdims=True)
    k[~on] = (taps == 0).astype(float)
    src = np.arange(n)[:, None] + taps[None, :]
    src = np.abs(src)
    src = np.where(src > n - 1, 2 * (n - 1) - src, src)  # reflect without edge repeat
    m = np.zeros((len(sigma), n, n))
    rows = np.broadcast_to(np.arange(n)[:, None], src.shape)
    for b in np.flatnonzero(on):
        np.add.at(m[b], (rows, src), np.broadcast_to(k[b], src.shape))
    m[~on] = np.eye(n)
    return m


def _blur(x: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    on = sigma > 0
    if not on.any():
        return x
    sub = x[on]
    ky = _blur_matrix(sigma[on], x.shape[2])
    kx = _blur_matrix(sigma[on], x.shape[3])
    x = x.copy()
    x[on] = np.matmul(np.matmul(ky[:, None], sub), kx.transpose(0, 2, 1)[:, None])
    return x


def augment_batch(
    images: np.ndarray, policy: AugPolicy, seeds, crop: str = "global"
) -> np.ndarray:
    """Augment (B, C, H, W) images; returns (B, C, out, out) float64 in [0, 1]."""
    if crop not in ("global", "local"):
        raise ParameterError(f"crop must be 'global' or 'local', got {crop!r}")
    x = np.asarray(images, dtype=np.float64)
    B, C, H, W = x.shape
    if len(seeds) != B:
        raise ParameterError("need one seed per image")
    p = _draw_params(seeds, policy, H, W, crop)
    x = resample(x, p.box, policy.out_size, p.flip)
    if "jitter" in policy.enabled:
        x = _jitter(x, p.jitter)
    if "blur" in policy.enabled:
        x = _blur(x, p.blur_sigma)
    if p.solarize.any():
        xs = x[p.solarize]
        x[p.solarize] = np.where(xs > policy.solarize_threshold, 1.0 - xs, xs)
    return np.clip(x, 0.0, 1.0)


def apply_augmentation(img, policy: AugPolicy, rng_seed: int, crop: str = "global") -> np.ndarray:
    """Augment one image (an :class:`ImageSample` or a (C, H, W) array)."""
    pixels = img.pixels if isinstance(img, ImageSample) else np.asarray(img)
    return augment_batch(pixels[None], policy, [rng_seed], crop)[0]


def resize(images: np.ndarray, out: int) -> np.ndarray:
    """Whole-image bilinear resize of a (B, C, H, W) batch."""
    x = np.asarray(images, dtype=np.float64)
    B, _, H, W = x.shape
    return resample(x, np.tile([0.0, 0.0, float(H), float(W)], (B, 1)), out)


# --------------------------------------------------------------------------- view sets
@dataclass(frozen=True)
class CropMix:
    real_local: int
    real_global: int
    syn_local: int
    syn_global: int

    def __post_init__(self):
        if min(self.real_local, self.real_global, self.syn_local, self.syn_global) < 0:
            raise ParameterError("crop counts must be non-negative")

    @property
    def n_global(self) -> int:
        return self.real_global + self.syn_global

    @property
    def total(self) -> int:
        return self.real_local + self.real_global + self.syn_local + self.syn_global

    def slots(self) -> list[tuple[bool, bool]]:
        """(is_synthetic, is_global) per view in emission order."""
        return (
            [(False, True)] * self.real_global
            + [(True, True)] * self.syn_global
            + [(False, False)] * self.real_local
            + [(True, False)] * self.syn_local
        )

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.real_local, self.real_global, self.syn_local, self.syn_global)


DEFAULT_CROPMIX = CropMix(6, 1, 2, 1)
CROPMIX_TABLE = (
    CropMix(8, 2, 0, 0),
    CropMix(0, 0, 8, 2),
    CropMix(2, 1, 6, 1),
    CropMix(4, 1, 4, 1),
    CropMix(6, 1, 2, 1),
)


@dataclass
class View:
    pixels: np.ndarray
    is_synthetic: bool
    is_global: bool


@dataclass
class ViewSet:
    views: list[View]
    source_index: int = -1

    def __len__(self) -> int:
        return len(self.views)

    @property
    def flags(self) -> list[tuple[bool, bool]]:
        return [(v.is_synthetic, v.is_global) for v in self.views]


PAIR_MODES = ("real_real", "syn_syn", "mix")


def view_seeds(seed: int, n: int) -> np.ndarray:
    return np.random.SeedSequence(int(seed)).generate_state(n, dtype=np.uint64)


def _check_syn(mode_needs_syn: bool, real_labels, syn, syn_labels) -> None:
    if not mode_needs_syn:
        return
    if syn is None:
        raise ContractError("this view mode needs a synthetic counterpart")
    if syn_labels is not None and np.any(np.asarray(real_labels) != np.asarray(syn_labels)):
        raise ContractError("real and synthetic images carry different class ids")


def build_pair_batch(real, syn, mode: str, policy: AugPolicy, seeds, real_labels=None, syn_labels=None):
    """Two augmented views per image; returns ``(view1, view2)`` batches."""
    if mode not in PAIR_MODES:
        raise ParameterError(f"unknown pair mode {mode!r}")
    _check_syn(mode != "real_real", real_labels, syn, syn_labels)
    vs = np.stack([view_seeds(s, 2) for s in seeds])
    src1 = syn if mode == "syn_syn" else real
    src2 = real if mode == "real_real" else syn
    return augment_batch(src1, policy, vs[:, 0]), augment_batch(src2, policy, vs[:, 1])


def build_pair(
    real: ImageSample, syn: ImageSample | None, mode: str, policy: AugPolicy, rng_seed: int, source_index: int = -1
) -> ViewSet:
    if mode != "real_real":
        _check_syn(True, [real.class_id], syn, None if syn is None else [syn.class_id])
    syn_px = None if syn is None else syn.pixels[None]
    v1, v2 = build_pair_batch(real.pixels[None], syn_px, mode, policy, [rng_seed])
    flags = {"real_real": (False, False), "syn_syn": (True, True), "mix": (False, True)}[mode]
    return ViewSet([View(v1[0], flags[0], True), View(v2[0], flags[1], True)], source_index)


def build_multicrop_batch(real, syn, mix: CropMix, policy: AugPolicy, seeds, real_labels=None, syn_labels=None):
    """Multi-crop views per image; returns a list of ``(batch, is_synthetic, is_global)``."""
    if mix.n_global < 1:
        raise ContractError("a crop mix needs at least one global view")
    _check_syn(mix.syn_local + mix.syn_global > 0, real_labels, syn, syn_labels)
    slots = mix.slots()
    vs = np.stack([view_seeds(s, len(slots)) for s in seeds])
    out = []
    for j, (is_syn, is_glob) in enumerate(slots):
        src = syn if is_syn else real
        out.append((augment_batch(src, policy, vs[:, j], "global" if is_glob else "local"), is_syn, is_glob))
    return out


def build_multicrop(
    real: ImageSample, syn: ImageSample | None, mix: CropMix, policy: AugPolicy, rng_seed: int, source_index: int = -1
) -> ViewSet:
    if mix.n_global < 1:
        raise ContractError("a crop mix needs at least one global view")
    needs_syn = mix.syn_local + mix.syn_global > 0
    if needs_syn:
        _check_syn(True, [real.class_id], syn, None if syn is None else [syn.class_id])
    syn_px = None if syn is None else syn.pixels[None]
    batches = build_multicrop_batch(real.pixels[None], syn_px, mix, policy, [rng_seed])
    return ViewSet([View(b[0], s, g) for b, s, g in batches], source_index)
