"""Procedural glyph world: real renders, synthetic counterparts, shifted renders.

Each image is a rendered glyph (the class) under nuisance parameters drawn
from a :class:`Latent`. A synthetic counterpart re-renders the same class
with nuisance jittered around the source and pixel noise added; both spreads
grow with the guidance scale ``k``.

Seeds are 64-bit integers whose top byte names a stream (train, test, v2,
...). Streams never collide, which is how split hygiene is enforced.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractError, ParameterError

TWO_PI = 2.0 * np.pi

BASE_GLYPHS = (
    "disc", "ring", "square", "triangle", "cross",
    "star", "bar", "checker", "blob", "spiral",
)
TRANSFER_GLYPHS = (
    "hexagon", "crescent", "three_dots", "double_bar", "semicircle",
    "arc", "l_shape", "t_shape", "hourglass", "wave",
)
GLYPH_SETS = {"base": BASE_GLYPHS, "transfer": TRANSFER_GLYPHS}

SHIFT_KINDS = ("v2", "sketch", "rendition", "corrupted", "adversarial_pose")

K_MIN, K_MAX = 1.0, 16.0
SCALE_RANGE = (0.3, 0.9)
# glyph placement in unit image coordinates: centre = lo + span * position, radius = R * scale
CENTER_LO, CENTER_SPAN = 0.3, 0.4
GLYPH_RADIUS = 0.6
# Real images are drawn in grey levels. A random per-image hue (even a faint
# tint) survives every augmentation, so two views match on colour alone and
# contrastive training never has to look at the glyph.
MIN_CONTRAST = 0.2

# seed streams (top 8 bits of a 64-bit seed)
STREAMS = {
    "train": 1, "test": 2, "v2": 3, "shift": 4, "synthetic": 5,
    "augment": 6, "transfer_train": 7, "transfer_test": 8, "misc": 9,
}
_STREAM_NAMES = {v: k for k, v in STREAMS.items()}
_LOW_MASK = (1 << 56) - 1


def derive_seed(root: int, stream: str, *index: int) -> int:
    """64-bit seed for ``(root, stream, index...)`` tagged with its stream."""
    sid = STREAMS[stream]
    ss = np.random.SeedSequence(entropy=int(root) & ((1 << 64) - 1), spawn_key=(sid, *map(int, index)))
    low = int(ss.generate_state(1, dtype=np.uint64)[0]) & _LOW_MASK
    return (sid << 56) | low


def seed_stream(seed: int) -> str | None:
    return _STREAM_NAMES.get((int(seed) >> 56) & 0xFF)


def sigma_nuisance(k: float) -> float:
    """Nuisance spread as a fraction of each parameter's range."""
    return 0.05 * (1.0 + k / 4.0)


def sigma_pixel(k: float) -> float:
    """Pixel-degradation amplitude."""
    return 0.02 * k


# The pixel degradation is mostly a per-image colour cast (CAST_GAIN * sigma_pixel
# per channel) plus weak white noise. White noise alone pushes every degraded image
# along one shared feature direction, so counterparts come out *less* diverse than
# their sources; a cast moves each image in its own direction.
CAST_GAIN = 2.0
NOISE_GAIN = 0.25


def _check_k(k: float) -> float:
    k = float(k)
    if not (K_MIN <= k <= K_MAX):
        raise ParameterError(f"guidance scale must lie in [{K_MIN}, {K_MAX}], got {k}")
    return k


@dataclass(frozen=True)
class Latent:
    class_id: int
    position: tuple[float, float]
    scale: float
    rotation: float
    fg_color: tuple[float, float, float]
    bg_color: tuple[float, float, float]
    texture_phase: float

    def validate(self, n_classes: int) -> None:
        if not 0 <= self.class_id < n_classes:
            raise ParameterError(f"class_id {self.class_id} outside [0, {n_classes})")
        vals = (*self.position, *self.fg_color, *self.bg_color)
        if min(vals) < 0.0 or max(vals) > 1.0:
            raise ParameterError("position and colours must lie in [0, 1]")
        if not SCALE_RANGE[0] <= self.scale <= SCALE_RANGE[1]:
            raise ParameterError(f"scale {self.scale} outside {SCALE_RANGE}")


@dataclass(frozen=True)
class ImageSample:
    pixels: np.ndarray  # (C, H, W) in [0, 1]
    latent: Latent
    provenance: str  # "real" | "synthetic" | "shift"
    seed: int
    guidance: float | None = None
    shift_kind: str | None = None
    glyph_set: str = "base"

    @property
    def class_id(self) -> int:
        return self.latent.class_id


def _luminance(c) -> float:
    return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]


def sample_latent(class_id: int, rng: np.random.Generator) -> Latent:
    fg_level = rng.uniform(0.0, 1.0)
    bg_level = rng.uniform(0.0, 1.0)
    while abs(fg_level - bg_level) < MIN_CONTRAST:
        bg_level = rng.uniform(0.0, 1.0)
    fg = np.full(3, fg_level)
    bg = np.full(3, bg_level)
    return Latent(
        class_id=int(class_id),
        position=tuple(rng.uniform(0.0, 1.0, 2)),
        scale=float(rng.uniform(*SCALE_RANGE)),
        rotation=float(rng.uniform(0.0, TWO_PI)),
        fg_color=tuple(fg),
        bg_color=tuple(bg),
        texture_phase=float(rng.uniform(0.0, TWO_PI)),
    )


# --------------------------------------------------------------------------- glyphs
def _box(x, y, hx, hy):
    dx = np.abs(x) - hx
    dy = np.abs(y) - hy
    return np.hypot(np.maximum(dx, 0), np.maximum(dy, 0)) + np.minimum(np.maximum(dx, dy), 0)


def _polygon(x, y, n, r):
    """Approximate signed distance to a regular n-gon with circumradius ``r``."""
    ang = np.arctan2(y, x)
    sector = TWO_PI / n
    a = np.mod(ang + sector / 2, sector) - sector / 2
    rad = np.hypot(x, y)
    apothem = r * np.cos(np.pi / n)
    return rad * np.cos(a) - apothem


def _triangle(x, y, r):
    return _polygon(x, y - 0.15, 3, r)


def glyph_sdf(name: str, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Signed distance (negative inside) of glyph ``name`` in unit glyph space."""
    r = np.hypot(x, y)
    th = np.arctan2(y, x)
    if name == "disc":
        return r - 0.9
    if name == "ring":
        return np.abs(r - 0.68) - 0.2
    if name == "square":
        return _box(x, y, 0.72, 0.72)
    if name == "triangle":
        return _triangle(x, y, 0.95)
    if name == "cross":
        return np.minimum(_box(x, y, 0.9, 0.24), _box(x, y, 0.24, 0.9))
    if name == "star":
        return r - (0.55 + 0.38 * np.cos(5 * th))
    if name == "bar":
        return _box(x, y, 0.95, 0.22)
    if name == "checker":
        inside = _box(x, y, 0.8, 0.8)
        cells = np.sin(np.pi * x / 0.4) * np.sin(np.pi * y / 0.4)
        return np.maximum(inside, -cells * 0.4)
    if name == "blob":
        return r - (0.68 + 0.16 * np.cos(3 * th) + 0.1 * np.sin(2 * th + 0.7))
    if name == "spiral":
        b = 0.9 / (2 * TWO_PI)
        t = np.mod(th, TWO_PI)
        n = np.round((r / b - t) / TWO_PI)
        d = np.abs(r - b * (t + TWO_PI * np.clip(n, 0, 1)))
        return np.maximum(d - 0.09, r - 0.95)
    if name == "hexagon":
        return _polygon(x, y, 6, 0.88)
    if name == "crescent":
        return np.maximum(r - 0.88, -(np.hypot(x - 0.42, y) - 0.7))
    if name == "three_dots":
        ds = [np.hypot(x - 0.6 * np.cos(a), y - 0.6 * np.sin(a)) - 0.3 for a in (0.0, TWO_PI / 3, 2 * TWO_PI / 3)]
        return np.minimum(np.minimum(ds[0], ds[1]), ds[2])
    if name == "double_bar":
        return np.minimum(_box(x, y - 0.45, 0.9, 0.17), _box(x, y + 0.45, 0.9, 0.17))
    if name == "semicircle":
        return np.maximum(r - 0.9, -(y + 0.1))
    if name == "arc":
        ring = np.abs(r - 0.7) - 0.16
        return np.maximum(ring, -(y + 0.2))
    if name == "l_shape":
        return np.minimum(_box(x + 0.55, y, 0.22, 0.9), _box(x, y - 0.68, 0.77, 0.22))
    if name == "t_shape":
        return np.minimum(_box(x, y + 0.68, 0.9, 0.22), _box(x, y + 0.1, 0.22, 0.8))
    if name == "hourglass":
        return np.maximum(_box(x, y, 0.75, 0.9), np.abs(x) - 0.75 * np.abs(y) - 0.08)
    if name == "wave":
        return np.maximum(np.abs(y - 0.35 * np.sin(3.2 * x)) - 0.2, np.abs(x) - 0.95)
    raise ParameterError(f"unknown glyph {name!r}")


def render(
    latent: Latent,
    size: int = 64,
    glyph_set: str = "base",
    texture: str = "stripes",
) -> np.ndarray:
    """Render ``latent`` to a (3, size, size) array in [0, 1]."""
    glyphs = GLYPH_SETS[glyph_set]
    latent.validate(len(glyphs))
    u = (np.arange(size) + 0.5) / size
    yy, xx = np.meshgrid(u, u, indexing="ij")
    cx = CENTER_LO + CENTER_SPAN * latent.position[0]
    cy = CENTER_LO + CENTER_SPAN * latent.position[1]
    radius = GLYPH_RADIUS * latent.scale
    c, s = np.cos(latent.rotation), np.sin(latent.rotation)
    dx, dy = (xx - cx) / radius, (yy - cy) / radius
    gx = c * dx + s * dy
    gy = -s * dx + c * dy
    d = glyph_sdf(glyphs[latent.class_id], gx, gy)
    px = 1.0 / (size * radius)  # one pixel in glyph units
    mask = np.clip(0.5 - d / (1.5 * px), 0.0, 1.0)

    if texture == "stripes":
        tex = 0.82 + 0.18 * np.sin(9.0 * gx + latent.texture_phase)
    elif texture == "dots":
        tex = 0.65 + 0.35 * (np.sin(10.0 * gx + latent.texture_phase) * np.sin(10.0 * gy) > 0.2)
    else:
        raise ParameterError(f"unknown texture {texture!r}")

    fg = np.asarray(latent.fg_color)[:, None, None] * tex[None]
    bg = np.asarray(latent.bg_color)[:, None, None] * np.ones((1, size, size))
    img = mask[None] * fg + (1.0 - mask[None]) * bg
    return np.clip(img, 0.0, 1.0)


# --------------------------------------------------------------------------- sampling
def sample_real(
    class_id: int,
    rng_seed: int,
    size: int = 64,
    glyph_set: str = "base",
) -> ImageSample:
    n = len(GLYPH_SETS[glyph_set])
    if not 0 <= int(class_id) < n:
        raise ParameterError(f"class_id {class_id} outside [0, {n})")
    rng = np.random.default_rng(int(rng_seed))
    lat = sample_latent(class_id, rng)
    return ImageSample(render(lat, size, glyph_set), lat, "real", int(rng_seed), glyph_set=glyph_set)


def _reflect(v: np.ndarray, lo: float, hi: float) -> np.ndarray:
    span = hi - lo
    t = np.mod(v - lo, 2 * span)
    return lo + np.where(t > span, 2 * span - t, t)


def jitter_latent(lat: Latent, spread: float, rng: np.random.Generator) -> Latent:
    """Resample nuisance around ``lat`` with std ``spread`` times each range."""
    e = rng.standard_normal(12)
    lo, hi = SCALE_RANGE
    return Latent(
        class_id=lat.class_id,
        position=tuple(_reflect(np.asarray(lat.position) + spread * e[0:2], 0.0, 1.0)),
        scale=float(_reflect(lat.scale + spread * (hi - lo) * e[2], lo, hi)),
        rotation=float(np.mod(lat.rotation + spread * TWO_PI * e[3], TWO_PI)),
        fg_color=tuple(_reflect(np.asarray(lat.fg_color) + spread * e[4:7], 0.0, 1.0)),
        bg_color=tuple(_reflect(np.asarray(lat.bg_color) + spread * e[7:10], 0.0, 1.0)),
        texture_phase=float(np.mod(lat.texture_phase + spread * TWO_PI * e[10], TWO_PI)),
    )


def synth_counterpart(sample: ImageSample, k: float, rng_seed: int) -> ImageSample:
    """Synthetic view of ``sample``: same class, jittered nuisance, colour cast and noise.

    The same ``rng_seed`` used at different ``k`` draws the same underlying
    noise, scaled by the guidance-dependent spreads.
    """
    k = _check_k(k)
    if sample.provenance != "real":
        raise ContractError("synthetic counterparts are only generated from real images")
    rng = np.random.default_rng(int(rng_seed))
    lat = jitter_latent(sample.latent, sigma_nuisance(k), rng)
    size = sample.pixels.shape[-1]
    img = render(lat, size, sample.glyph_set)
    s = sigma_pixel(k)
    img = np.clip(img + CAST_GAIN * s * rng.standard_normal((3, 1, 1)), 0.0, 1.0)
    img = np.clip(img + NOISE_GAIN * s * rng.standard_normal(img.shape), 0.0, 1.0)
    return ImageSample(img, lat, "synthetic", int(rng_seed), guidance=k, glyph_set=sample.glyph_set)


# --------------------------------------------------------------------------- shifts
def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur of a (C, H, W) image with reflect padding."""
    if sigma <= 0:
        return img
    rad = max(1, int(np.ceil(3 * sigma)))
    t = np.arange(-rad, rad + 1)
    kern = np.exp(-0.5 * (t / sigma) ** 2)
    kern /= kern.sum()
    pad = np.pad(img, ((0, 0), (rad, rad), (rad, rad)), mode="reflect")
    h, w = img.shape[1:]
    tmp = sum(kern[i] * pad[:, i : i + h, :] for i in range(2 * rad + 1))
    return sum(kern[i] * tmp[:, :, i : i + w] for i in range(2 * rad + 1))


def _sketch(img: np.ndarray) -> np.ndarray:
    lum = 0.299 * img[0] + 0.587 * img[1] + 0.114 * img[2]
    gy, gx = np.gradient(lum)
    edges = np.clip(np.hypot(gx, gy) * 6.0, 0.0, 1.0)
    gray = 1.0 - edges
    return np.repeat(gray[None], 3, axis=0)


def _tail(rng: np.random.Generator, lo: float, hi: float, frac: float = 0.1, n: int | None = None):
    """Uniform draw from the outer ``frac`` of [lo, hi] on either side."""
    width = (hi - lo) * frac
    side = rng.random(n) < 0.5
    u = rng.uniform(0.0, width, n)
    return np.where(side, lo + u, hi - u)


def render_shift(sample: ImageSample, kind: str, rng_seed: int | None = None) -> ImageSample:
    """Render a distribution-shifted version of a real ``sample``.

    ``rng_seed`` defaults to a seed derived from ``sample.seed``. For ``v2``
    it must come from the ``v2`` stream.
    """
    if kind not in SHIFT_KINDS:
        raise ParameterError(f"unknown shift kind {kind!r}; expected one of {SHIFT_KINDS}")
    if sample.provenance != "real":
        raise ContractError("shifts are rendered from real images only")
    if rng_seed is None:
        rng_seed = derive_seed(sample.seed, "v2" if kind == "v2" else "shift", SHIFT_KINDS.index(kind))
    elif kind == "v2" and seed_stream(rng_seed) != "v2":
        raise ParameterError(f"v2 draws need a seed from the v2 stream, got stream {seed_stream(rng_seed)!r}")
    size = sample.pixels.shape[-1]
    gs = sample.glyph_set
    rng = np.random.default_rng(int(rng_seed))
    lat = sample.latent

    if kind == "v2":
        fresh = sample_real(lat.class_id, rng_seed, size, gs)
        img, lat = fresh.pixels, fresh.latent
    elif kind == "sketch":
        img = _sketch(sample.pixels)
    elif kind == "rendition":
        fg = np.asarray(lat.fg_color)
        bg = np.asarray(lat.bg_color)
        remap = lambda c: np.round((1.0 - c[::-1]) * 2.0) / 2.0  # noqa: E731
        new_fg, new_bg = remap(fg), remap(bg)
        if abs(_luminance(new_fg) - _luminance(new_bg)) < 0.2:
            new_bg = 1.0 - new_fg
        lat = replace(lat, fg_color=tuple(new_fg), bg_color=tuple(new_bg))
        img = render(lat, size, gs, texture="dots")
    elif kind == "corrupted":
        severity = int(rng.integers(1, 6))
        mode = int(rng.integers(0, 3))
        img = sample.pixels.copy()
        if mode == 0:
            img = gaussian_blur(img, 0.6 * severity)
        elif mode == 1:
            img = img + rng.normal(0.0, 0.06 * severity, img.shape)
        else:
            side = int(size * np.sqrt(0.06 * severity))
            r0, c0 = rng.integers(0, size - side + 1, 2)
            img[:, r0 : r0 + side, c0 : c0 + side] = rng.uniform(0.0, 1.0, (3, 1, 1))
        img = np.clip(img, 0.0, 1.0)
    else:  # adversarial_pose
        fg = _tail(rng, 0.0, 1.0, n=3)
        bg = _tail(rng, 0.0, 1.0, n=3)
        while abs(_luminance(fg) - _luminance(bg)) < 0.2:
            bg = _tail(rng, 0.0, 1.0, n=3)
        lat = Latent(
            class_id=lat.class_id,
            position=tuple(_tail(rng, 0.0, 1.0, n=2)),
            scale=float(_tail(rng, *SCALE_RANGE)),
            rotation=float(rng.uniform(0.0, TWO_PI)),
            fg_color=tuple(fg),
            bg_color=tuple(bg),
            texture_phase=float(rng.uniform(0.0, TWO_PI)),
        )
        img = render(lat, size, gs)
    return ImageSample(img, lat, "shift", int(rng_seed), shift_kind=kind, glyph_set=gs)
