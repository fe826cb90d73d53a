"""Small convolutional encoder with projector and optional heads."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import FormatError
from .nn import conv2d, global_avg_pool, linear
from .params import ParamStore
from .tensor import Tensor, as_tensor


@dataclass(frozen=True)
class EncoderSpec:
    in_channels: int = 3
    input_size: int = 32
    channels: tuple[int, ...] = (16, 32, 64)
    kernel: int = 3
    stride: int = 2
    proj_hidden: int = 128
    proj_dim: int = 64
    head_dim: int = 0  # DINO output dimension; 0 disables the head
    n_classes: int = 0  # supervised classifier; 0 disables it

    @property
    def feature_dim(self) -> int:
        return self.channels[-1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderSpec":
        d = dict(d)
        d["channels"] = tuple(d["channels"])
        return cls(**d)


def _he(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


def _bias(rng: np.random.Generator, n: int, fan_in: int) -> np.ndarray:
    # nonzero biases keep a blank input (e.g. a saturated crop after solarization)
    # from mapping to an exactly-zero embedding at initialization
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, n)


def init_params(spec: EncoderSpec, seed: int) -> ParamStore:
    rng = np.random.default_rng(seed)
    p = ParamStore()
    cin = spec.in_channels
    for i, cout in enumerate(spec.channels, start=1):
        fan_in = cin * spec.kernel * spec.kernel
        p[f"conv{i}.weight"] = _he(rng, (cout, cin, spec.kernel, spec.kernel), fan_in)
        p[f"conv{i}.bias"] = _bias(rng, cout, fan_in)
        cin = cout
    p["proj.0.weight"] = _he(rng, (spec.feature_dim, spec.proj_hidden), spec.feature_dim)
    p["proj.0.bias"] = _bias(rng, spec.proj_hidden, spec.feature_dim)
    p["proj.1.weight"] = rng.standard_normal((spec.proj_hidden, spec.proj_dim)) / np.sqrt(spec.proj_hidden)
    p["proj.1.bias"] = _bias(rng, spec.proj_dim, spec.proj_hidden)
    if spec.head_dim:
        p["head.weight"] = rng.standard_normal((spec.proj_dim, spec.head_dim)) / np.sqrt(spec.proj_dim)
    if spec.n_classes:
        p["classifier.weight"] = rng.standard_normal((spec.feature_dim, spec.n_classes)) / np.sqrt(spec.feature_dim)
        p["classifier.bias"] = _bias(rng, spec.n_classes, spec.feature_dim)
    return p


class Encoder:
    """Functional wrapper binding an :class:`EncoderSpec` to a parameter store."""

    def __init__(self, spec: EncoderSpec, params: ParamStore):
        self.spec = spec
        self.params = params
        self.validate()

    @classmethod
    def create(cls, spec: EncoderSpec, seed: int) -> "Encoder":
        return cls(spec, init_params(spec, seed))

    def validate(self) -> None:
        expected = init_params(self.spec, 0).structure()
        if self.params.structure() != expected:
            raise FormatError("parameter store does not match encoder spec")

    def features(self, x) -> Tensor:
        """Pooled backbone features, shape (B, feature_dim)."""
        h = as_tensor(x)
        p = self.params
        for i in range(1, len(self.spec.channels) + 1):
            h = conv2d(h, p[f"conv{i}.weight"], p[f"conv{i}.bias"], stride=self.spec.stride).relu()
        return global_avg_pool(h)

    def project(self, h: Tensor) -> Tensor:
        p = self.params
        h = linear(h, p["proj.0.weight"], p["proj.0.bias"]).relu()
        return linear(h, p["proj.1.weight"], p["proj.1.bias"])

    def head(self, z: Tensor) -> Tensor:
        """DINO output layer: cosine between the unit embedding and unit weight columns.

        Fixing both norms pins the logit scale, so the student cannot flatten its
        outputs by shrinking them and drag the EMA teacher to a uniform distribution.
        """
        z = as_tensor(z)
        w = self.params["head.weight"]
        z = z / ((z * z).sum(axis=1, keepdims=True) ** 0.5)
        w = w / ((w * w).sum(axis=0, keepdims=True) ** 0.5)
        return z @ w

    def classify(self, h: Tensor) -> Tensor:
        return linear(h, self.params["classifier.weight"], self.params["classifier.bias"])

    def __call__(self, x) -> Tensor:
        return self.project(self.features(x))
