"""Adam and SGD-momentum over a :class:`~mixview.params.ParamStore`."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .params import ParamStore


@dataclass
class OptimizerState:
    step: int = 0
    buffers: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)


class Optimizer:
    def __init__(self, params: ParamStore):
        self.params = params
        self.state = OptimizerState()

    def _grads(self) -> dict[str, np.ndarray]:
        grads = {}
        for name, p in self.params.items():
            if p.grad is None:
                raise ContractError(f"parameter {name!r} has no gradient")
            grads[name] = p.grad
        return grads

    def zero_grad(self) -> None:
        self.params.zero_grad()

    def step(self, lr: float) -> None:
        raise NotImplementedError


class SGD(Optimizer):
    """Plain SGD with optional heavy-ball momentum."""

    def __init__(self, params: ParamStore, momentum: float = 0.0):
        super().__init__(params)
        self.momentum = float(momentum)

    def step(self, lr: float) -> None:
        grads = self._grads()
        self.state.step += 1
        for name, p in self.params.items():
            g = grads[name]
            if self.momentum:
                buf = self.state.buffers.setdefault(name, {"velocity": np.zeros_like(p.data)})
                buf["velocity"] = self.momentum * buf["velocity"] + g
                g = buf["velocity"]
            p.data = p.data - lr * g


class Adam(Optimizer):
    def __init__(
        self,
        params: ParamStore,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        super().__init__(params)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay

    def step(self, lr: float) -> None:
        grads = self._grads()
        self.state.step += 1
        t = self.state.step
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for name, p in self.params.items():
            g = grads[name]
            buf = self.state.buffers.get(name)
            if buf is None:
                buf = {"m": np.zeros_like(p.data), "v": np.zeros_like(p.data)}
                self.state.buffers[name] = buf
            buf["m"] = self.beta1 * buf["m"] + (1.0 - self.beta1) * g
            buf["v"] = self.beta2 * buf["v"] + (1.0 - self.beta2) * g * g
            update = (buf["m"] / c1) / (np.sqrt(buf["v"] / c2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.data
            p.data = p.data - lr * update


def optimizer_step(optimizer: Optimizer, lr: float) -> None:
    optimizer.step(lr)
