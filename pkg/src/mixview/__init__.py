"""Joint-embedding self-supervised learning with synthetic counterpart views.

A small numpy laboratory: a reverse-mode autodiff core, a procedural image
world with a synthetic-counterpart generator, SimCLR / Barlow Twins / DINO
objectives that accept real-synthetic view pairs, a pretraining loop and a
linear-probe evaluation suite.
"""

from .errors import (
    ConfigError,
    ContractError,
    DegenerateInputError,
    DimensionError,
    FormatError,
    MixviewError,
    NumericalError,
    ParameterError,
)
from .tensor import Tensor, checked, no_grad, set_checked

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractError",
    "DegenerateInputError",
    "DimensionError",
    "FormatError",
    "MixviewError",
    "NumericalError",
    "ParameterError",
    "Tensor",
    "checked",
    "no_grad",
    "set_checked",
]
