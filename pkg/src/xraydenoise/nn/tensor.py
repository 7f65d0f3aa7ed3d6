"""Tensor wrapper used at module boundaries.

Internally the network works on plain ndarrays; Tensor exists so public
entry points have a place to hang the finiteness invariant and an optional
gradient slot.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ContractError


@dataclass
class Tensor:
    """An ndarray plus an optional gradient of the same shape.

    values must be finite; ops that can overflow are expected to raise
    rather than hand back inf/nan wrapped in a Tensor.
    """

    values: np.ndarray
    requires_grad: bool = False
    grad: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if not np.issubdtype(self.values.dtype, np.floating):
            raise ContractError(f"tensor dtype must be floating, got {self.values.dtype}")
        if not np.all(np.isfinite(self.values)):
            raise ContractError("tensor contains non-finite values")
        if self.grad is not None and self.grad.shape != self.values.shape:
            raise ContractError(
                f"grad shape {self.grad.shape} != values shape {self.values.shape}"
            )

    @property
    def shape(self):
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    @property
    def numel(self) -> int:
        return int(self.values.size)


def as_array(x) -> np.ndarray:
    """Accept a Tensor or anything array-like, return the raw ndarray."""
    if isinstance(x, Tensor):
        return x.values
    return np.asarray(x)
