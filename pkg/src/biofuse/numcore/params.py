"""Trainable parameter container used by every layer and the optimizer."""

import numpy as np


class Parameter:
    """A float64 array plus its gradient accumulator.

    ``fresh`` flips to True whenever a backward pass writes into ``grad``
    and back to False when the optimizer consumes it; the optimizer uses
    it to refuse stepping twice on the same gradients.
    """

    __slots__ = ("name", "value", "grad", "fresh")

    def __init__(self, value, name=""):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.name = name
        self.fresh = False

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return self.value.size

    def zero_grad(self):
        self.grad[...] = 0.0
        self.fresh = False

    def accumulate(self, g):
        """Add ``g`` into the gradient buffer and mark it fresh."""
        self.grad += g
        self.fresh = True

    def __repr__(self):
        return f"Parameter({self.name or '?'}, shape={self.value.shape})"
