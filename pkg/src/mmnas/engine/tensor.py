"""Reverse-mode autodiff core.

Every op output doubles as its tape node: it keeps the op name, references
to its inputs, whatever intermediates its backward closure captured, and a
gradient accumulator. Creation order is a topological order of the graph
(an output exists only after its inputs), so the backward pass walks nodes
by descending creation id and visits each exactly once; gradients
accumulate in that fixed order, which makes repeated runs bit-identical.
"""

from __future__ import annotations

import itertools

import numpy as np


class EngineError(RuntimeError):
    pass


class ShapeError(EngineError):
    pass


class NonFiniteError(EngineError):
    """An op produced NaN or Inf."""


_ids = itertools.count()


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op", "_tid")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._op = "leaf"
        self._tid = next(_ids)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        if self.data.size != 1:
            raise ShapeError(f"backward needs a scalar, got shape {self.shape}")
        seen = {self._tid}
        nodes = [self]
        stack = [self]
        while stack:
            node = stack.pop()
            for parent in node._parents:
                if parent._tid not in seen:
                    seen.add(parent._tid)
                    nodes.append(parent)
                    stack.append(parent)
        nodes.sort(key=lambda t: t._tid, reverse=True)
        self.grad = np.ones_like(self.data)
        for node in nodes:
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self):
        return f"Tensor(op={self._op}, shape={self.shape}, dtype={self.dtype})"


def make_node(data: np.ndarray, parents: tuple[Tensor, ...], op: str, backward=None) -> Tensor:
    """Wrap an op result; rejects non-finite values immediately."""
    if not np.isfinite(data).all():
        raise NonFiniteError(f"op '{op}' produced non-finite values")
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    out._parents = parents
    out._op = op
    if out.requires_grad:
        out._backward = backward
    return out
