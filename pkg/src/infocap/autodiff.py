"""Minimal dense-tensor core with tape-based reverse-mode autodiff.

Every value is a 64-bit float ndarray wrapped in a :class:`Tensor`. Ops
record a backward closure on the implicit tape (the graph of parent
links); ``backward()`` on a scalar loss walks that graph once in reverse
topological order and accumulates gradients into ``.grad``.

Only the shapes the captioner needs are supported: rank 0..2, no
broadcasting beyond explicit row-vector adds. Speed is irrelevant at the
scales this package targets; correctness is checked against central
finite differences in the test suite.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "tensor",
    "zeros",
    "no_grad",
    "checked_mode",
    "is_grad_enabled",
    "matmul",
    "add",
    "add_n",
    "mul",
    "scale",
    "add_rows",
    "tanh",
    "sigmoid",
    "log",
    "softmax",
    "concat",
    "slice1d",
    "stack_rows",
    "row",
    "sum_all",
    "dropout",
    "nll_from_logits",
]

_GRAD_ENABLED = True
_CHECKED = False


@contextmanager
def no_grad():
    """Disable tape recording inside the block (eval-mode forwards)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


@contextmanager
def checked_mode(enabled: bool = True):
    """Verify every op output is finite; trips a ValueError otherwise."""
    global _CHECKED
    prev = _CHECKED
    _CHECKED = enabled
    try:
        yield
    finally:
        _CHECKED = prev


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """A float64 ndarray plus the tape bookkeeping for reverse mode."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_done")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._done = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> np.ndarray:
        return self.data.copy()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable ``.grad``.

        Only valid on scalars. Calling it a second time on the same
        tensor raises: the saved activations are single-use.
        """
        if self.data.shape != ():
            raise ValueError(
                f"backward() requires a scalar, got shape {self.data.shape}"
            )
        if self._done:
            raise RuntimeError("backward() already called on this tensor; re-run the forward pass")
        self._done = True

        order = _toposort(self)
        self.grad = np.ones((), dtype=np.float64)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Convenience operators; everything routes through the op functions
    # below so the tape rules live in one place.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=np.float64), requires_grad=requires_grad)


def _toposort(root: Tensor) -> list[Tensor]:
    # Iterative DFS: unrolled recurrences at paper scale overflow the
    # interpreter stack with the recursive variant.
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad = t.grad + g


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward: Callable) -> Tensor:
    if _CHECKED and not np.all(np.isfinite(data)):
        raise ValueError("non-finite value produced in checked mode")
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# Ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix/vector product for the rank combinations 2x2, 2x1, 1x2, 1x1."""
    if a.ndim == 2 and b.ndim == 2:
        if a.shape[1] != b.shape[0]:
            raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
        data = a.data @ b.data

        def backward(g):
            if a.requires_grad:
                _accumulate(a, g @ b.data.T)
            if b.requires_grad:
                _accumulate(b, a.data.T @ g)

    elif a.ndim == 2 and b.ndim == 1:
        if a.shape[1] != b.shape[0]:
            raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
        data = a.data @ b.data

        def backward(g):
            if a.requires_grad:
                _accumulate(a, np.outer(g, b.data))
            if b.requires_grad:
                _accumulate(b, a.data.T @ g)

    elif a.ndim == 1 and b.ndim == 2:
        if a.shape[0] != b.shape[0]:
            raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
        data = a.data @ b.data

        def backward(g):
            if a.requires_grad:
                _accumulate(a, b.data @ g)
            if b.requires_grad:
                _accumulate(b, np.outer(a.data, g))

    elif a.ndim == 1 and b.ndim == 1:
        if a.shape[0] != b.shape[0]:
            raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
        data = np.dot(a.data, b.data)

        def backward(g):
            if a.requires_grad:
                _accumulate(a, g * b.data)
            if b.requires_grad:
                _accumulate(b, g * a.data)

    else:
        raise ValueError(f"matmul supports rank 1 and 2 only, got {a.ndim} and {b.ndim}")
    return _make(data, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g)
        if b.requires_grad:
            _accumulate(b, g)

    return _make(a.data + b.data, (a, b), backward)


def add_n(terms: Sequence[Tensor]) -> Tensor:
    """Sum of same-shaped tensors as a single tape node."""
    terms = tuple(terms)
    if not terms:
        raise ValueError("add_n of zero terms")
    shape = terms[0].shape
    for t in terms:
        if t.shape != shape:
            raise ValueError(f"add_n shape mismatch: {t.shape} vs {shape}")
    data = terms[0].data.copy()
    for t in terms[1:]:
        data += t.data

    def backward(g):
        for t in terms:
            if t.requires_grad:
                _accumulate(t, g)

    return _make(data, terms, backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"mul shape mismatch: {a.shape} vs {b.shape}")

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * b.data)
        if b.requires_grad:
            _accumulate(b, g * a.data)

    return _make(a.data * b.data, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a constant; the constant never receives gradient."""
    c = float(c)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * c)

    return _make(a.data * c, (a,), backward)


def add_rows(mat: Tensor, vec: Tensor) -> Tensor:
    """Add a length-d vector to every row of an (n, d) matrix."""
    if mat.ndim != 2 or vec.ndim != 1 or mat.shape[1] != vec.shape[0]:
        raise ValueError(f"add_rows shape mismatch: {mat.shape} + {vec.shape}")

    def backward(g):
        if mat.requires_grad:
            _accumulate(mat, g)
        if vec.requires_grad:
            _accumulate(vec, g.sum(axis=0))

    return _make(mat.data + vec.data[None, :], (mat, vec), backward)


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * (1.0 - data * data))

    return _make(data, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    # Split by sign so exp never overflows.
    data = np.where(a.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(a.data))),
                    np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * data * (1.0 - data))

    return _make(data, (a,), backward)


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise ValueError("log of non-positive value")
    data = np.log(a.data)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g / a.data)

    return _make(data, (a,), backward)


def softmax(a: Tensor) -> Tensor:
    """Stable softmax over a non-empty 1-D tensor."""
    if a.ndim != 1 or a.shape[0] == 0:
        raise ValueError(f"softmax expects a non-empty 1-D tensor, got shape {a.shape}")
    shifted = a.data - a.data.max()
    e = np.exp(shifted)
    data = e / e.sum()

    def backward(g):
        if a.requires_grad:
            _accumulate(a, data * (g - np.dot(g, data)))

    return _make(data, (a,), backward)


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate 1-D tensors."""
    parts = tuple(parts)
    if not parts or any(p.ndim != 1 for p in parts):
        raise ValueError("concat expects one or more 1-D tensors")
    data = np.concatenate([p.data for p in parts])
    offsets = np.cumsum([0] + [p.shape[0] for p in parts])

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                _accumulate(p, g[lo:hi])

    return _make(data, parts, backward)


def slice1d(a: Tensor, start: int, stop: int) -> Tensor:
    if a.ndim != 1 or not (0 <= start <= stop <= a.shape[0]):
        raise ValueError(f"bad slice [{start}:{stop}] of shape {a.shape}")

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[start:stop] = g
            _accumulate(a, full)

    return _make(a.data[start:stop].copy(), (a,), backward)


def stack_rows(rows: Sequence[Tensor]) -> Tensor:
    """Stack equal-length 1-D tensors into an (n, d) matrix."""
    rows = tuple(rows)
    if not rows or any(r.ndim != 1 for r in rows):
        raise ValueError("stack_rows expects one or more 1-D tensors")
    data = np.stack([r.data for r in rows])

    def backward(g):
        for i, r in enumerate(rows):
            if r.requires_grad:
                _accumulate(r, g[i])

    return _make(data, rows, backward)


def row(mat: Tensor, index: int) -> Tensor:
    """Select one row of a matrix (embedding lookup)."""
    if mat.ndim != 2:
        raise ValueError(f"row expects a matrix, got shape {mat.shape}")
    if not (0 <= index < mat.shape[0]):
        raise IndexError(f"row {index} out of range for shape {mat.shape}")

    def backward(g):
        if mat.requires_grad:
            full = np.zeros_like(mat.data)
            full[index] = g
            _accumulate(mat, full)

    return _make(mat.data[index].copy(), (mat,), backward)


def sum_all(a: Tensor) -> Tensor:
    def backward(g):
        if a.requires_grad:
            _accumulate(a, np.full(a.shape, g, dtype=np.float64))

    return _make(np.asarray(a.data.sum()), (a,), backward)


def dropout(a: Tensor, keep_prob: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: keep with probability p, scale kept units by 1/p.

    Callers skip this op entirely at eval time (and when keep_prob is 1),
    so the eval path never consumes randomness.
    """
    if not (0.0 < keep_prob <= 1.0):
        raise ValueError(f"keep_prob must be in (0, 1], got {keep_prob}")
    mask = (rng.random(a.shape) < keep_prob).astype(np.float64) / keep_prob

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * mask)

    return _make(a.data * mask, (a,), backward)


def nll_from_logits(logits: Tensor, target: int) -> Tensor:
    """-log softmax(logits)[target], fused via log-sum-exp.

    Gradient is softmax(logits) minus the target one-hot, the usual
    numerically exact form.
    """
    if logits.ndim != 1:
        raise ValueError(f"nll_from_logits expects 1-D logits, got shape {logits.shape}")
    if not (0 <= target < logits.shape[0]):
        raise IndexError(f"target {target} out of range for {logits.shape[0]} classes")
    m = logits.data.max()
    lse = m + np.log(np.exp(logits.data - m).sum())
    data = np.asarray(lse - logits.data[target])

    def backward(g):
        if logits.requires_grad:
            p = np.exp(logits.data - lse)
            p[target] -= 1.0
            _accumulate(logits, g * p)

    return _make(data, (logits,), backward)
