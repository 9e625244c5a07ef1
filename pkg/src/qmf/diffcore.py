"""Reverse-mode automatic differentiation over dense 2-D float64 arrays.

A Tape records a Wengert list of operations; a Var is a handle to one node
on a tape. Node values are immutable Matrix instances and every backward
closure is pure, so walking the same tape backward twice produces identical
gradients (this is the chosen contract; repeated passes are not rejected).

The op set is deliberately small and closed: dense matmul, temperature-scaled
row-wise log-sum-exp, mean softmax cross-entropy, and the elementwise /
broadcast helpers needed to assemble weighted-fusion training losses
(per-row scaling, row gathering for pair sampling, stop-gradient). There is
no general broadcasting and there are no dynamic shapes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, LabelError, ShapeError

__all__ = [
    "Matrix",
    "Tape",
    "Var",
    "add",
    "add_bias",
    "absolute",
    "backward",
    "gather_rows",
    "logsumexp_rows",
    "matmul",
    "mean",
    "relu",
    "scale",
    "scale_rows",
    "shift",
    "softmax_cross_entropy",
    "stop_gradient",
    "sub",
    "sum_all",
]


class Matrix:
    """Immutable 2-D float64 array, row-major. Non-finite entries are rejected."""

    __slots__ = ("_a",)

    def __init__(self, values) -> None:
        a = np.array(values, dtype=np.float64, order="C")
        if a.ndim == 1:
            a = a.reshape(1, -1)
        if a.ndim != 2 or a.size == 0:
            raise DimensionError(f"expected a non-empty 2-D array, got shape {a.shape}")
        if not np.isfinite(a).all():
            raise ValueError("matrix entries must be finite")
        a.flags.writeable = False
        self._a = a

    @property
    def array(self) -> np.ndarray:
        """Read-only ndarray view of the contents."""
        return self._a

    @property
    def rows(self) -> int:
        return self._a.shape[0]

    @property
    def cols(self) -> int:
        return self._a.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._a.shape

    def tolist(self) -> list[list[float]]:
        return self._a.tolist()

    def __getstate__(self):
        return np.array(self._a)

    def __setstate__(self, state):
        self.__init__(state)

    def __repr__(self) -> str:
        return f"Matrix({self._a.tolist()!r})"


@dataclass(frozen=True)
class _Node:
    value: Matrix
    parents: tuple[int, ...]
    # maps the output gradient to one contribution per parent (None = no flow)
    bwd: Optional[Callable[[np.ndarray], tuple[Optional[np.ndarray], ...]]]


@dataclass(frozen=True)
class Var:
    """Handle to a node on a tape."""

    tape: "Tape"
    nid: int

    @property
    def value(self) -> Matrix:
        return self.tape.node(self.nid).value

    @property
    def array(self) -> np.ndarray:
        return self.value.array

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape


class Tape:
    """Append-only record of a forward computation."""

    def __init__(self) -> None:
        self._nodes: list[_Node] = []

    def __len__(self) -> int:
        return len(self._nodes)

    def node(self, nid: int) -> _Node:
        return self._nodes[nid]

    def leaf(self, value) -> Var:
        """Record an input with no parents."""
        m = value if isinstance(value, Matrix) else Matrix(value)
        return self._record(m, (), None)

    def _record(self, value: Matrix, parents: tuple[int, ...], bwd) -> Var:
        self._nodes.append(_Node(value, parents, bwd))
        return Var(self, len(self._nodes) - 1)


def _tape_of(*vs: Var) -> Tape:
    tape = vs[0].tape
    for v in vs[1:]:
        if v.tape is not tape:
            raise ValueError("operands live on different tapes")
    return tape


def backward(loss: Var) -> dict[int, Matrix]:
    """Gradients of a scalar loss with respect to every reachable node.

    Returns a map node-id -> gradient Matrix. Each node's gradient is
    accumulated exactly once, in reverse topological (= reverse recording)
    order. The pass does not mutate the tape, so repeating it gives
    identical results.
    """
    if loss.value.shape != (1, 1):
        raise ShapeError(f"backward requires a 1x1 loss, got shape {loss.value.shape}")
    tape = loss.tape
    grads: dict[int, np.ndarray] = {loss.nid: np.ones((1, 1))}
    for nid in range(loss.nid, -1, -1):
        g = grads.get(nid)
        if g is None:
            continue
        node = tape.node(nid)
        if node.bwd is None:
            continue
        for pid, contrib in zip(node.parents, node.bwd(g)):
            if contrib is None:
                continue
            acc = grads.get(pid)
            grads[pid] = contrib if acc is None else acc + contrib
    return {nid: Matrix(g) for nid, g in grads.items()}


# ---------------------------------------------------------------------------
# ops


def matmul(a: Var, b: Var) -> Var:
    tape = _tape_of(a, b)
    av, bv = a.array, b.array
    if av.shape[1] != bv.shape[0]:
        raise DimensionError(f"matmul inner dimensions differ: {av.shape} @ {bv.shape}")

    def bwd(g: np.ndarray):
        return g @ bv.T, av.T @ g

    return tape._record(Matrix(av @ bv), (a.nid, b.nid), bwd)


def _elementwise_pair(a: Var, b: Var, op: str) -> tuple[Tape, np.ndarray, np.ndarray]:
    tape = _tape_of(a, b)
    av, bv = a.array, b.array
    if av.shape != bv.shape:
        raise DimensionError(f"{op} requires equal shapes, got {av.shape} and {bv.shape}")
    return tape, av, bv


def add(a: Var, b: Var) -> Var:
    tape, av, bv = _elementwise_pair(a, b, "add")
    return tape._record(Matrix(av + bv), (a.nid, b.nid), lambda g: (g, g))


def sub(a: Var, b: Var) -> Var:
    tape, av, bv = _elementwise_pair(a, b, "sub")
    return tape._record(Matrix(av - bv), (a.nid, b.nid), lambda g: (g, -g))


def scale(a: Var, c: float) -> Var:
    c = float(c)
    return a.tape._record(Matrix(a.array * c), (a.nid,), lambda g: (g * c,))


def shift(a: Var, c: float) -> Var:
    c = float(c)
    return a.tape._record(Matrix(a.array + c), (a.nid,), lambda g: (g,))


def relu(a: Var) -> Var:
    av = a.array
    mask = av > 0.0  # derivative at exactly 0 is taken to be 0
    return a.tape._record(Matrix(np.where(mask, av, 0.0)), (a.nid,), lambda g: (g * mask,))


def absolute(a: Var) -> Var:
    av = a.array
    sgn = np.sign(av)  # sign(0) == 0, consistent with relu'(0) == 0
    return a.tape._record(Matrix(np.abs(av)), (a.nid,), lambda g: (g * sgn,))


def mean(a: Var) -> Var:
    av = a.array
    size = av.size

    def bwd(g: np.ndarray):
        return (np.full(av.shape, g[0, 0] / size),)

    return a.tape._record(Matrix([[av.mean()]]), (a.nid,), bwd)


def sum_all(a: Var) -> Var:
    av = a.array

    def bwd(g: np.ndarray):
        return (np.full(av.shape, g[0, 0]),)

    return a.tape._record(Matrix([[av.sum()]]), (a.nid,), bwd)


def add_bias(x: Var, b: Var) -> Var:
    """x: (n, k) plus a (1, k) bias row broadcast over rows."""
    tape = _tape_of(x, b)
    xv, bv = x.array, b.array
    if bv.shape[0] != 1 or bv.shape[1] != xv.shape[1]:
        raise DimensionError(f"bias must be (1, {xv.shape[1]}), got {bv.shape}")

    def bwd(g: np.ndarray):
        return g, g.sum(axis=0, keepdims=True)

    return tape._record(Matrix(xv + bv), (x.nid, b.nid), bwd)


def scale_rows(x: Var, s: Var) -> Var:
    """Multiply row i of x (n, k) by the scalar s[i] from s (n, 1)."""
    tape = _tape_of(x, s)
    xv, sv = x.array, s.array
    if sv.shape != (xv.shape[0], 1):
        raise DimensionError(f"row scales must be ({xv.shape[0]}, 1), got {sv.shape}")

    def bwd(g: np.ndarray):
        return g * sv, (g * xv).sum(axis=1, keepdims=True)

    return tape._record(Matrix(xv * sv), (x.nid, s.nid), bwd)


def gather_rows(x: Var, indices: Sequence[int]) -> Var:
    """Select rows of x by index (duplicates allowed); gradients scatter-add back."""
    xv = x.array
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise DimensionError("indices must be a non-empty 1-D integer sequence")
    if idx.min() < 0 or idx.max() >= xv.shape[0]:
        raise DimensionError(f"row index out of range for {xv.shape[0]} rows")

    def bwd(g: np.ndarray):
        gx = np.zeros_like(xv)
        np.add.at(gx, idx, g)
        return (gx,)

    return x.tape._record(Matrix(xv[idx]), (x.nid,), bwd)


def stop_gradient(a: Var) -> Var:
    """Identity in the forward pass; blocks all gradient flow backward."""
    av = a.array

    def bwd(g: np.ndarray):
        return (np.zeros(av.shape),)

    return a.tape._record(a.value, (a.nid,), bwd)


def logsumexp_rows(z: Var, temperature: float = 1.0) -> Var:
    """Row-wise T * log(sum_k exp(z_k / T)), computed max-shifted for stability.

    Output is (n, 1). Adding a constant c to every entry of a row adds
    exactly c to that row's output for any temperature.
    """
    t = float(temperature)
    if not t > 0.0:
        raise ConfigError(f"temperature must be positive, got {t}")
    zv = z.array / t
    m = zv.max(axis=1, keepdims=True)
    lse = m + np.log(np.exp(zv - m).sum(axis=1, keepdims=True))
    soft = np.exp(zv - lse)  # softmax(z / T), reused by the backward pass

    def bwd(g: np.ndarray):
        return (g * soft,)

    return z.tape._record(Matrix(t * lse), (z.nid,), bwd)


def _check_labels(labels, n: int, k: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.ndim != 1 or y.shape[0] != n:
        raise LabelError(f"labels must be 1-D of length {n}, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        raise LabelError(f"labels must be integers, got dtype {y.dtype}")
    if y.size and (y.min() < 0 or y.max() >= k):
        raise LabelError(f"labels must lie in [0, {k}), got range [{y.min()}, {y.max()}]")
    return y.astype(np.int64)


def softmax_cross_entropy(z: Var, labels) -> Var:
    """Mean over rows of -log softmax(z)[label]; returns a (1, 1) Var."""
    zv = z.array
    n, k = zv.shape
    y = _check_labels(labels, n, k)
    m = zv.max(axis=1, keepdims=True)
    logsoft = zv - m - np.log(np.exp(zv - m).sum(axis=1, keepdims=True))
    value = -logsoft[np.arange(n), y].mean()

    def bwd(g: np.ndarray):
        p = np.exp(logsoft)
        p[np.arange(n), y] -= 1.0
        return (p * (g[0, 0] / n),)

    return z.tape._record(Matrix([[value]]), (z.nid,), bwd)
