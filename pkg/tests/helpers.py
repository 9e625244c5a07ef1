"""Shared test utilities: finite-difference gradient oracle and strategies."""

from __future__ import annotations

import numpy as np
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from qmf.diffcore import Tape, backward

FD_STEP = 1e-5


def fd_gradient(f, arrays: list[np.ndarray], h: float = FD_STEP) -> list[np.ndarray]:
    """Central-difference gradient of a scalar function of several arrays.

    Independent of the tape machinery on purpose: this is the oracle the
    reverse-mode results are checked against.
    """
    grads = []
    for k in range(len(arrays)):
        g = np.zeros_like(arrays[k])
        it = np.nditer(arrays[k], flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            plus = [a.copy() for a in arrays]
            minus = [a.copy() for a in arrays]
            plus[k][idx] += h
            minus[k][idx] -= h
            g[idx] = (f(plus) - f(minus)) / (2.0 * h)
        grads.append(g)
    return grads


def tape_value_and_grads(build, arrays: list[np.ndarray]):
    """build(tape, leaves) must return a (1, 1) Var; returns (value, grads)."""
    tape = Tape()
    leaves = [tape.leaf(a) for a in arrays]
    loss = build(tape, leaves)
    grads = backward(loss)
    out = []
    for v in leaves:
        g = grads.get(v.nid)
        out.append(np.zeros(v.shape) if g is None else g.array)
    return loss.array[0, 0], out


def assert_grads_match_fd(build, arrays, rtol=1e-4, atol=1e-7, h=FD_STEP):
    def scalar(arrs):
        tape = Tape()
        leaves = [tape.leaf(a) for a in arrs]
        return build(tape, leaves).array[0, 0]

    _, got = tape_value_and_grads(build, arrays)
    want = fd_gradient(scalar, arrays, h)
    for g, w in zip(got, want):
        np.testing.assert_allclose(g, w, rtol=rtol, atol=atol)


def matrices(max_rows=5, max_cols=4, lo=-10.0, hi=10.0):
    return hnp.arrays(
        np.float64,
        st.tuples(st.integers(1, max_rows), st.integers(1, max_cols)),
        elements=st.floats(lo, hi, allow_nan=False, allow_infinity=False, width=64),
    )


def vectors(max_len=16, lo=-10.0, hi=10.0, min_len=1):
    return hnp.arrays(
        np.float64,
        st.integers(min_len, max_len),
        elements=st.floats(lo, hi, allow_nan=False, allow_infinity=False, width=64),
    )
