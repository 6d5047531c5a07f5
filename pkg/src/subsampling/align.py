"""Expected alignment between a subsampled output and its source sequence.

Every input element ``s[n]`` is kept independently with probability ``e[n]``.
``P[m, n]`` is the probability that output position ``m`` holds ``s[n]``. Rows
are sub-stochastic; the missing mass stands for "no m-th output", which the
expectation treats as a zero vector.

Three routes compute ``P``:

* :func:`alignment_naive` evaluates the sum over predecessors directly, O(U T^2).
* :func:`alignment_dp` runs the division-free accumulator recurrence, O(U T).
* :func:`subsampling.oracle.enumerate_exact` sums over all 2^T keep patterns.

Arrays are float64 throughout. Emission vectors may carry leading batch axes.
"""

from __future__ import annotations

from pathlib import Path
from typing import NamedTuple

import numpy as np
from numba import njit

__all__ = [
    "AlignmentGradients",
    "alignment_backward",
    "alignment_dp",
    "alignment_dp_backward",
    "alignment_naive",
    "check_emissions",
    "check_rows",
    "expected_output",
    "first_row",
    "read_matrix_csv",
    "write_matrix_csv",
]


class AlignmentGradients(NamedTuple):
    d_emissions: np.ndarray
    d_states: np.ndarray


def check_emissions(e) -> np.ndarray:
    """Return ``e`` as a float64 array after checking it is a valid probability vector."""
    e = np.asarray(e, dtype=np.float64)
    if e.ndim < 1 or e.shape[-1] < 1:
        raise ValueError(f"emission probabilities need at least one step, got shape {e.shape}")
    if not np.all(np.isfinite(e)) or np.any(e < 0.0) or np.any(e > 1.0):
        raise ValueError("emission probabilities must lie in [0, 1]")
    return e


def check_rows(U, T: int) -> int:
    if U is None:
        return T
    U = int(U)
    if not 1 <= U <= T:
        raise ValueError(f"output length U={U} must satisfy 1 <= U <= T={T}")
    return U


def first_row(e) -> np.ndarray:
    """Probability that the first output is ``s[n]``: ``e[n] * prod_{i<n} (1 - e[i])``."""
    e = check_emissions(e)
    skipped = np.cumprod(1.0 - e, axis=-1)
    none_before = np.concatenate([np.ones_like(e[..., :1]), skipped[..., :-1]], axis=-1)
    return e * none_before


@njit(cache=True)
def _naive_kernel(e, row0, U):
    T = e.shape[0]
    P = np.zeros((U, T))
    P[0, :] = row0
    for m in range(1, U):
        for n in range(m, T):
            acc = 0.0
            gap = 1.0  # prod_{i=j+1}^{n-1} (1 - e_i), empty for j = n - 1
            for j in range(n - 1, -1, -1):
                acc += P[m - 1, j] * gap
                gap *= 1.0 - e[j]
            P[m, n] = e[n] * acc
    return P


def alignment_naive(e, U: int | None = None) -> np.ndarray:
    """Alignment matrix by direct summation over the previous output's source.

    Row 0 is :func:`first_row`; row ``m`` sums ``P[m-1, j]`` times the
    probability of skipping everything strictly between ``j`` and ``n``.
    Only accepts a single sequence (1-D ``e``).
    """
    e = check_emissions(e)
    if e.ndim != 1:
        raise ValueError("alignment_naive takes a single emission vector")
    U = check_rows(U, e.shape[0])
    return _naive_kernel(e, first_row(e), U)


@njit(cache=True)
def _dp_rows(e, P, A, keep_acc):
    # Row by row: acc = sum_j P[m-1, j] prod_{i=j+1}^{n-1} (1 - e_i), seeded with 1
    # for row 0. Each row only reads the previous one, so access stays contiguous.
    B, U, T = P.shape
    for b in range(B):
        for m in range(U):
            P[b, m, :m] = 0.0
            acc = 1.0 if m == 0 else 0.0
            for n in range(m, T):
                if m > 0:
                    acc += P[b, m - 1, n - 1]
                P[b, m, n] = e[b, n] * acc
                if keep_acc:
                    A[b, m, n] = acc
                acc *= 1.0 - e[b, n]


def _dp_kernel(e, U, keep_acc):
    B, T = e.shape
    P = np.zeros((B, U, T))
    A = np.zeros((B, U, T)) if keep_acc else np.zeros((1, 1, 1))
    _dp_rows(e, P, A, keep_acc)
    return P, A


def alignment_dp(e, U: int | None = None, *, out: np.ndarray | None = None) -> np.ndarray:
    """Alignment matrix ``P[..., m, n]`` in O(U T) per sequence.

    ``e`` has shape ``(T,)`` or ``(..., T)``; the result has shape
    ``(..., U, T)``. ``U`` defaults to ``T``. Entries with ``n < m`` are exact
    zeros. ``out`` may be a C-contiguous float64 array of the result shape to
    fill in place, which saves the allocation when the call is repeated.

    >>> alignment_dp([0.5, 0.5])
    array([[0.5 , 0.25],
           [0.  , 0.25]])
    """
    e = check_emissions(e)
    T = e.shape[-1]
    U = check_rows(U, T)
    shape = e.shape[:-1] + (U, T)
    if out is None:
        out = np.empty(shape)
    elif out.shape != shape or out.dtype != np.float64 or not out.flags.c_contiguous:
        raise ValueError(f"out must be a C-contiguous float64 array of shape {shape}")
    flat = np.ascontiguousarray(e.reshape(-1, T))
    _dp_rows(flat, out.reshape(-1, U, T), np.zeros((1, 1, 1)), False)
    return out


@njit(cache=True)
def _dp_backward_kernel(e, A, dP):
    B, U, T = dP.shape
    de = np.zeros((B, T))
    da = np.zeros(U + 1)  # adjoint of acc at step n + 1; da[U] stays 0
    for b in range(B):
        da[:] = 0.0
        for n in range(T - 1, -1, -1):
            en = e[b, n]
            keep = 1.0 - en
            g_e = 0.0
            for m in range(min(U, n + 1)):
                g = dP[b, m, n] + da[m + 1]
                a = A[b, m, n]
                g_e += a * (g - da[m])
                da[m] = en * g + keep * da[m]
            if n + 1 < U:
                da[n + 1] = 0.0
            de[b, n] = g_e
    return de


def alignment_dp_backward(e, dP) -> np.ndarray:
    """Pull a gradient on the alignment matrix back to the emission probabilities.

    ``dP`` has the shape of ``alignment_dp(e, U)``; ``U`` is read from it.
    """
    e = check_emissions(e)
    dP = np.asarray(dP, dtype=np.float64)
    T = e.shape[-1]
    if dP.shape[:-2] != e.shape[:-1] or dP.shape[-1] != T:
        raise ValueError(f"gradient shape {dP.shape} does not match emissions {e.shape}")
    U = check_rows(dP.shape[-2], T)
    flat_e = np.ascontiguousarray(e.reshape(-1, T))
    _, A = _dp_kernel(flat_e, U, True)
    de = _dp_backward_kernel(flat_e, A, np.ascontiguousarray(dP.reshape(-1, U, T)))
    return de.reshape(e.shape)


def expected_output(P, s) -> np.ndarray:
    """Expected outputs ``sum_n P[m, n] * s[n]``; deficient mass adds nothing."""
    P = np.asarray(P, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    if s.ndim < 2 or P.ndim < 2 or P.shape[-1] != s.shape[-2]:
        raise ValueError(f"alignment {P.shape} and states {s.shape} do not line up")
    return P @ s


def alignment_backward(e, s, U: int | None, upstream) -> AlignmentGradients:
    """Gradients of ``<upstream, expected_output(alignment_dp(e, U), s)>``."""
    e = check_emissions(e)
    s = np.asarray(s, dtype=np.float64)
    U = check_rows(U, e.shape[-1])
    upstream = np.asarray(upstream, dtype=np.float64)
    if s.shape[:-1] != e.shape:
        raise ValueError(f"states {s.shape} do not match emissions {e.shape}")
    if upstream.shape != e.shape[:-1] + (U, s.shape[-1]):
        raise ValueError(f"upstream gradient has shape {upstream.shape}")
    P = alignment_dp(e, U)
    d_states = np.swapaxes(P, -1, -2) @ upstream
    dP = upstream @ np.swapaxes(s, -1, -2)
    return AlignmentGradients(alignment_dp_backward(e, dP), d_states)


def write_matrix_csv(path, P) -> None:
    """Write a 2-D matrix row-major as CSV with 17 significant digits."""
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    if P.ndim != 2:
        raise ValueError("only 2-D matrices can be written as CSV")
    lines = [",".join(format(v, ".17g") for v in row) for row in P]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_matrix_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
