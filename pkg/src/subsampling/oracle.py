"""Ground truth for the subsampling process: sampling and exhaustive enumeration.

Random draws use numpy's ``PCG64`` bit generator (128-bit state) seeded through
``numpy.random.default_rng(seed)``, so a seed reproduces the same samples on
any platform running the same numpy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .align import check_rows, check_emissions

MAX_ENUM_T = 24
_CHUNK = 1 << 15


@dataclass(frozen=True)
class SampledOutput:
    indices: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)


def sample_once(e, s, seed: int) -> SampledOutput:
    """Run the keep-with-probability-``e[t]`` loop once.

    ``s[t]`` is kept iff ``u_t < e[t]`` with ``u_t`` uniform on [0, 1), so
    ``e[t] = 0`` never fires and ``e[t] = 1`` always does.
    """
    e = check_emissions(e)
    s = np.asarray(s, dtype=np.float64)
    if e.ndim != 1 or s.shape[0] != e.shape[0]:
        raise ValueError(f"states {s.shape} and emissions {e.shape} differ in length")
    u = np.random.default_rng(seed).random(e.shape[0])
    idx = np.flatnonzero(u < e)
    return SampledOutput(idx, s[idx])


def _accumulate(keep: np.ndarray, weight: np.ndarray, U: int, out: np.ndarray) -> None:
    # keep: (N, T) bool patterns; output slot of a kept element = number kept before it
    T = keep.shape[1]
    slot = np.cumsum(keep, axis=1) - 1
    hit = keep & (slot < U)
    rows, cols = np.nonzero(hit)
    flat = slot[rows, cols] * T + cols
    out += np.bincount(flat, weights=weight[rows], minlength=U * T).reshape(U, T)


def enumerate_exact(e, U: int | None = None, *, return_mass: bool = False):
    """Alignment matrix by summing over all ``2**T`` keep/skip patterns.

    Each pattern has probability ``prod_kept e * prod_skipped (1 - e)``; its
    k-th kept index ``n`` adds that probability to ``P[k, n]``. With
    ``return_mass`` the total pattern probability (which must be 1) is
    returned as well.
    """
    e = check_emissions(e)
    if e.ndim != 1:
        raise ValueError("enumerate_exact takes a single emission vector")
    T = e.shape[0]
    if T > MAX_ENUM_T:
        raise ValueError(f"T={T} exceeds the enumeration guard of {MAX_ENUM_T}")
    U = check_rows(U, T)
    P = np.zeros((U, T))
    mass = 0.0
    bits = 1 << np.arange(T, dtype=np.int64)
    total = 1 << T
    for start in range(0, total, _CHUNK):
        codes = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        keep = (codes[:, None] & bits) != 0
        weight = np.prod(np.where(keep, e, 1.0 - e), axis=1)
        mass += weight.sum()
        _accumulate(keep, weight, U, P)
    return (P, mass) if return_mass else P


def empirical_alignment(e, U: int | None, n_samples: int, seed: int) -> np.ndarray:
    """Monte Carlo frequency estimate of the alignment matrix."""
    e = check_emissions(e)
    if e.ndim != 1:
        raise ValueError("empirical_alignment takes a single emission vector")
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    T = e.shape[0]
    U = check_rows(U, T)
    rng = np.random.default_rng(seed)
    counts = np.zeros((U, T))
    for start in range(0, n_samples, _CHUNK):
        n = min(_CHUNK, n_samples - start)
        keep = rng.random((n, T)) < e
        _accumulate(keep, np.ones(n), U, counts)
    return counts / n_samples
