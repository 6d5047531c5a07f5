"""Cross-checks between the alignment routes, the sampler and the gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .align import alignment_backward, alignment_dp, alignment_naive, expected_output
from .oracle import empirical_alignment, enumerate_exact

EXACT_TOL = 1e-12
GRAD_TOL = 1e-4
FD_STEP = 1e-5
MC_SIGMAS = 4.0
MC_COVERAGE = 0.99


def central_difference(f, x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Gradient of scalar ``f`` at ``x`` by central differences, one coordinate at a time."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        up = f(x)
        x[idx] = orig - h
        down = f(x)
        x[idx] = orig
        grad[idx] = (up - down) / (2.0 * h)
    return grad


def relative_error(analytic, numeric, floor: float = 1e-6) -> float:
    """Largest elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def mc_coverage(empirical, exact, n_samples: int, sigmas: float = MC_SIGMAS) -> float:
    """Fraction of entries within ``sigmas`` binomial standard errors of the exact value."""
    exact = np.asarray(exact)
    se = np.sqrt(np.clip(exact * (1.0 - exact), 0.0, None) / n_samples)
    return float(np.mean(np.abs(np.asarray(empirical) - exact) <= sigmas * se + 1e-15))


def alignment_grad_check(rng, T: int, d: int = 3, U: int | None = None) -> float:
    """Relative error of :func:`alignment_backward` against central differences."""
    U = T if U is None else U
    e = rng.uniform(0.05, 0.95, T)
    s = rng.normal(size=(T, d))
    G = rng.normal(size=(U, d))
    grads = alignment_backward(e, s, U, G)
    fd_e = central_difference(lambda v: np.sum(G * expected_output(alignment_dp(v, U), s)), e)
    fd_s = central_difference(lambda v: np.sum(G * expected_output(alignment_dp(e, U), v)), s)
    return max(relative_error(grads.d_emissions, fd_e), relative_error(grads.d_states, fd_s))


def random_emissions(rng, T: int) -> np.ndarray:
    """Uniform draws with occasional exact 0s and 1s mixed in."""
    e = rng.random(T)
    edge = rng.random(T) < 0.1
    e[edge] = rng.integers(0, 2, size=int(edge.sum()))
    return e


@dataclass
class VerifyReport:
    max_T: int
    trials: int
    dp_vs_naive: float = 0.0
    dp_vs_enum: float = 0.0
    naive_vs_enum: float = 0.0
    enum_mass: float = 0.0
    min_mc_coverage: float = 1.0
    max_grad_rel_error: float = 0.0
    structural_failures: int = 0
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def lines(self) -> list[str]:
        return [
            f"max_T={self.max_T} trials={self.trials}",
            f"max |dp - naive|        {self.dp_vs_naive:.3e}",
            f"max |dp - enumeration|  {self.dp_vs_enum:.3e}",
            f"max |naive - enumeration| {self.naive_vs_enum:.3e}",
            f"max |enumeration mass - 1| {self.enum_mass:.3e}",
            f"min Monte Carlo coverage {self.min_mc_coverage:.4f}",
            f"max gradient rel. error  {self.max_grad_rel_error:.3e}",
            *(f"FAIL {msg}" for msg in self.failures),
            "OK" if self.ok else "FAILED",
        ]


def run_verification(max_T: int = 12, trials: int = 200, seed: int = 0, *,
                     dp=alignment_dp, mc_samples: int = 20000, grad_trials: int = 50) -> VerifyReport:
    """Oracle triangle over ``trials`` random emission vectors per ``T <= max_T``.

    Also runs a Monte Carlo check for each ``T`` and ``min(trials, grad_trials)``
    finite-difference checks of the alignment gradient. ``dp`` is the route under
    test.
    """
    if not 1 <= max_T <= 24:
        raise ValueError("max_T must lie in [1, 24]")
    report = VerifyReport(max_T, trials)
    if trials <= 0:
        return report
    rng = np.random.default_rng(seed)
    for T in range(1, max_T + 1):
        for _ in range(trials):
            e = random_emissions(rng, T)
            P_dp = dp(e, T)
            P_naive = alignment_naive(e, T)
            P_enum, mass = enumerate_exact(e, T, return_mass=True)
            report.dp_vs_naive = max(report.dp_vs_naive, float(np.abs(P_dp - P_naive).max()))
            report.dp_vs_enum = max(report.dp_vs_enum, float(np.abs(P_dp - P_enum).max()))
            report.naive_vs_enum = max(report.naive_vs_enum, float(np.abs(P_naive - P_enum).max()))
            report.enum_mass = max(report.enum_mass, abs(mass - 1.0))
            below = np.tril(np.ones((T, T), dtype=bool), -1)
            if np.any(P_dp[below] != 0.0) or np.any(P_dp.sum(axis=1) > 1.0 + 1e-9):
                report.structural_failures += 1
        e = rng.uniform(0.0, 1.0, T)
        emp = empirical_alignment(e, T, mc_samples, int(rng.integers(2**63)))
        report.min_mc_coverage = min(report.min_mc_coverage,
                                     mc_coverage(emp, dp(e, T), mc_samples))
    for k in range(min(trials, grad_trials)):
        T = 1 + k % max_T
        report.max_grad_rel_error = max(report.max_grad_rel_error, alignment_grad_check(rng, T))

    if report.dp_vs_naive > EXACT_TOL:
        report.failures.append(f"dp vs naive discrepancy {report.dp_vs_naive:.3e}")
    if report.dp_vs_enum > EXACT_TOL:
        report.failures.append(f"dp vs enumeration discrepancy {report.dp_vs_enum:.3e}")
    if report.naive_vs_enum > EXACT_TOL:
        report.failures.append(f"naive vs enumeration discrepancy {report.naive_vs_enum:.3e}")
    if report.enum_mass > EXACT_TOL:
        report.failures.append(f"enumeration mass off by {report.enum_mass:.3e}")
    if report.structural_failures:
        report.failures.append(f"{report.structural_failures} structural violations")
    if report.min_mc_coverage < MC_COVERAGE:
        report.failures.append(f"Monte Carlo coverage {report.min_mc_coverage:.4f}")
    if report.max_grad_rel_error > GRAD_TOL:
        report.failures.append(f"gradient relative error {report.max_grad_rel_error:.3e}")
    return report


def faulty_alignment_dp(e, U=None):
    """Detector check: the DP with the sign of its last entry flipped."""
    P = alignment_dp(e, U).copy()
    P[..., -1, -1] *= -1.0
    return P


def emission_gradient_profile(T_list, e_value: float = 0.5, d: int = 4, draws: int = 32,
                              seed: int = 0):
    """Mean ``|dL/de_0|`` for constant emissions as ``T`` grows.

    ``L`` reads the expected output at slot ``T // 2`` (where the middle of the
    sequence lands at rate 0.5) through random states and weights, averaged
    over ``draws`` random instances. Returns ``[(T, mean |dL/de_0|), ...]``.
    """
    rng = np.random.default_rng(seed)
    out = []
    for T in T_list:
        e = np.full((draws, T), e_value)
        s = rng.normal(size=(draws, T, d))
        G = np.zeros((draws, T, d))
        G[:, T // 2] = rng.normal(size=(draws, d))
        grads = alignment_backward(e, s, T, G)
        out.append((T, float(np.mean(np.abs(grads.d_emissions[:, 0])))))
    return out
