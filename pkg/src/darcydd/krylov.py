"""Preconditioned conjugate gradients with a built-in condition estimate.

The solver targets the reduced interface system: both the operator and the
preconditioner are supplied as callables and must be symmetric positive
definite. Convergence is judged on the true residual 2-norm relative to the
right-hand side. The scalar recurrence coefficients define a symmetric
tridiagonal matrix whose extreme eigenvalues estimate the spectrum of the
preconditioned operator; they are found by bisection with Sturm sign
counts, so no dense eigensolver is involved.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, TextIO

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigurationError, IndefiniteOperatorError


@dataclass
class PcgConfig:
    """Solver controls. ``history_stream`` receives one CSV line
    ``iteration,relative_residual`` per step when set."""

    rel_tol: float = 1e-7
    max_iter: int = 5000
    record_lanczos: bool = True
    history_stream: TextIO | None = None

    def __post_init__(self):
        if not (0.0 < self.rel_tol < 1.0):
            raise ConfigurationError(
                f"rel_tol must lie in (0, 1), got {self.rel_tol}"
            )
        if self.max_iter < 1:
            raise ConfigurationError(
                f"max_iter must be at least 1, got {self.max_iter}"
            )


@dataclass
class SolveReport:
    """Outcome of one solve plus the problem statistics used in reports."""

    iterations: int = 0
    converged: bool = True
    condition: float = 1.0
    residuals: list[float] = field(default_factory=list)
    setup_seconds: float = 0.0
    pcg_seconds: float = 0.0
    total_seconds: float = 0.0
    n_sub: int = 1
    n: int = 0
    n_gamma: int = 0
    n_face_globs: int = 0
    n_corners: int = 0

    @property
    def n_per_sub(self) -> float:
        return self.n / self.n_sub if self.n_sub else 0.0


def pcg(
    apply_op: Callable[[NDArray], NDArray],
    apply_prec: Callable[[NDArray], NDArray],
    b: NDArray,
    config: PcgConfig | None = None,
) -> tuple[NDArray, SolveReport]:
    """Solve ``op x = b`` for SPD ``op`` with an SPD preconditioner.

    Loss of positive definiteness in either operator raises
    :class:`IndefiniteOperatorError`. Running out of iterations is not an
    exception; the report carries ``converged=False`` and the history.
    """
    if config is None:
        config = PcgConfig()
    b = np.asarray(b, dtype=float)
    norm_b = float(np.linalg.norm(b))
    x = np.zeros_like(b)
    if norm_b == 0.0:
        return x, SolveReport(iterations=0, converged=True, condition=1.0)
    r = b.copy()
    z = apply_prec(r)
    rz = float(r @ z)
    if rz <= 0.0:
        raise IndefiniteOperatorError(
            f"preconditioner lost positive definiteness "
            f"(r'Mr = {rz:.3e} <= 0 at iteration 0)"
        )
    p = z.copy()
    alphas: list[float] = []
    betas: list[float] = []
    residuals: list[float] = []
    converged = False
    iterations = 0
    for k in range(1, config.max_iter + 1):
        q = apply_op(p)
        pq = float(p @ q)
        if pq <= 0.0:
            raise IndefiniteOperatorError(
                f"interface operator lost positive definiteness "
                f"(p'Sp = {pq:.3e} <= 0 at iteration {k})"
            )
        alpha = rz / pq
        alphas.append(alpha)
        x += alpha * p
        r -= alpha * q
        relres = float(np.linalg.norm(r)) / norm_b
        residuals.append(relres)
        if config.history_stream is not None:
            config.history_stream.write(f"{k},{relres:.6e}\n")
        iterations = k
        if relres <= config.rel_tol:
            converged = True
            break
        z = apply_prec(r)
        rz_new = float(r @ z)
        if rz_new <= 0.0:
            raise IndefiniteOperatorError(
                f"preconditioner lost positive definiteness "
                f"(r'Mr = {rz_new:.3e} <= 0 at iteration {k})"
            )
        beta = rz_new / rz
        betas.append(beta)
        p = z + beta * p
        rz = rz_new
    condition = (
        lanczos_condition(alphas, betas) if config.record_lanczos else 1.0
    )
    report = SolveReport(
        iterations=iterations,
        converged=converged,
        condition=condition,
        residuals=residuals,
    )
    return x, report


# ---------------------------------------------------------------------------
# condition estimate from the recurrence scalars


def _tridiagonal_from_scalars(
    alphas: list[float], betas: list[float]
) -> tuple[NDArray, NDArray]:
    """Main and off diagonal of the tridiagonal matrix implied by the
    conjugate-gradient scalars."""
    k = len(alphas)
    d = np.empty(k)
    e = np.empty(max(k - 1, 0))
    d[0] = 1.0 / alphas[0]
    for j in range(1, k):
        d[j] = 1.0 / alphas[j] + betas[j - 1] / alphas[j - 1]
        e[j - 1] = np.sqrt(betas[j - 1]) / alphas[j - 1]
    return d, e


def _sturm_count(d: NDArray, e2: NDArray, x: float, pivmin: float) -> int:
    """Number of eigenvalues of the tridiagonal strictly below ``x``.

    ``pivmin`` bounds pivots away from zero so the quotient e2/q cannot
    overflow (it stays below e2.max()/pivmin, finite by construction).
    """
    count = 0
    q = 1.0
    for i in range(len(d)):
        if i == 0:
            q = d[0] - x
        else:
            q = d[i] - x - e2[i - 1] / q
        if abs(q) < pivmin:
            q = -pivmin
        if q < 0.0:
            count += 1
    return count


def _bisect_eigenvalue(
    d: NDArray, e2: NDArray, rank: int, lo: float, hi: float, pivmin: float
) -> float:
    """Eigenvalue number ``rank`` (0-based, ascending) by bisection."""
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if _sturm_count(d, e2, mid, pivmin) > rank:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def extreme_tridiagonal_eigenvalues(
    diag: NDArray, off: NDArray
) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a symmetric tridiagonal matrix."""
    d = np.asarray(diag, dtype=float)
    e = np.asarray(off, dtype=float)
    if len(d) == 0:
        raise ConfigurationError("empty tridiagonal matrix")
    if len(e) != max(len(d) - 1, 0):
        raise ConfigurationError(
            f"off-diagonal length {len(e)} does not match size {len(d)}"
        )
    pad = np.concatenate([[0.0], np.abs(e), [0.0]])
    radius = pad[:-1] + pad[1:]
    lo = float((d - radius).min())
    hi = float((d + radius).max())
    width = max(hi - lo, 1.0)
    e2 = e * e
    pivmin = np.finfo(float).tiny * max(1.0, float(e2.max(initial=0.0)))
    lam_min = _bisect_eigenvalue(
        d, e2, 0, lo - 1e-12 * width, hi + 1e-12 * width, pivmin
    )
    lam_max = _bisect_eigenvalue(
        d, e2, len(d) - 1, lo - 1e-12 * width, hi + 1e-12 * width, pivmin
    )
    return lam_min, lam_max


def lanczos_condition(alphas: list[float], betas: list[float]) -> float:
    """Condition estimate of the preconditioned operator after ``k`` steps.

    Monotone nondecreasing in the number of recorded steps; returns 1 when
    nothing was recorded.
    """
    if len(alphas) == 0:
        return 1.0
    d, e = _tridiagonal_from_scalars(alphas, betas)
    lam_min, lam_max = extreme_tridiagonal_eigenvalues(d, e)
    if lam_min <= 0.0:
        return float("inf")
    return max(1.0, lam_max / lam_min)
