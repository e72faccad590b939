"""Conjugate gradient solver and the Sturm-bisection condition estimate."""
import io

import numpy as np
import pytest

from darcydd.errors import ConfigurationError, IndefiniteOperatorError
from darcydd.krylov import (
    PcgConfig,
    extreme_tridiagonal_eigenvalues,
    lanczos_condition,
    pcg,
)


def op_of(a):
    return lambda v: a @ v


IDENT = lambda v: v  # noqa: E731


def test_identity_converges_immediately(rng):
    b = rng.standard_normal(7)
    x, report = pcg(IDENT, IDENT, b)
    assert report.converged
    assert report.iterations == 1
    assert report.condition == 1.0
    assert np.abs(x - b).max() <= 1e-14


def test_diagonal_spectrum_recovered(rng):
    d = np.arange(1.0, 11.0)
    b = rng.standard_normal(10)
    x, report = pcg(lambda v: d * v, IDENT, b, PcgConfig(rel_tol=1e-12))
    assert report.converged
    assert report.iterations >= 10
    assert np.abs(x - b / d).max() <= 1e-9
    assert 9.0 <= report.condition <= 10.0 * (1 + 1e-12)


def test_zero_rhs():
    x, report = pcg(IDENT, IDENT, np.zeros(5))
    assert np.array_equal(x, np.zeros(5))
    assert report.converged
    assert report.iterations == 0
    assert report.condition == 1.0


def test_exact_preconditioner(rng):
    m = rng.standard_normal((12, 12))
    a = m @ m.T + 12 * np.eye(12)
    inv = np.linalg.inv(a)
    b = rng.standard_normal(12)
    x, report = pcg(op_of(a), op_of(inv), b, PcgConfig(rel_tol=1e-10))
    assert report.converged
    assert report.iterations <= 2
    assert report.condition < 1 + 1e-6
    assert np.linalg.norm(a @ x - b) <= 1e-9 * np.linalg.norm(b)


def test_nonconvergence_is_reported_not_raised(rng):
    d = np.linspace(1, 1e4, 50)
    b = rng.standard_normal(50)
    x, report = pcg(lambda v: d * v, IDENT, b, PcgConfig(rel_tol=1e-13, max_iter=2))
    assert not report.converged
    assert report.iterations == 2
    assert len(report.residuals) == 2


def test_indefinite_operator_detected(rng):
    b = rng.standard_normal(6)
    with pytest.raises(IndefiniteOperatorError, match="lost positive definiteness"):
        pcg(lambda v: -v, IDENT, b)
    with pytest.raises(IndefiniteOperatorError, match="lost positive definiteness"):
        pcg(IDENT, lambda v: -v, b)


def test_config_validation():
    for bad in (0.0, 1.5, -1e-3):
        with pytest.raises(ConfigurationError):
            PcgConfig(rel_tol=bad)
    with pytest.raises(ConfigurationError):
        PcgConfig(max_iter=0)


def test_history_stream(rng):
    d = np.arange(1.0, 9.0)
    b = rng.standard_normal(8)
    stream = io.StringIO()
    _, report = pcg(
        lambda v: d * v, IDENT, b,
        PcgConfig(rel_tol=1e-10, history_stream=stream),
    )
    lines = stream.getvalue().strip().splitlines()
    assert len(lines) == report.iterations
    assert lines[0].startswith("1,")
    for k, line in enumerate(lines, start=1):
        tok = line.split(",")
        assert int(tok[0]) == k
        assert float(tok[1]) == pytest.approx(report.residuals[k - 1], rel=1e-5)


def test_condition_estimate_monotone_and_tight(rng):
    m = rng.standard_normal((40, 40))
    a = m @ m.T + 40 * np.eye(40)
    true_cond = np.linalg.cond(a)
    b = rng.standard_normal(40)
    estimates = []
    for k in range(1, 26):
        _, report = pcg(op_of(a), IDENT, b, PcgConfig(rel_tol=1e-14, max_iter=k))
        estimates.append(report.condition)
    for prev, cur in zip(estimates, estimates[1:]):
        assert cur >= prev - 1e-9 * abs(prev)
    assert estimates[-1] <= true_cond * (1 + 1e-6)
    assert estimates[-1] > 0.8 * true_cond


def test_energy_error_monotone(rng):
    m = rng.standard_normal((30, 30))
    a = m @ m.T + 30 * np.eye(30)
    b = rng.standard_normal(30)
    exact = np.linalg.solve(a, b)
    errors = []
    for k in range(1, 16):
        x, _ = pcg(op_of(a), IDENT, b, PcgConfig(rel_tol=1e-15, max_iter=k))
        e = x - exact
        errors.append(float(np.sqrt(e @ a @ e)))
    for prev, cur in zip(errors, errors[1:]):
        assert cur <= prev * (1 + 1e-12)


# ---------------------------------------------------------------------------
# tridiagonal eigenvalue bounds


def test_known_tridiagonal_extremes():
    lo, hi = extreme_tridiagonal_eigenvalues([2.0, 2.0], [1.0])
    assert lo == pytest.approx(1.0, abs=1e-12)
    assert hi == pytest.approx(3.0, abs=1e-12)


def test_single_entry_tridiagonal():
    lo, hi = extreme_tridiagonal_eigenvalues([5.0], [])
    assert (lo, hi) == (pytest.approx(5.0), pytest.approx(5.0))


@pytest.mark.parametrize("k", [2, 3, 7, 20, 57])
def test_random_tridiagonal_matches_dense(k, rng):
    d = rng.standard_normal(k) * 3.0
    e = rng.standard_normal(k - 1)
    lo, hi = extreme_tridiagonal_eigenvalues(d, e)
    full = np.diag(d) + np.diag(e, 1) + np.diag(e, -1)
    ref = np.linalg.eigvalsh(full)
    scale = max(1.0, np.abs(ref).max())
    assert abs(lo - ref[0]) <= 1e-8 * scale
    assert abs(hi - ref[-1]) <= 1e-8 * scale


def test_tridiagonal_input_validation():
    with pytest.raises(ConfigurationError):
        extreme_tridiagonal_eigenvalues([], [])
    with pytest.raises(ConfigurationError):
        extreme_tridiagonal_eigenvalues([1.0, 2.0], [])


def test_lanczos_condition_edge_cases():
    assert lanczos_condition([], []) == 1.0
    assert lanczos_condition([-1.0], []) == float("inf")
    assert lanczos_condition([0.5], []) == 1.0
