"""Projective metric and contraction coefficient against brute force."""

import math

import numpy as np
import pytest

from wonhamlab import (L1_OVER_HILBERT, birkhoff_psi, birkhoff_tau,
                       hilbert_metric, l1_distance)
from wonhamlab.metrics import LengthMismatchError, ZeroVectorError


def test_l1_distance():
    assert l1_distance(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 2.0
    assert l1_distance(np.array([0.5, 0.5]), np.array([0.5, 0.5])) == 0.0
    with pytest.raises(LengthMismatchError):
        l1_distance(np.array([1.0]), np.array([0.5, 0.5]))


def test_hilbert_known_value():
    p = np.array([0.5, 0.5])
    q = np.array([0.25, 0.75])
    # ratios 2 and 2/3: log(2 / (2/3)) = log 3
    assert hilbert_metric(p, q) == pytest.approx(math.log(3.0), abs=1e-15)
    assert hilbert_metric(p, p) == 0.0


def test_hilbert_symmetry_and_projectivity():
    rng = np.random.default_rng(0)
    for _ in range(50):
        p = rng.uniform(0.1, 2.0, size=4)
        q = rng.uniform(0.1, 2.0, size=4)
        d = hilbert_metric(p, q)
        assert d == pytest.approx(hilbert_metric(q, p), rel=1e-12)
        assert hilbert_metric(3.0 * p, q) == pytest.approx(d, rel=1e-12)


def test_hilbert_scale_invariance_exact_for_dyadic():
    rng = np.random.default_rng(1)
    for _ in range(200):
        p = rng.uniform(0.05, 3.0, size=5)
        q = rng.uniform(0.05, 3.0, size=5)
        c = 2.0 ** rng.integers(-6, 7)
        d = 2.0 ** rng.integers(-6, 7)
        assert hilbert_metric(c * p, d * q) == hilbert_metric(p, q)


def test_hilbert_support_and_errors():
    assert hilbert_metric(np.array([1.0, 0.0]), np.array([0.5, 0.5])) == math.inf
    # matching zero pattern: metric over the common support
    assert hilbert_metric(np.array([1.0, 0.0]), np.array([2.0, 0.0])) == 0.0
    with pytest.raises(ZeroVectorError):
        hilbert_metric(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        hilbert_metric(np.array([-1.0, 1.0]), np.array([1.0, 1.0]))


def test_l1_hilbert_comparison_constant():
    assert L1_OVER_HILBERT == pytest.approx(2.0 / math.log(3.0), rel=1e-15)
    rng = np.random.default_rng(2)
    for _ in range(200):
        p = rng.dirichlet(np.ones(4))
        q = rng.dirichlet(np.ones(4))
        assert l1_distance(p, q) <= L1_OVER_HILBERT * hilbert_metric(p, q) + 1e-12


def brute_psi(A):
    n, m = A.shape
    best = 1.0
    for i in range(n):
        for j in range(n):
            for k in range(m):
                for l in range(m):
                    den = A[i, l] * A[j, k]
                    if den > 0:
                        best = min(best, A[i, k] * A[j, l] / den)
                    elif A[i, k] * A[j, l] > 0:
                        best = min(best, math.inf)
    return best


def test_birkhoff_psi_matches_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(40):
        A = rng.uniform(0.01, 5.0, size=(4, 4))
        assert birkhoff_psi(A) == pytest.approx(brute_psi(A), rel=1e-12)


def test_birkhoff_psi_with_zeros():
    A = np.array([[1.0, 0.0], [1.0, 1.0]])
    # cross ratio with a zero numerator forces psi = 0
    assert birkhoff_psi(A) == 0.0
    assert birkhoff_tau(A) == 1.0


def test_birkhoff_psi_rank_one():
    u = np.array([1.0, 2.0, 3.0])
    v = np.array([0.5, 1.5, 2.5])
    A = np.outer(u, v)
    assert birkhoff_psi(A) == pytest.approx(1.0, rel=1e-12)
    assert birkhoff_tau(A) <= 1e-6


def test_birkhoff_psi_log_scale_free():
    rng = np.random.default_rng(4)
    A = rng.uniform(0.1, 2.0, size=(3, 3))
    assert birkhoff_psi(A, log_scale=123.0) == birkhoff_psi(A)
    assert birkhoff_psi(A, log_scale=-700.0) == birkhoff_psi(A)


def test_tau_contracts_hilbert_metric():
    rng = np.random.default_rng(5)
    for _ in range(300):
        n = int(rng.integers(2, 6))
        A = rng.uniform(0.02, 4.0, size=(n, n))
        p = rng.uniform(0.05, 2.0, size=n)
        q = rng.uniform(0.05, 2.0, size=n)
        lhs = hilbert_metric(A @ p, A @ q)
        assert lhs <= birkhoff_tau(A) * hilbert_metric(p, q) + 1e-12
