"""Distances and contraction coefficients for nonnegative vectors and matrices."""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "LengthMismatchError",
    "ZeroVectorError",
    "AllZeroError",
    "L1_OVER_HILBERT",
    "l1_distance",
    "hilbert_metric",
    "birkhoff_psi",
    "birkhoff_tau",
]

# ||p - q||_1 <= (2 / log 3) * H(p, q) for probability vectors
L1_OVER_HILBERT = 2.0 / math.log(3.0)


class LengthMismatchError(ValueError):
    pass


class ZeroVectorError(ValueError):
    pass


class AllZeroError(ValueError):
    pass


def _as_vector(x, name):
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {v.shape}")
    return v


def l1_distance(p, q) -> float:
    """Sum of absolute coordinate differences."""
    p = _as_vector(p, "p")
    q = _as_vector(q, "q")
    if p.shape != q.shape:
        raise LengthMismatchError(f"lengths differ: {p.shape[0]} vs {q.shape[0]}")
    return float(np.abs(p - q).sum())


def hilbert_metric(p, q) -> float:
    """Projective distance log(max_i p_i/q_i / min_j p_j/q_j) on the support.

    Returns inf when the supports differ; zero-over-zero coordinates are
    excluded by the support comparison. Scale invariant: multiplying p or
    q by a positive constant does not change the value.
    """
    p = _as_vector(p, "p")
    q = _as_vector(q, "q")
    if p.shape != q.shape:
        raise LengthMismatchError(f"lengths differ: {p.shape[0]} vs {q.shape[0]}")
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("inputs must be nonnegative")
    sup_p = p > 0
    sup_q = q > 0
    if not sup_p.any():
        raise ZeroVectorError("p is the zero vector")
    if not sup_q.any():
        raise ZeroVectorError("q is the zero vector")
    if not np.array_equal(sup_p, sup_q):
        return math.inf
    r = p[sup_p] / q[sup_p]
    return float(np.log(r.max() / r.min()))


def birkhoff_psi(A, log_scale: float = 0.0) -> float:
    """min over index quadruples of (A_ik A_jl) / (A_il A_jk), in [0, 1].

    Quadruples with a zero denominator are skipped; a zero numerator over
    a positive denominator gives 0. The scan runs in log space so widely
    scaled matrices are safe, and log_scale (a scalar exponent factored
    out of A) is accepted for interface symmetry but cannot affect the
    ratio. Memory is O(n^4).
    """
    del log_scale  # ratios of entries are scale free
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got shape {A.shape}")
    if np.any(A < 0):
        raise ValueError("matrix must be nonnegative")
    if not np.any(A > 0):
        raise AllZeroError("matrix has no positive entry")
    with np.errstate(divide="ignore"):
        L = np.where(A > 0, np.log(np.where(A > 0, A, 1.0)), -np.inf)
    num = L[:, None, :, None] + L[None, :, None, :]   # L[i,k] + L[j,l]
    den = L[:, None, None, :] + L[None, :, :, None]   # L[i,l] + L[j,k]
    valid = np.isfinite(den)
    with np.errstate(invalid="ignore"):
        ratio = np.where(valid, num - den, np.inf)
    return min(float(np.exp(ratio.min())), 1.0)


def birkhoff_tau(A, log_scale: float = 0.0) -> float:
    """Contraction coefficient (1 - sqrt(psi)) / (1 + sqrt(psi)) in [0, 1]."""
    s = math.sqrt(birkhoff_psi(A, log_scale))
    return (1.0 - s) / (1.0 + s)
