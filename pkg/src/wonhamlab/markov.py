"""Finite-state continuous-time Markov chain primitives.

Generator validation, communication-class decomposition, invariant laws,
transition semigroups, and exact (event-driven) path sampling. Everything
downstream builds on the objects defined here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import expm
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

__all__ = [
    "GeneratorError",
    "NegativeOffDiagonalError",
    "RowSumNonZeroError",
    "NotBlockDecomposableError",
    "NotIrreducibleError",
    "GeneratorMatrix",
    "ClassDecomposition",
    "ChainPath",
    "as_distribution",
    "validate_generator",
    "decompose_classes",
    "invariant_measure",
    "transition_matrix",
    "sample_path",
]

ROW_SUM_INPUT_TOL = 1e-9     # accepted slack on raw input rows
ROW_SUM_STORED_TOL = 1e-12   # guaranteed for stored generators


class GeneratorError(ValueError):
    """Base class for invalid transition-rate matrices."""


class NegativeOffDiagonalError(GeneratorError):
    """An off-diagonal rate is negative."""


class RowSumNonZeroError(GeneratorError):
    """A row of the rate matrix does not sum to zero within tolerance."""


class NotBlockDecomposableError(GeneratorError):
    """The chain has transient states: some strongly connected component
    leaks probability into another one, so the state space does not split
    into closed communication classes."""


class NotIrreducibleError(GeneratorError):
    """An operation requiring a single communication class was applied to
    a chain with several (or with transient states)."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class GeneratorMatrix:
    """Validated transition-rate matrix of a continuous-time chain.

    Off-diagonal entries are nonnegative jump rates; each diagonal entry
    equals minus the total rate out of its state, so rows sum to zero
    (within 1e-12; the diagonal is recomputed from the off-diagonal part
    at validation time). The entries array is read-only.
    """

    entries: NDArray[np.float64]
    labels: tuple[str, ...] | None = None

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def rate_out(self, i: int) -> float:
        """Total jump rate out of state i."""
        return -float(self.entries[i, i])


@dataclass(frozen=True)
class ClassDecomposition:
    """Partition of the state space into closed communication classes.

    classes[k] holds the (sorted) original state indices of class k;
    generators[k] is the corresponding sub-rate-matrix, itself a valid
    generator because each class is closed. Classes are ordered by their
    smallest state index.
    """

    classes: tuple[NDArray[np.int64], ...]
    generators: tuple[NDArray[np.float64], ...]
    irreducible: tuple[bool, ...]

    @property
    def n_classes(self) -> int:
        return len(self.classes)


@dataclass(frozen=True)
class ChainPath:
    """One exact trajectory of a finite-state chain on [0, horizon].

    states[k] is the state occupied on the k-th inter-jump interval;
    jump_times are strictly increasing and lie strictly inside
    (0, horizon). The path is right-continuous.
    """

    states: NDArray[np.int64]
    jump_times: NDArray[np.float64]
    horizon: float

    @property
    def n_jumps(self) -> int:
        return self.jump_times.shape[0]

    def state_at(self, t) -> np.ndarray | np.int64:
        """State occupied at time t (vectorized over t)."""
        idx = np.searchsorted(self.jump_times, t, side="right")
        return self.states[idx]

    def _boundaries(self) -> np.ndarray:
        return np.concatenate(([0.0], self.jump_times, [self.horizon]))

    def cumulative_integral(self, values, times) -> NDArray[np.float64]:
        """Evaluate F(t) = integral of values[X_s] ds over [0, t].

        The integrand is piecewise constant along the path, so F is
        piecewise linear and is evaluated exactly (up to rounding) at
        arbitrary query times in [0, horizon].
        """
        times = np.asarray(times, dtype=float)
        starts = self._boundaries()
        v = np.asarray(values, dtype=float)[self.states]
        anchors = np.concatenate(([0.0], np.cumsum(np.diff(starts) * v)))
        idx = np.searchsorted(starts, times, side="right") - 1
        idx = np.clip(idx, 0, len(v) - 1)
        return anchors[idx] + v[idx] * (times - starts[idx])

    def cell_integrals(self, values, dt: float, n_cells: int) -> NDArray[np.float64]:
        """Exact integrals of values[X_s] over each grid cell [k dt, (k+1) dt)."""
        grid = np.arange(n_cells + 1, dtype=float) * dt
        cum = self.cumulative_integral(values, grid)
        return np.diff(cum)

    def occupation_fractions(self, n_states: int) -> NDArray[np.float64]:
        """Fraction of [0, horizon] spent in each of the n_states states."""
        durations = np.diff(self._boundaries())
        out = np.zeros(n_states)
        np.add.at(out, self.states, durations)
        return out / self.horizon


# ---------------------------------------------------------------------------
# validation and structure
# ---------------------------------------------------------------------------

def as_distribution(p, n: int | None = None, name: str = "distribution") -> NDArray[np.float64]:
    """Check that p is a probability vector and return it as float array.

    Entries must be nonnegative and sum to 1 within 1e-9. The length is
    checked against n when given.
    """
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {p.shape}")
    if n is not None and p.shape[0] != n:
        raise ValueError(f"{name} has length {p.shape[0]}, expected {n}")
    if np.any(p < 0):
        raise ValueError(f"{name} has a negative entry")
    s = float(p.sum())
    if abs(s - 1.0) > 1e-9:
        raise ValueError(f"{name} sums to {s!r}, not 1")
    return p


def validate_generator(raw, labels=None) -> GeneratorMatrix:
    """Validate a raw square matrix as a transition-rate matrix.

    Parameters
    ----------
    raw : array_like, shape (n, n)
        Candidate rate matrix. Off-diagonal entries must be >= 0 and each
        row must sum to zero within 1e-9.
    labels : sequence of str, optional
        State names carried along for reporting.

    Returns
    -------
    GeneratorMatrix
        Immutable wrapper whose diagonal has been recomputed as minus the
        off-diagonal row sums, so stored rows sum to zero within 1e-12.

    Raises
    ------
    NegativeOffDiagonalError, RowSumNonZeroError, ValueError
    """
    a = np.asarray(raw, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"rate matrix must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("rate matrix has non-finite entries")
    n = a.shape[0]
    off = a.copy()
    np.fill_diagonal(off, 0.0)
    if np.any(off < 0):
        i, j = np.argwhere(off < 0)[0]
        raise NegativeOffDiagonalError(
            f"rate from state {i} to {j} is negative: {float(a[i, j])!r}")
    sums = a.sum(axis=1)
    bad = np.abs(sums) > ROW_SUM_INPUT_TOL
    if np.any(bad):
        i = int(np.argmax(bad))
        raise RowSumNonZeroError(f"row {i} sums to {sums[i]!r}, not 0")
    ent = off
    np.fill_diagonal(ent, -off.sum(axis=1))
    if labels is not None:
        labels = tuple(str(s) for s in labels)
        if len(labels) != n:
            raise ValueError(f"{len(labels)} labels for {n} states")
    return GeneratorMatrix(entries=_freeze(ent), labels=labels)


def decompose_classes(Q: GeneratorMatrix) -> ClassDecomposition:
    """Split the state space into closed communication classes.

    Strongly connected components of the positive-rate digraph are
    computed; every component must be closed (no positive rate leaving
    it), otherwise the chain has transient states and
    NotBlockDecomposableError is raised.
    """
    a = Q.entries
    n = Q.n
    adj = csr_matrix((a > 0).astype(np.int8))
    n_comp, comp = connected_components(adj, directed=True, connection="strong")
    classes = []
    for k in range(n_comp):
        members = np.flatnonzero(comp == k)
        outside = np.flatnonzero(comp != k)
        if outside.size and np.any(a[np.ix_(members, outside)] > 0):
            raise NotBlockDecomposableError(
                f"states {members.tolist()} are transient: their component "
                "has positive rates leaving it")
        classes.append(members)
    classes.sort(key=lambda m: int(m[0]))
    gens = tuple(_freeze(a[np.ix_(m, m)].copy()) for m in classes)
    # a closed strongly connected component is irreducible by construction
    irr = tuple(True for _ in classes)
    return ClassDecomposition(
        classes=tuple(_freeze(m.astype(np.int64)) for m in classes),
        generators=gens,
        irreducible=irr,
    )


def invariant_measure(Q: GeneratorMatrix) -> NDArray[np.float64]:
    """Unique invariant law of an irreducible chain.

    Solves mu^T Q = 0, sum(mu) = 1 by replacing the last balance equation
    with the normalization row. Raises NotIrreducibleError when the chain
    has more than one communication class, and checks the residual of the
    returned solution.
    """
    dec = decompose_classes(Q)
    if dec.n_classes != 1:
        raise NotIrreducibleError(
            f"chain has {dec.n_classes} communication classes")
    n = Q.n
    A = Q.entries.T.copy()
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        mu = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise NotIrreducibleError(f"balance system is singular: {exc}") from exc
    resid = float(np.max(np.abs(Q.entries.T @ mu)))
    if resid > 1e-10:
        raise NotIrreducibleError(f"balance residual {resid:.3e} exceeds 1e-10")
    if np.any(mu <= 0):
        raise NotIrreducibleError("computed invariant law is not strictly positive")
    return _freeze(mu)


def transition_matrix(Q: GeneratorMatrix, dt: float) -> NDArray[np.float64]:
    """Transition probabilities exp(Q dt) of the embedded skeleton.

    Uses scaling-and-squaring. Entries are clamped at zero if they round
    slightly negative (never below -1e-12); rows sum to 1 within 1e-10.
    """
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt!r}")
    P = expm(Q.entries * dt)
    low = float(P.min())
    if low < -1e-12:
        raise ArithmeticError(f"transition matrix entry {low!r} below -1e-12")
    np.clip(P, 0.0, None, out=P)
    row_err = float(np.max(np.abs(P.sum(axis=1) - 1.0)))
    if row_err > 1e-10:
        raise ArithmeticError(f"transition rows off stochastic by {row_err:.3e}")
    return _freeze(P)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def _draw_index(cumprobs: np.ndarray, u: float) -> int:
    return int(min(np.searchsorted(cumprobs, u, side="right"), len(cumprobs) - 1))


def sample_path(Q: GeneratorMatrix, nu, T: float, rng: np.random.Generator) -> ChainPath:
    """Sample one exact chain trajectory on [0, T].

    Event-driven simulation: exponential holding times with the exact
    state-dependent rates, jump targets drawn from the normalized
    off-diagonal row. States with zero total rate are absorbing.

    Parameters
    ----------
    Q : GeneratorMatrix
    nu : array_like
        Initial law of the state.
    T : float
        Horizon, > 0.
    rng : numpy.random.Generator
        Drives both the initial draw and all jump randomness.
    """
    if T <= 0:
        raise ValueError(f"horizon must be > 0, got {T!r}")
    nu = as_distribution(nu, Q.n, "initial law")
    a = Q.entries
    rates = -np.diag(a).copy()
    jump = a.copy()
    np.fill_diagonal(jump, 0.0)
    denom = np.where(rates > 0, rates, 1.0)
    cum_jump = np.cumsum(jump / denom[:, None], axis=1)
    state = _draw_index(np.cumsum(nu), rng.random())
    states = [state]
    times = []
    t = 0.0
    while True:
        lam = rates[state]
        if lam <= 0:
            break
        t += rng.exponential(1.0 / lam)
        if t >= T:
            break
        state = _draw_index(cum_jump[state], rng.random())
        states.append(state)
        times.append(t)
    return ChainPath(
        states=_freeze(np.asarray(states, dtype=np.int64)),
        jump_times=_freeze(np.asarray(times, dtype=float)),
        horizon=float(T),
    )
