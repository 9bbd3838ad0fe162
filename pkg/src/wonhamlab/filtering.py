"""Conditional-law recursions for a hidden finite-state chain.

The continuous-time filter is discretized by a split step on the
observation grid: a predict half-step through the transition semigroup
exp(Q dt), then a Bayes correction with the Gaussian increment
likelihood, then renormalization. This composition is exactly the optimal
filter of the discretized hidden Markov model, so probability vectors
stay probability vectors and no Euler blow-up is possible.

The module also provides the unnormalized (linear) propagator over a
window, the backward-in-initial-condition smoother that tracks the
conditional law of the starting state, and an augmented-chain filter on
pairs (X_0, X_t) used as a brute-force oracle for the smoother.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .csvio import write_csv
from .markov import GeneratorMatrix, _freeze, as_distribution, transition_matrix
from .observation import ObservationModel, ObservationPath

__all__ = [
    "DegenerateMassError",
    "StateSpaceTooLargeError",
    "StepKernel",
    "FilterTrajectory",
    "ZakaiPropagator",
    "SmootherMatrix",
    "SmootherRun",
    "AugmentedRun",
    "wonham_step",
    "run_filter",
    "filter_step_batch",
    "pair_log_distances",
    "batch_time_average",
    "zakai_propagator",
    "smoother_step",
    "run_smoother",
    "augmented_filter",
]

AUGMENTED_MAX_STATES = 50


class DegenerateMassError(ArithmeticError):
    """The correction step lost all mass: dt * h^2 / sigma^2 is too large
    for the grid, or the filter support collapsed. Refine the grid."""


class StateSpaceTooLargeError(ValueError):
    """The augmented pair chain would exceed the supported state count."""


# ---------------------------------------------------------------------------
# one split step, scalar and batched
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepKernel:
    """Precomputed pieces of one predict-correct step at a fixed dt."""

    P: NDArray[np.float64]        # transition probabilities exp(Q dt)
    gain: NDArray[np.float64]     # h / sigma^2
    drift: NDArray[np.float64]    # h^2 dt / (2 sigma^2)
    dt: float

    @classmethod
    def build(cls, Q: GeneratorMatrix, model: ObservationModel, dt: float) -> "StepKernel":
        if model.n != Q.n:
            raise ValueError(f"h has length {model.n}, chain has {Q.n} states")
        h = model.h
        s2 = model.sigma ** 2
        return cls(P=transition_matrix(Q, dt),
                   gain=_freeze(h / s2),
                   drift=_freeze(h * h * dt / (2.0 * s2)),
                   dt=float(dt))

    @property
    def n(self) -> int:
        return self.P.shape[0]


def _correction_weights(kernel: StepKernel, dY: np.ndarray):
    """Per-state likelihood weights, rescaled by the row maximum.

    Returns (w, log_rescale) with w = exp(E - max E) row-wise, so that the
    true weight is w * exp(log_rescale). The rescale keeps exp() safe for
    any increment size.
    """
    E = dY[:, None] * kernel.gain[None, :] - kernel.drift[None, :]
    Emax = E.max(axis=1, keepdims=True)
    return np.exp(E - Emax), Emax[:, 0]


def filter_step_batch(pis: np.ndarray, dY: np.ndarray, kernel: StepKernel):
    """Advance a batch of conditional laws by one grid step.

    Parameters
    ----------
    pis : ndarray, shape (m, n)
        Current conditional laws, one per row.
    dY : ndarray, shape (m,)
        Observation increments, one per row.
    kernel : StepKernel

    Returns
    -------
    (pis_next, log_mass_inc) : shapes (m, n) and (m,)
        Updated laws and the log of the per-row normalization mass
        (the increment of the log likelihood of the data).
    """
    p = pis @ kernel.P
    w, log_rescale = _correction_weights(kernel, dY)
    u = w * p
    S = u.sum(axis=1, keepdims=True)
    if not np.all(S > 0) or not np.all(np.isfinite(S)):
        raise DegenerateMassError(
            "correction mass vanished or overflowed; refine dt or check the model")
    return u / S, np.log(S[:, 0]) + log_rescale


def wonham_step(pi, dY: float, dt: float, Q: GeneratorMatrix,
                model: ObservationModel):
    """One reference split step for a single conditional law.

    Builds the semigroup for this dt on every call; inner loops should
    use run_filter or a prebuilt StepKernel with filter_step_batch.

    Returns (pi_next, log_mass_increment).
    """
    pi = as_distribution(pi, Q.n, "conditional law")
    kernel = StepKernel.build(Q, model, dt)
    pis, inc = filter_step_batch(pi[None, :], np.asarray([dY], dtype=float), kernel)
    return pis[0], float(inc[0])


# ---------------------------------------------------------------------------
# full runs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FilterTrajectory:
    """Conditional laws on the observation grid plus the log likelihood.

    pis[k] is the law after k steps (pis[0] is the initial condition);
    log_mass[k] is the accumulated log normalization mass up to step k.
    """

    dt: float
    pis: NDArray[np.float64]
    log_mass: NDArray[np.float64]

    @property
    def n_steps(self) -> int:
        return self.pis.shape[0] - 1

    @property
    def times(self) -> NDArray[np.float64]:
        return np.arange(self.pis.shape[0]) * self.dt

    @property
    def final(self) -> NDArray[np.float64]:
        return self.pis[-1]

    def to_csv(self, target) -> None:
        n = self.pis.shape[1]
        header = ["t"] + [f"pi_{i}" for i in range(n)] + ["log_mass"]
        rows = ((k * self.dt, *self.pis[k], self.log_mass[k])
                for k in range(self.pis.shape[0]))
        write_csv(target, header, rows)


def run_filter(init, obs: ObservationPath, Q: GeneratorMatrix,
               model: ObservationModel) -> FilterTrajectory:
    """Run the split-step filter over a full observation record.

    Parameters
    ----------
    init : array_like
        Initial conditional law (the filter's opinion of X_0; it need not
        match the law that generated the data).
    obs : ObservationPath
    Q : GeneratorMatrix
    model : ObservationModel

    Returns
    -------
    FilterTrajectory
        Laws at every grid point, each summing to 1 within 1e-12.
    """
    init = as_distribution(init, Q.n, "initial law")
    kernel = StepKernel.build(Q, model, obs.dt)
    K = obs.n_steps
    pis = np.empty((K + 1, Q.n))
    log_mass = np.empty(K + 1)
    pis[0] = init
    log_mass[0] = 0.0
    cur = init[None, :]
    for k in range(K):
        cur, inc = filter_step_batch(cur, obs.increments[k:k + 1], kernel)
        pis[k + 1] = cur[0]
        log_mass[k + 1] = log_mass[k] + inc[0]
    return FilterTrajectory(dt=obs.dt, pis=_freeze(pis), log_mass=_freeze(log_mass))


def pair_log_distances(init_a, init_b, increments: np.ndarray,
                       kernel: StepKernel) -> NDArray[np.float64]:
    """Log L1 distance between two filters driven by the same data.

    Row t of increments holds one trial's observation increments; both
    filters consume the same row. Returns ell with shape
    (trials, K + 1): ell[t, k] = log ||pi_a(k) - pi_b(k)||_1.

    The difference delta = pi_a - pi_b is propagated by its own exact
    recursion (the two-filter update algebra rearranged so that delta is
    never formed by subtracting two order-one vectors):

        delta' = [w * (P^T delta) - pi_a' * s] / S_b,   s = sum w * (P^T delta)

    with per-step L1 renormalization of delta and the log of its norm
    accumulated in ell. Plain subtraction floors near 1e-16; this form
    tracks the distance to arbitrary depth, degrading gracefully to the
    exact tangent flow once exp(ell) underflows. Trials with init_a equal
    to init_b stay at ell = -inf throughout.
    """
    trials, K = increments.shape
    n = kernel.n
    init_a = as_distribution(init_a, n, "first initial law")
    init_b = as_distribution(init_b, n, "second initial law")
    ell = np.full((trials, K + 1), -np.inf)
    pis = np.broadcast_to(init_a, (trials, n)).copy()
    delta0 = init_a - init_b
    m0 = float(np.abs(delta0).sum())
    if m0 == 0.0:
        for k in range(K):
            pis, _ = filter_step_batch(pis, increments[:, k], kernel)
        return ell
    r = np.broadcast_to(delta0 / m0, (trials, n)).copy()
    ell[:, 0] = np.log(m0)
    for k in range(K):
        p = pis @ kernel.P
        w, _ = _correction_weights(kernel, increments[:, k])
        u = w * p
        S = u.sum(axis=1, keepdims=True)
        if not np.all(S > 0):
            raise DegenerateMassError("correction mass vanished; refine dt")
        pis = u / S
        wr = w * (r @ kernel.P)
        s_tilde = wr.sum(axis=1, keepdims=True)
        scale = np.exp(ell[:, k])[:, None]      # current absolute distance
        S_b = S - scale * s_tilde               # mass of the second filter
        if not np.all(S_b > 0):
            raise DegenerateMassError(
                "second filter's correction mass vanished; refine dt")
        d = (wr - pis * s_tilde) / S_b
        mnorm = np.abs(d).sum(axis=1)
        alive = mnorm > 0
        with np.errstate(divide="ignore"):
            ell[:, k + 1] = np.where(alive, ell[:, k] + np.log(mnorm), -np.inf)
        r = np.where(alive[:, None], d / np.where(mnorm[:, None] > 0, mnorm[:, None], 1.0), 0.0)
    return ell


def batch_time_average(init, increments: np.ndarray,
                       kernel: StepKernel) -> NDArray[np.float64]:
    """Per-trial time average (1/T) integral of pi_t dt, left-endpoint rule.

    increments has shape (trials, K); the returned array is (trials, n).
    """
    trials, K = increments.shape
    init = as_distribution(init, kernel.n, "initial law")
    pis = np.broadcast_to(init, (trials, kernel.n)).copy()
    acc = np.zeros_like(pis)
    for k in range(K):
        acc += pis
        pis, _ = filter_step_batch(pis, increments[:, k], kernel)
    return acc / K


# ---------------------------------------------------------------------------
# unnormalized propagator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ZakaiPropagator:
    """Linear propagator of the unnormalized conditional law over a window.

    The true matrix is matrix * exp(log_scale); the scalar exponent is
    kept separate so long windows cannot overflow. Columns are the
    unnormalized filters started from the unit vectors.
    """

    matrix: NDArray[np.float64]
    log_scale: float

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def compose(self, earlier: "ZakaiPropagator") -> "ZakaiPropagator":
        """Propagator for the concatenated window (earlier first)."""
        M = self.matrix @ earlier.matrix
        s = float(M.max())
        if s <= 0:
            raise ArithmeticError("composed propagator has no positive entry")
        return ZakaiPropagator(matrix=_freeze(M / s),
                               log_scale=self.log_scale + earlier.log_scale + np.log(s))

    def apply_normalized(self, v) -> NDArray[np.float64]:
        """Normalized conditional law from initial vector v (scale drops out)."""
        w = self.matrix @ np.asarray(v, dtype=float)
        s = w.sum()
        if s <= 0:
            raise DegenerateMassError("propagated vector has no mass")
        return w / s


def zakai_propagator(obs: ObservationPath, Q: GeneratorMatrix,
                     model: ObservationModel) -> ZakaiPropagator:
    """Accumulate the linear filter propagator over an observation window.

    Each step multiplies by diag(weights) exp(Q dt)^T; a scalar is
    factored out per step into log_scale. For an irreducible chain every
    entry of the result is strictly positive.
    """
    kernel = StepKernel.build(Q, model, obs.dt)
    PT = np.ascontiguousarray(kernel.P.T)
    J = np.eye(Q.n)
    log_scale = 0.0
    for k in range(obs.n_steps):
        w, rescale = _correction_weights(kernel, obs.increments[k:k + 1])
        J = w[0][:, None] * (PT @ J)
        s = float(J.max())
        if s <= 0 or not np.isfinite(s):
            raise DegenerateMassError("propagator lost all mass; refine dt")
        J /= s
        log_scale += np.log(s) + float(rescale[0])
    return ZakaiPropagator(matrix=_freeze(J), log_scale=float(log_scale))


# ---------------------------------------------------------------------------
# smoother for the conditional law of the starting state
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SmootherMatrix:
    """rho[j, i] = P(X_0 = j | data so far, X_t = i); columns sum to 1."""

    rho: NDArray[np.float64]

    @classmethod
    def identity(cls, n: int) -> "SmootherMatrix":
        return cls(rho=_freeze(np.eye(n)))

    @property
    def n(self) -> int:
        return self.rho.shape[0]

    @property
    def delta(self) -> float:
        """Largest spread max_i rho[j, i] - min_i rho[j, i] over rows j.

        This is the sup over j, k, l of |rho[j, k] - rho[j, l]|; it never
        increases along the smoother flow.
        """
        return float((self.rho.max(axis=1) - self.rho.min(axis=1)).max())


def smoother_step(sm: SmootherMatrix, pi, Q: GeneratorMatrix, dt: float,
                  floor: float = 1e-12) -> SmootherMatrix:
    """One explicit Euler step of the smoother flow.

    d rho[j, i] / dt = sum_{r != i} lam[r, i] pi(r) / pi(i) *
                       (rho[j, r] - rho[j, i])

    The denominator pi(i) is floored at `floor`; columns are renormalized
    after the step (the flow preserves column sums exactly, so only
    rounding drift is removed; a drift beyond 1e-9 raises).

    The Euler update of column i is a convex combination of the old
    columns only while dt * s_i <= 1, where s_i is the total inflow
    coefficient. A floored denominator makes s_i of order 1/floor, and an
    uncapped step would then overshoot to entries of size dt/floor. The
    per-column step is therefore capped at 1/s_i: capped columns land
    exactly on their relaxation limit, uncapped columns take the plain
    Euler step bit for bit.
    """
    rho = sm.rho
    pi = np.asarray(pi, dtype=float)
    off = Q.entries.copy()
    np.fill_diagonal(off, 0.0)
    coef = off * pi[:, None] / np.maximum(pi, floor)[None, :]
    s = coef.sum(axis=0)
    step = np.minimum(dt, 1.0 / np.maximum(s, 1e-300))
    out = rho + step[None, :] * (rho @ coef - rho * s[None, :])
    col = out.sum(axis=0)
    if float(np.max(np.abs(col - 1.0))) > 1e-9:
        raise ArithmeticError("smoother column sums drifted beyond 1e-9")
    return SmootherMatrix(rho=_freeze(out / col[None, :]))


@dataclass(frozen=True)
class SmootherRun:
    """Smoother matrices along a filter run.

    rhos[k] is the smoother state after k grid steps (rhos[0] = identity).
    floor_dominated is set when the probability floor was engaged on more
    than flag_fraction of the steps, which signals an effectively
    degenerate current-state law; results are still returned.
    """

    dt: float
    rhos: NDArray[np.float64]
    filter_run: FilterTrajectory
    floor: float
    floor_fraction: float
    floor_dominated: bool

    @property
    def deltas(self) -> NDArray[np.float64]:
        spread = self.rhos.max(axis=2) - self.rhos.min(axis=2)
        return spread.max(axis=1)

    def initial_posterior(self, k: int) -> NDArray[np.float64]:
        """P(X_0 = . | data up to step k) = rho(k) applied to the filter law."""
        return self.rhos[k] @ self.filter_run.pis[k]

    def to_csv(self, target) -> None:
        n = self.rhos.shape[1]
        header = ["t"] + [f"rho_{j}_{i}" for j in range(n) for i in range(n)] \
            + ["delta"]
        deltas = self.deltas
        rows = ((k * self.dt, *self.rhos[k].ravel(), deltas[k])
                for k in range(self.rhos.shape[0]))
        write_csv(target, header, rows)


def run_smoother(obs: ObservationPath, Q: GeneratorMatrix,
                 model: ObservationModel, init, floor: float = 1e-12,
                 flag_fraction: float = 0.1) -> SmootherRun:
    """Run the filter and the initial-state smoother over a record.

    The smoother starts at the identity (conditioning on X_0 itself) and
    is advanced with the filter law at the left endpoint of each step.
    """
    traj = run_filter(init, obs, Q, model)
    n = Q.n
    off_mask = Q.entries > 0
    used_cols = off_mask.any(axis=0)
    K = obs.n_steps
    rhos = np.empty((K + 1, n, n))
    sm = SmootherMatrix.identity(n)
    rhos[0] = sm.rho
    floored = 0
    for k in range(K):
        pi = traj.pis[k]
        if np.any(pi[used_cols] < floor):
            floored += 1
        sm = smoother_step(sm, pi, Q, obs.dt, floor)
        rhos[k + 1] = sm.rho
    frac = floored / K if K else 0.0
    return SmootherRun(dt=obs.dt, rhos=_freeze(rhos), filter_run=traj,
                       floor=floor, floor_fraction=frac,
                       floor_dominated=frac > flag_fraction)


# ---------------------------------------------------------------------------
# augmented pair chain (X_0, X_t): brute-force oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AugmentedRun:
    """Joint conditional laws of (X_0, X_t) on the grid.

    joints[k][j, i] = P(X_0 = j, X_t_k = i | data up to step k).
    """

    dt: float
    joints: NDArray[np.float64]
    log_mass: NDArray[np.float64]

    @property
    def n_steps(self) -> int:
        return self.joints.shape[0] - 1

    def marginals(self) -> NDArray[np.float64]:
        """Current-state laws P(X_t = . | data), shape (K + 1, n)."""
        return self.joints.sum(axis=1)

    def initial_posteriors(self) -> NDArray[np.float64]:
        """Starting-state laws P(X_0 = . | data), shape (K + 1, n)."""
        return self.joints.sum(axis=2)

    def conditional_initial(self, k: int) -> NDArray[np.float64]:
        """rho oracle at step k: joints[k] with each column normalized.

        Columns i with zero current-state mass are returned as NaN; they
        correspond to conditioning on an event of probability zero.
        """
        joint = self.joints[k]
        m = joint.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(m[None, :] > 0, joint / m[None, :], np.nan)
        return out


def augmented_filter(init, obs: ObservationPath, Q: GeneratorMatrix,
                     model: ObservationModel) -> AugmentedRun:
    """Exact filter on the pair chain (X_0, X_t).

    The pair chain has n^2 states (j, i): the first coordinate is frozen
    at the starting state, the second moves with the original generator,
    and the observation reads the second coordinate. Joint laws therefore
    follow the ordinary split step with transition matrix I kron P and a
    tiled observation map. Summing out either coordinate must reproduce
    the ordinary filter and the smoother-weighted initial law.
    """
    n = Q.n
    if n > AUGMENTED_MAX_STATES:
        raise StateSpaceTooLargeError(
            f"pair chain would have {n * n} states (limit {AUGMENTED_MAX_STATES}^2)")
    init = as_distribution(init, n, "initial law")
    kernel = StepKernel.build(Q, model, obs.dt)
    P_pair = np.kron(np.eye(n), kernel.P)
    h_pair = np.tile(model.h, n)
    s2 = model.sigma ** 2
    pair_kernel = StepKernel(P=_freeze(P_pair),
                             gain=_freeze(h_pair / s2),
                             drift=_freeze(h_pair * h_pair * obs.dt / (2.0 * s2)),
                             dt=obs.dt)
    K = obs.n_steps
    joints = np.empty((K + 1, n, n))
    log_mass = np.empty(K + 1)
    joints[0] = np.diag(init)
    log_mass[0] = 0.0
    cur = np.diag(init).reshape(1, n * n)
    for k in range(K):
        cur, inc = filter_step_batch(cur, obs.increments[k:k + 1], pair_kernel)
        joints[k + 1] = cur[0].reshape(n, n)
        log_mass[k + 1] = log_mass[k] + inc[0]
    return AugmentedRun(dt=obs.dt, joints=_freeze(joints), log_mass=_freeze(log_mass))
