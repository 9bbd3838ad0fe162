"""A four-state cyclic chain whose filter never forgets where it started.

States are labeled 1..4 (array index = label - 1). The chain moves
1 -> 2 -> 3 -> 4 -> 1, each transition at unit rate, and the observation
is the noise-free indicator Y_t = 1{X_t in {1, 3}}. Every chain jump
flips Y, so the data reveal exactly the jump times plus Y_0, and the
conditional law is a pure-jump process that can be computed in closed
form. Its value cycles with period four through vectors determined by
the initial law, so two filters started from different laws remain a
fixed distance apart forever: forgetting of the initial condition fails
even though the chain itself is ergodic.

Only pi1 = P(X_t = 1 | data) and pi2 = P(X_t = 2 | data) need tracking:
pi3 = Y - pi1 and pi4 = (1 - Y) - pi2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .csvio import write_csv
from .markov import GeneratorMatrix, _freeze, as_distribution, sample_path, validate_generator
from .observation import JumpObservation, noiseless_indicator_observation
from .seeding import check_seed, trial_rng

__all__ = [
    "DegenerateInitError",
    "CyclicModel",
    "CyclicFilterState",
    "CyclicFilterTrajectory",
    "InvariantSupport",
    "InstabilityReport",
    "build_cyclic_model",
    "exact_jump_filter",
    "reference_cycle",
    "invariant_support",
    "instability_demo",
]


class DegenerateInitError(ValueError):
    """The initial law puts no mass on the states consistent with Y_0,
    so the starting conditional law is 0/0."""


@dataclass(frozen=True)
class CyclicModel:
    """The cyclic four-state chain and its indicator observation."""

    Q: GeneratorMatrix
    indicator_states: tuple[int, ...]   # array indices with h = 1
    h: NDArray[np.float64]

    @property
    def uniform_law(self) -> NDArray[np.float64]:
        return np.full(4, 0.25)


def build_cyclic_model() -> CyclicModel:
    """The 4x4 unit-rate cycle with indicator read on states 1 and 3.

    Its invariant law is uniform, all states communicate, and every row
    of the generator contains an off-diagonal zero, so the occupation
    rate bound is zero (vacuous) while forgetting genuinely fails at
    sigma = 0.
    """
    rows = [
        [-1.0, 1.0, 0.0, 0.0],
        [0.0, -1.0, 1.0, 0.0],
        [0.0, 0.0, -1.0, 1.0],
        [1.0, 0.0, 0.0, -1.0],
    ]
    Q = validate_generator(rows, labels=("1", "2", "3", "4"))
    h = np.array([1.0, 0.0, 1.0, 0.0])
    return CyclicModel(Q=Q, indicator_states=(0, 2), h=_freeze(h))


@dataclass(frozen=True)
class CyclicFilterState:
    """Conditional law at one time, reduced to (y, pi1, pi2)."""

    y: int
    pi1: float
    pi2: float

    @property
    def pi3(self) -> float:
        return self.y - self.pi1

    @property
    def pi4(self) -> float:
        return (1 - self.y) - self.pi2

    @property
    def law(self) -> NDArray[np.float64]:
        return np.array([self.pi1, self.pi2, self.pi3, self.pi4])


@dataclass(frozen=True)
class CyclicFilterTrajectory:
    """Piecewise-constant conditional law between observation jumps.

    Interval k runs from jump_times[k-1] (or 0) to jump_times[k] (or the
    horizon); y[k], pi1[k], pi2[k] hold its constant values.
    """

    jump_times: NDArray[np.float64]
    horizon: float
    y: NDArray[np.int64]
    pi1: NDArray[np.float64]
    pi2: NDArray[np.float64]

    @property
    def n_intervals(self) -> int:
        return self.y.shape[0]

    def interval_state(self, k: int) -> CyclicFilterState:
        return CyclicFilterState(y=int(self.y[k]), pi1=float(self.pi1[k]),
                                 pi2=float(self.pi2[k]))

    def laws_at(self, t) -> NDArray[np.float64]:
        """Full 4-state conditional laws at times t, shape (..., 4)."""
        idx = np.searchsorted(self.jump_times, t, side="right")
        y = self.y[idx].astype(float)
        p1 = self.pi1[idx]
        p2 = self.pi2[idx]
        return np.stack([p1, p2, y - p1, (1.0 - y) - p2], axis=-1)


def exact_jump_filter(nu, obs: JumpObservation) -> CyclicFilterTrajectory:
    """Closed-form conditional law of the cyclic chain from jump data.

    Between jumps the law is constant. At a jump of the observation the
    update is exact: when Y falls 1 -> 0 the tracked mass carries over
    (new pi2 = old pi1); when Y rises 0 -> 1 it flips (new pi1 =
    1 - old pi2). The start is Bayes from Y_0 alone.

    Raises DegenerateInitError when nu gives zero mass to the parity
    class consistent with Y_0.
    """
    nu = as_distribution(nu, 4, "initial law")
    y = int(obs.initial_value)
    if y == 1:
        mass = nu[0] + nu[2]
        if mass <= 0:
            raise DegenerateInitError("initial law puts no mass on states {1, 3}")
        p1, p2 = nu[0] / mass, 0.0
    else:
        mass = nu[1] + nu[3]
        if mass <= 0:
            raise DegenerateInitError("initial law puts no mass on states {2, 4}")
        p1, p2 = 0.0, nu[1] / mass
    m = obs.n_jumps
    ys = np.empty(m + 1, dtype=np.int64)
    pi1 = np.empty(m + 1)
    pi2 = np.empty(m + 1)
    ys[0], pi1[0], pi2[0] = y, p1, p2
    for k in range(m):
        if y == 1:
            p1, p2 = 0.0, p1          # Y falls: mass carries to state 2
            y = 0
        else:
            p1, p2 = 1.0 - p2, 0.0    # Y rises: mass flips onto state 1
            y = 1
        ys[k + 1], pi1[k + 1], pi2[k + 1] = y, p1, p2
    return CyclicFilterTrajectory(jump_times=obs.jump_times, horizon=obs.horizon,
                                  y=_freeze(ys), pi1=_freeze(pi1), pi2=_freeze(pi2))


def reference_cycle(nu, y0: int, n_intervals: int):
    """Expected per-interval (pi1, pi2) values as closed-form algebra.

    The sequence is periodic with period 4 from the first interval. For
    y0 = 1 it cycles through (a, 0), (0, a), (1-a, 0), (0, 1-a) with
    a = nu1 / (nu1 + nu3); for y0 = 0 through (0, c), (1-c, 0),
    (0, 1-c), (c, 0) with c = nu2 / (nu2 + nu4), state labels 1-based.
    Raises DegenerateInitError on a 0/0 start.
    """
    nu = as_distribution(nu, 4, "initial law")
    if y0 == 1:
        mass = nu[0] + nu[2]
        if mass <= 0:
            raise DegenerateInitError("initial law puts no mass on states {1, 3}")
        a, a2 = nu[0] / mass, nu[2] / mass
        pat1 = [a, 0.0, a2, 0.0]
        pat2 = [0.0, a, 0.0, a2]
    elif y0 == 0:
        mass = nu[1] + nu[3]
        if mass <= 0:
            raise DegenerateInitError("initial law puts no mass on states {2, 4}")
        c, c2 = nu[1] / mass, nu[3] / mass
        pat1 = [0.0, c2, 0.0, c]
        pat2 = [c, 0.0, c2, 0.0]
    else:
        raise ValueError(f"y0 must be 0 or 1, got {y0!r}")
    idx = np.arange(n_intervals) % 4
    return np.asarray(pat1)[idx], np.asarray(pat2)[idx]


def cycle_table_rows(nu, traj: CyclicFilterTrajectory, n_intervals: int,
                     tol: float = 1e-14):
    """Rows comparing a filter run against the closed-form cycle.

    Yields (interval, y, pi1, pi2, expected_pi1, expected_pi2, match)
    for the first n_intervals intervals of the trajectory.
    """
    m = min(n_intervals, traj.n_intervals)
    exp1, exp2 = reference_cycle(nu, int(traj.y[0]), m)
    for k in range(m):
        ok = (abs(traj.pi1[k] - exp1[k]) <= tol
              and abs(traj.pi2[k] - exp2[k]) <= tol)
        yield (k, int(traj.y[k]), float(traj.pi1[k]), float(traj.pi2[k]),
               float(exp1[k]), float(exp2[k]), bool(ok))


@dataclass(frozen=True)
class InvariantSupport:
    """The eight (pi1, pi2) vectors charged by the long-run filter law.

    vectors[i] is the i-th support point, the four built from the
    odd-state masses first, then the four from the even-state masses;
    masses[i] is its long-run ensemble probability.
    Groups whose conditioning event has probability zero get mass 0 and
    NaN coordinates.
    """

    vectors: NDArray[np.float64]
    masses: NDArray[np.float64]


def invariant_support(nu) -> InvariantSupport:
    """Support points and masses of the long-run law of (pi1, pi2).

    With a = nu1/(nu1+nu3) and c = nu2/(nu2+nu4) the support is
    (a,0), (0,a), (1-a,0), (0,1-a) each with mass (nu1+nu3)/4, and
    (c,0), (0,c), (1-c,0), (0,1-c) each with mass (nu2+nu4)/4. The law
    splits by the parity revealed by Y_0 and then cycles uniformly over
    the four phases, which is why it is not unique as nu varies.
    """
    nu = as_distribution(nu, 4, "initial law")
    m_odd = nu[0] + nu[2]
    m_even = nu[1] + nu[3]
    if m_odd > 0:
        a, a2 = nu[0] / m_odd, nu[2] / m_odd
        group1 = [(a, 0.0), (0.0, a), (a2, 0.0), (0.0, a2)]
    else:
        group1 = [(np.nan, np.nan)] * 4
    if m_even > 0:
        c, c2 = nu[1] / m_even, nu[3] / m_even
        group2 = [(c, 0.0), (0.0, c), (c2, 0.0), (0.0, c2)]
    else:
        group2 = [(np.nan, np.nan)] * 4
    vectors = np.array(group1 + group2)
    masses = np.array([m_odd / 4] * 4 + [m_even / 4] * 4)
    return InvariantSupport(vectors=_freeze(vectors), masses=_freeze(masses))


@dataclass(frozen=True)
class InstabilityReport:
    """Mean filter gap over time for two initial laws on shared data.

    The closed-form margin is the exact expected gap: on data whose
    first observation reveals the odd parity both filters sit on their
    a-type vectors in phase lock, so the full-law L1 gap is constantly
    2 |a_nu - a_beta|, and similarly for the even parity. persistent is
    set when every grid mean stays above half the margin.
    """

    times: NDArray[np.float64]
    mean_distance: NDArray[np.float64]
    stderr: NDArray[np.float64]
    margin: float
    trials: int
    persistent: bool

    def to_csv(self, target) -> None:
        rows = ((t, m, s) for t, m, s in
                zip(self.times, self.mean_distance, self.stderr))
        write_csv(target, ["t", "mean_l1", "stderr"], rows)


def expected_gap(nu, beta) -> float:
    """Exact E ||pi^nu_t - pi^beta_t||_1 for t > 0 under nu-generated data."""
    nu = as_distribution(nu, 4, "first law")
    beta = as_distribution(beta, 4, "second law")
    total = 0.0
    m_odd = nu[0] + nu[2]
    if m_odd > 0:
        b_odd = beta[0] + beta[2]
        if b_odd <= 0:
            raise DegenerateInitError("second law puts no mass on states {1, 3}")
        total += m_odd * 2.0 * abs(nu[0] / m_odd - beta[0] / b_odd)
    m_even = nu[1] + nu[3]
    if m_even > 0:
        b_even = beta[1] + beta[3]
        if b_even <= 0:
            raise DegenerateInitError("second law puts no mass on states {2, 4}")
        total += m_even * 2.0 * abs(nu[1] / m_even - beta[1] / b_even)
    return float(total)


def instability_demo(nu, beta, T: float, trials: int, seed: int,
                     n_grid: int = 8) -> InstabilityReport:
    """Monte Carlo check that the filter gap does not decay.

    Each trial samples a chain path started from nu, builds the exact
    noise-free filter for both initial laws on the same observation
    record, and evaluates the L1 gap of the full conditional laws on a
    time grid. The report carries the closed-form expected gap as the
    margin; the gap process is constant in t, so the means should
    hover at the margin at every grid time.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    check_seed(seed)
    model = build_cyclic_model()
    nu = as_distribution(nu, 4, "first law")
    beta = as_distribution(beta, 4, "second law")
    times = np.linspace(T / n_grid, T, n_grid)
    gaps = np.empty((trials, n_grid))
    for i in range(trials):
        rng = trial_rng(seed, i)
        path = sample_path(model.Q, nu, T, rng)
        obs = noiseless_indicator_observation(path, model.indicator_states)
        f_nu = exact_jump_filter(nu, obs)
        f_beta = exact_jump_filter(beta, obs)
        diff = f_nu.laws_at(times) - f_beta.laws_at(times)
        gaps[i] = np.abs(diff).sum(axis=-1)
    mean = gaps.mean(axis=0)
    stderr = (gaps.std(axis=0, ddof=1) / np.sqrt(trials)) if trials > 1 \
        else np.zeros(n_grid)
    margin = expected_gap(nu, beta)
    persistent = bool(np.all(mean >= margin / 2)) and margin > 0
    return InstabilityReport(times=_freeze(times), mean_distance=_freeze(mean),
                             stderr=_freeze(stderr), margin=margin,
                             trials=trials, persistent=persistent)
