"""Forgetting-rate bounds, exponent estimators, and class identification.

The estimators quantify how fast two filters driven by the same data but
started from different laws merge (or fail to merge): closed-form rate
bounds from the generator, a Monte Carlo estimate of the log-slope of
the filter gap, a contraction-coefficient estimate from unit-window
propagators, and, for chains made of several closed classes, moment
criteria and a nearest-centroid classifier that identify the class from
the observation record alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import quad
from scipy.linalg import expm

from .csvio import write_csv
from .filtering import StepKernel, pair_log_distances, zakai_propagator
from .markov import (ClassDecomposition, GeneratorMatrix, NotIrreducibleError,
                     _freeze, as_distribution, invariant_measure, sample_path,
                     validate_generator)
from .metrics import birkhoff_tau
from .observation import ObservationModel, ObservationPath, synthesize_observations
from .seeding import check_seed, trial_rng

__all__ = [
    "NotAbsolutelyContinuousError",
    "ClassNotIrreducibleError",
    "HorizonTooShortError",
    "LyapunovEstimate",
    "ContractionEstimate",
    "RateReport",
    "PairIdentifiability",
    "IdentifiabilityReport",
    "ClassificationResult",
    "bound_mu_row",
    "bound_geo",
    "prefactors",
    "simulate_increments",
    "lyapunov_estimate",
    "lyapunov_sigma_sweep",
    "contraction_rate",
    "build_rate_report",
    "check_identifiability",
    "d_moment",
    "class_centroids",
    "classify_class",
]

DISTANCE_FLOOR = 1e-300


class NotAbsolutelyContinuousError(ValueError):
    """nu charges a state that beta does not."""


class ClassNotIrreducibleError(ValueError):
    """A communication class fails to be irreducible."""


class HorizonTooShortError(ValueError):
    """The observation record is too short for the requested block grid."""


# ---------------------------------------------------------------------------
# closed-form bounds
# ---------------------------------------------------------------------------

def bound_mu_row(Q: GeneratorMatrix) -> float:
    """Occupation-weighted worst-exit rate bound on the forgetting slope.

    Returns -sum_r mu_r * min_{i != r} lam_ri for an irreducible chain.
    Strictly negative exactly when some row has all off-diagonal rates
    positive; zero (vacuous) otherwise.
    """
    if Q.n == 1:
        return 0.0
    mu = invariant_measure(Q)
    a = Q.entries
    mins = np.empty(Q.n)
    for r in range(Q.n):
        row = np.delete(a[r], r)
        mins[r] = row.min()
    return float(-(mu * mins).sum())


def bound_geo(Q: GeneratorMatrix) -> float:
    """Symmetrized-rate bound: -2 min over pairs of sqrt(lam_pq lam_qp).

    Vacuous (zero) as soon as one direction of some pair is rate zero.
    """
    n = Q.n
    if n == 1:
        return 0.0
    a = Q.entries
    best = math.inf
    for p in range(n):
        for q in range(p + 1, n):
            best = min(best, a[p, q] * a[q, p])
    return -2.0 * math.sqrt(best)


def prefactors(nu, beta) -> tuple[float, float]:
    """Constants multiplying exp(bound_geo * t) in the mean-gap bounds.

    prefactor_a = n * sum_j nu_j / beta_j (0/0 := 0) requires nu
    absolutely continuous w.r.t. beta; prefactor_b = n^2 * max(nu/beta)
    * max(beta/nu) on the common support, +inf when the supports differ.
    """
    nu = as_distribution(nu, None, "nu")
    beta = as_distribution(beta, len(nu), "beta")
    n = len(nu)
    bad = (nu > 0) & (beta == 0)
    if np.any(bad):
        j = int(np.argmax(bad))
        raise NotAbsolutelyContinuousError(
            f"nu charges state {j} but beta does not")
    sup_b = beta > 0
    a = n * float((nu[sup_b] / beta[sup_b]).sum())
    if np.array_equal(nu > 0, sup_b):
        sup = sup_b
        b = n * n * float((nu[sup] / beta[sup]).max()) \
            * float((beta[sup] / nu[sup]).max())
    else:
        b = math.inf
    return a, b


# ---------------------------------------------------------------------------
# Monte Carlo exponent estimation
# ---------------------------------------------------------------------------

def simulate_increments(Q: GeneratorMatrix, model: ObservationModel, nu,
                        T: float, dt: float, trials: int, seed: int):
    """Observation increments for `trials` independent chains started from nu.

    Trial i uses the stream trial_rng(seed, i): first the path, then the
    observation noise. Returns (increments, initial_states) with shapes
    (trials, K) and (trials,).
    """
    check_seed(seed)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    K = int(round(T / dt))
    increments = np.empty((trials, K))
    init_states = np.empty(trials, dtype=np.int64)
    for i in range(trials):
        rng = trial_rng(seed, i)
        path = sample_path(Q, nu, T, rng)
        obs = synthesize_observations(path, model, dt, rng)
        increments[i] = obs.increments
        init_states[i] = path.states[0]
    return increments, init_states


@dataclass(frozen=True)
class LyapunovEstimate:
    """Log-slope of the filter gap, averaged over trials.

    exponent is the mean over trials of the least-squares slope of
    log ||pi^nu_t - pi^beta_t||_1 on the second half of the horizon;
    stderr is the standard error of that mean. degenerate marks the
    all-trials-truncated case (for instance nu = beta, where the gap is
    identically zero and the exponent is the -inf sentinel).
    distance_samples[i, s] is trial i's gap at sample_times[s].
    """

    exponent: float
    stderr: float
    slopes: NDArray[np.float64]
    trials: int
    trials_used: int
    T: float
    dt: float
    degenerate: bool
    sample_times: NDArray[np.float64]
    distance_samples: NDArray[np.float64]


def lyapunov_estimate(Q: GeneratorMatrix, model: ObservationModel, nu, beta,
                      T: float, dt: float, trials: int, seed: int,
                      floor: float = DISTANCE_FLOOR,
                      sample_times=()) -> LyapunovEstimate:
    """Estimate the forgetting exponent by regression on simulated gaps.

    Per trial: a chain path is sampled under nu, observations are
    generated from it, and two filters (started from nu and from beta)
    are run on the same increments. The log L1 gap is regressed on time
    over [T/2, T]; a trial is truncated at its first point below `floor`
    and dropped if fewer than five window points remain.

    sample_times, when given, must be grid-aligned times at which the
    per-trial gap values are recorded into distance_samples.
    """
    nu = as_distribution(nu, Q.n, "nu")
    beta = as_distribution(beta, Q.n, "beta")
    K = int(round(T / dt))
    if K < 2 or abs(K * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"dt {dt!r} does not divide horizon {T!r}")
    kernel = StepKernel.build(Q, model, dt)
    increments, _ = simulate_increments(Q, model, nu, T, dt, trials, seed)
    ell = pair_log_distances(nu, beta, increments, kernel)

    sample_times = np.asarray(list(sample_times), dtype=float)
    sample_idx = np.rint(sample_times / dt).astype(int)
    if sample_times.size and (np.any(np.abs(sample_idx * dt - sample_times) > 1e-9)
                              or np.any(sample_idx < 0) or np.any(sample_idx > K)):
        raise ValueError("sample_times must lie on the observation grid")
    samples = np.exp(ell[:, sample_idx]) if sample_times.size \
        else np.empty((trials, 0))

    k0 = int(math.ceil(K / 2))
    times = np.arange(k0, K + 1) * dt
    log_floor = math.log(floor)
    slopes = []
    for i in range(trials):
        y = ell[i, k0:]
        bad = ~np.isfinite(y) | (y < log_floor)
        cut = int(np.argmax(bad)) if bad.any() else y.shape[0]
        if cut < 5:
            continue
        slope = np.polyfit(times[:cut], y[:cut], 1)[0]
        slopes.append(float(slope))
    slopes = np.asarray(slopes)
    if slopes.size == 0:
        return LyapunovEstimate(exponent=-math.inf, stderr=math.nan,
                                slopes=_freeze(slopes), trials=trials,
                                trials_used=0, T=T, dt=dt, degenerate=True,
                                sample_times=_freeze(sample_times),
                                distance_samples=_freeze(samples))
    stderr = float(slopes.std(ddof=1) / math.sqrt(slopes.size)) \
        if slopes.size > 1 else math.inf
    return LyapunovEstimate(exponent=float(slopes.mean()), stderr=stderr,
                            slopes=_freeze(slopes), trials=trials,
                            trials_used=int(slopes.size), T=T, dt=dt,
                            degenerate=False,
                            sample_times=_freeze(sample_times),
                            distance_samples=_freeze(samples))


def lyapunov_sigma_sweep(Q: GeneratorMatrix, h, sigmas, nu, beta, T: float,
                         dt: float, trials: int, seed: int):
    """lyapunov_estimate across noise levels; no shape claim is made.

    Sweep entry s uses master seed `seed + s`. Returns a list of
    (sigma, LyapunovEstimate) pairs in the given order.
    """
    out = []
    for s, sigma in enumerate(sigmas):
        model = ObservationModel(h=np.asarray(h, dtype=float), sigma=float(sigma))
        out.append((float(sigma),
                    lyapunov_estimate(Q, model, nu, beta, T, dt, trials,
                                      seed=check_seed(seed) + s)))
    return out


@dataclass(frozen=True)
class ContractionEstimate:
    """Mean clipped log contraction coefficient of unit-window propagators."""

    estimate: float
    stderr: float
    n_blocks: int
    dt: float
    log_taus: NDArray[np.float64]


def contraction_rate(Q: GeneratorMatrix, model: ObservationModel, nu,
                     dt: float, n_blocks: int, seed: int) -> ContractionEstimate:
    """Estimate E[max(-1, log tau(J))] over unit observation windows.

    One chain path of horizon n_blocks is simulated (started from nu;
    pass the invariant law for the stationary regime), its observation
    record is split into unit windows, and each window's linear filter
    propagator is reduced to the clipped log of its contraction
    coefficient. The mean bounds the forgetting slope from above.
    """
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    mu_like = invariant_measure(Q) if nu is None else nu
    steps = int(round(1.0 / dt))
    if abs(steps * dt - 1.0) > 1e-9:
        raise ValueError(f"dt {dt!r} does not divide the unit window")
    rng = trial_rng(seed, 0)
    path = sample_path(Q, mu_like, float(n_blocks), rng)
    obs = synthesize_observations(path, model, dt, rng)
    log_taus = np.empty(n_blocks)
    for b in range(n_blocks):
        block = obs.slice_steps(b * steps, (b + 1) * steps)
        J = zakai_propagator(block, Q, model)
        log_taus[b] = max(-1.0, math.log(birkhoff_tau(J.matrix, J.log_scale)))
    stderr = float(log_taus.std(ddof=1) / math.sqrt(n_blocks)) \
        if n_blocks > 1 else 0.0
    return ContractionEstimate(estimate=float(log_taus.mean()), stderr=stderr,
                               n_blocks=n_blocks, dt=dt,
                               log_taus=_freeze(log_taus))


# ---------------------------------------------------------------------------
# combined report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateReport:
    """All rate diagnostics for one model and one (nu, beta) pair.

    Closed-form bounds are NaN when their hypotheses fail (reducible
    chain); prefactors are +inf when the absolute-continuity hypotheses
    fail. The exponent carries its trial count and horizon so the
    uncertainty is interpretable.
    """

    bound_mu_row: float
    bound_geo: float
    prefactor_a: float
    prefactor_b: float
    exponent: float
    exponent_stderr: float
    exponent_trials: int
    exponent_T: float
    contraction_estimate: float
    contraction_stderr: float
    contraction_blocks: int

    def fields(self):
        return [
            ("bound_mu_row", self.bound_mu_row),
            ("bound_geo", self.bound_geo),
            ("prefactor_a", self.prefactor_a),
            ("prefactor_b", self.prefactor_b),
            ("exponent", self.exponent),
            ("exponent_stderr", self.exponent_stderr),
            ("exponent_trials", self.exponent_trials),
            ("exponent_T", self.exponent_T),
            ("contraction_estimate", self.contraction_estimate),
            ("contraction_stderr", self.contraction_stderr),
            ("contraction_blocks", self.contraction_blocks),
        ]

    def to_text(self) -> str:
        lines = ["rate report"]
        lines += [f"  {name} = {value!r}" for name, value in self.fields()]
        return "\n".join(lines) + "\n"

    def to_csv(self, target) -> None:
        write_csv(target, ["field", "value"],
                  ((name, value) for name, value in self.fields()))


def build_rate_report(Q: GeneratorMatrix, model: ObservationModel, nu, beta,
                      T: float, dt: float, trials: int, n_blocks: int,
                      seed: int) -> RateReport:
    """Run every rate diagnostic on one model.

    The exponent estimate uses master seed `seed`; the contraction
    estimate uses `seed + 1` so the two experiments draw independent
    streams. Contraction starts from the invariant law.
    """
    try:
        b_row = bound_mu_row(Q)
    except NotIrreducibleError:
        b_row = math.nan
    b_geo = bound_geo(Q)
    try:
        pf_a, pf_b = prefactors(nu, beta)
    except NotAbsolutelyContinuousError:
        pf_a, pf_b = math.inf, math.inf
    est = lyapunov_estimate(Q, model, nu, beta, T, dt, trials, seed)
    try:
        con = contraction_rate(Q, model, None, dt, n_blocks, check_seed(seed) + 1)
        c_est, c_err, c_n = con.estimate, con.stderr, con.n_blocks
    except NotIrreducibleError:
        c_est, c_err, c_n = math.nan, math.nan, 0
    return RateReport(bound_mu_row=b_row, bound_geo=b_geo,
                      prefactor_a=pf_a, prefactor_b=pf_b,
                      exponent=est.exponent, exponent_stderr=est.stderr,
                      exponent_trials=est.trials, exponent_T=T,
                      contraction_estimate=c_est, contraction_stderr=c_err,
                      contraction_blocks=c_n)


# ---------------------------------------------------------------------------
# identifiability of closed classes
# ---------------------------------------------------------------------------

def _class_pieces(decomp: ClassDecomposition, model: ObservationModel):
    """Per class: (h restriction, generator, invariant law)."""
    pieces = []
    for k, members in enumerate(decomp.classes):
        h_c = model.h[members]
        try:
            Q_c = validate_generator(decomp.generators[k])
            mu_c = invariant_measure(Q_c)
        except (NotIrreducibleError, ValueError) as exc:
            raise ClassNotIrreducibleError(f"class {k} is not irreducible: {exc}") from exc
        pieces.append((h_c, Q_c, mu_c))
    return pieces


@dataclass(frozen=True)
class PairIdentifiability:
    """Separation diagnostics for one ordered pair of classes."""

    j: int
    k: int
    mean_sep: float
    moment_seps: tuple[float, ...]
    satisfied: bool


@dataclass(frozen=True)
class IdentifiabilityReport:
    """Pairwise separations and the overall identifiability verdict.

    A pair is satisfied when the long-run observation means differ
    beyond tol, or some moment h^T diag(mu) L^q h differs beyond tol for
    q up to n_j + n_k - 1. satisfied is the conjunction over pairs.
    """

    pairs: tuple[PairIdentifiability, ...]
    satisfied: bool
    tol: float

    def to_text(self) -> str:
        lines = [f"identifiability report (tol = {self.tol!r})"]
        for p in self.pairs:
            seps = ", ".join(repr(s) for s in p.moment_seps)
            lines.append(f"  pair ({p.j}, {p.k}): mean_sep = {p.mean_sep!r}; "
                         f"moment_seps = [{seps}]; satisfied = {p.satisfied}")
        lines.append(f"  overall satisfied = {self.satisfied}")
        return "\n".join(lines) + "\n"

    def to_csv(self, target) -> None:
        rows = []
        for p in self.pairs:
            for q, sep in enumerate(p.moment_seps):
                rows.append((p.j, p.k, p.mean_sep, q, sep, p.satisfied))
        write_csv(target, ["j", "k", "mean_sep", "q", "moment_sep", "satisfied"],
                  rows)


def check_identifiability(decomp: ClassDecomposition, model: ObservationModel,
                          tol: float = 1e-9) -> IdentifiabilityReport:
    """Check that every pair of classes is distinguishable from the data.

    For each ordered pair (j, k) the report records the separation of
    the long-run means h_j mu_j vs h_k mu_k and of the moment sequences
    h^T diag(mu) L^q h for q = 0 .. n_j + n_k - 1. Distinct classes that
    fail every separation produce satisfied = False for that pair.
    """
    pieces = _class_pieces(decomp, model)
    m = len(pieces)
    means = [float(h @ mu) for h, _, mu in pieces]
    sizes = [h.shape[0] for h, _, _ in pieces]
    max_q = (2 * max(sizes) - 1) if sizes else 0
    powers = []
    for h, Q_c, mu in pieces:
        L = Q_c.entries
        pw = [np.eye(len(h))]
        for _ in range(max_q):
            pw.append(pw[-1] @ L)
        powers.append(pw)

    def moment(c: int, q: int) -> float:
        h, _, mu = pieces[c]
        return float((mu * h) @ powers[c][q] @ h)

    pairs = []
    all_ok = True
    for j in range(m):
        for k in range(m):
            if j == k:
                continue
            q_hi = sizes[j] + sizes[k] - 1
            seps = tuple(abs(moment(j, q) - moment(k, q)) for q in range(q_hi + 1))
            mean_sep = abs(means[j] - means[k])
            ok = mean_sep > tol or any(s > tol for s in seps)
            if not ok:
                all_ok = False
            pairs.append(PairIdentifiability(j=j, k=k, mean_sep=mean_sep,
                                             moment_seps=seps, satisfied=ok))
    return IdentifiabilityReport(pairs=tuple(pairs), satisfied=all_ok, tol=tol)


# ---------------------------------------------------------------------------
# moment function d(r) and class identification
# ---------------------------------------------------------------------------

def _d_raw(Q: GeneratorMatrix, h, r: float, mu=None) -> float:
    """2 r^2 int_0^1 (1 - u) g(r u) du with g(v) = (mu h)^T exp(L v) h.

    Equals the second moment of int_0^r h(X_s) ds under the stationary
    law; the formula extends analytically to r < 0 (used by the
    derivative checks).
    """
    if mu is None:
        mu = invariant_measure(Q)
    h = np.asarray(h, dtype=float)
    L = Q.entries
    a = mu * h

    def g(u: float) -> float:
        return (1.0 - u) * float(a @ (expm(L * (r * u)) @ h))

    val, _ = quad(g, 0.0, 1.0, epsabs=1e-14, epsrel=1e-10, limit=100)
    return 2.0 * r * r * val


def d_moment(Q: GeneratorMatrix, h, r: float) -> float:
    """Stationary second moment of the integrated observation over [0, r].

    d(0) = d'(0) = 0 and d''(r) = 2 h^T diag(mu) exp(L r) h; the value is
    computed by adaptive quadrature of the collapsed double integral to
    relative accuracy 1e-8 or better.
    """
    if r < 0:
        raise ValueError(f"r must be >= 0, got {r!r}")
    if r == 0:
        return 0.0
    if np.asarray(h, dtype=float).shape[0] != Q.n:
        raise ValueError("h length does not match the class size")
    try:
        mu = invariant_measure(Q)
    except NotIrreducibleError as exc:
        raise NotIrreducibleError(f"moment function needs an irreducible class: {exc}") from exc
    return _d_raw(Q, h, r, mu)


def class_centroids(decomp: ClassDecomposition, model: ObservationModel,
                    r_grid) -> NDArray[np.float64]:
    """Theoretical statistics (mean, d(r_1), ..., d(r_l)) per class."""
    pieces = _class_pieces(decomp, model)
    r_grid = [float(r) for r in r_grid]
    out = np.empty((len(pieces), 1 + len(r_grid)))
    for c, (h_c, Q_c, mu_c) in enumerate(pieces):
        out[c, 0] = float(h_c @ mu_c)
        for s, r in enumerate(r_grid):
            out[c, 1 + s] = _d_raw(Q_c, h_c, r, mu_c)
    return out


@dataclass(frozen=True)
class ClassificationResult:
    """Nearest-centroid class decision with its evidence."""

    class_index: int
    stats: NDArray[np.float64]
    centroids: NDArray[np.float64]
    distances: NDArray[np.float64]


def classify_class(obs: ObservationPath, decomp: ClassDecomposition,
                   model: ObservationModel, r_grid, min_blocks: int = 50,
                   centroids=None) -> ClassificationResult:
    """Identify which closed class generated an observation record.

    The statistics vector is (Y_T / T, Z(r_1), ..., Z(r_l)) where Z(r)
    is the mean squared Y increment over consecutive blocks of length r
    minus the Brownian contribution r sigma^2; its theoretical value
    under class j is (h_j mu_j, d_j(r_1), ...). The class minimizing the
    Euclidean distance wins; ties break to the lowest index.

    centroids may be passed to reuse a precomputed class_centroids
    array across many records.
    """
    r_grid = [float(r) for r in r_grid]
    if min(r_grid, default=1.0) <= 0:
        raise ValueError("r_grid entries must be > 0")
    T = obs.horizon
    K = obs.n_steps
    stats = np.empty(1 + len(r_grid))
    stats[0] = float(obs.increments.sum()) / T
    for s, r in enumerate(r_grid):
        m = int(round(r / obs.dt))
        if m < 1 or abs(m * obs.dt - r) > 1e-9 * max(1.0, r):
            raise ValueError(f"block length {r!r} is not a multiple of dt")
        nb = K // m
        if nb < min_blocks:
            raise HorizonTooShortError(
                f"{nb} blocks of length {r!r} in horizon {T!r}; need {min_blocks}")
        blocks = obs.increments[:nb * m].reshape(nb, m).sum(axis=1)
        stats[1 + s] = float((blocks * blocks).mean()) - r * model.sigma ** 2
    if centroids is None:
        centroids = class_centroids(decomp, model, r_grid)
    diffs = centroids - stats[None, :]
    dists = np.sqrt((diffs * diffs).sum(axis=1))
    return ClassificationResult(class_index=int(np.argmin(dists)),
                                stats=_freeze(stats),
                                centroids=np.asarray(centroids, dtype=float),
                                distances=_freeze(dists))
