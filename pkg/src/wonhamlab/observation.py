"""Observation records for a hidden chain.

Two kinds are supported: noisy integrated observations on a regular grid,
Y increments = integral of h(X_s) ds over the cell + sigma * sqrt(dt) * N(0,1),
and the noise-free indicator record used by the cyclic model, which is a
pure jump process flipping whenever the chain enters or leaves a set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .csvio import write_csv
from .markov import ChainPath, _freeze

__all__ = [
    "ObservationModel",
    "ObservationPath",
    "JumpObservation",
    "synthesize_observations",
    "noiseless_indicator_observation",
]


@dataclass(frozen=True)
class ObservationModel:
    """Read map h per state and noise level sigma > 0."""

    h: NDArray[np.float64]
    sigma: float

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        if h.ndim != 1 or not np.all(np.isfinite(h)):
            raise ValueError("h must be a finite vector")
        if not (self.sigma > 0) or not np.isfinite(self.sigma):
            raise ValueError(f"sigma must be a positive number, got {self.sigma!r}")
        object.__setattr__(self, "h", _freeze(h))
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def n(self) -> int:
        return self.h.shape[0]


@dataclass(frozen=True)
class ObservationPath:
    """Grid increments of the observation process.

    increments[k] is Y((k+1) dt) - Y(k dt); the grid is regular with step
    dt and the horizon is n_steps * dt.
    """

    dt: float
    increments: NDArray[np.float64]

    def __post_init__(self):
        if not (self.dt > 0):
            raise ValueError(f"dt must be > 0, got {self.dt!r}")
        object.__setattr__(self, "increments",
                           _freeze(np.asarray(self.increments, dtype=float)))

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    def slice_steps(self, k0: int, k1: int) -> "ObservationPath":
        """Increments for grid steps k0..k1-1 as a new record."""
        return ObservationPath(dt=self.dt, increments=self.increments[k0:k1].copy())

    def cumulative(self) -> NDArray[np.float64]:
        """Y at the grid points, starting from Y(0) = 0."""
        return np.concatenate(([0.0], np.cumsum(self.increments)))

    def to_csv(self, target) -> None:
        rows = ((k, (k + 1) * self.dt, dy)
                for k, dy in enumerate(self.increments))
        write_csv(target, ["step", "t_end", "increment"], rows)


@dataclass(frozen=True)
class JumpObservation:
    """Noise-free 0/1 observation record: initial value plus flip times."""

    initial_value: int
    jump_times: NDArray[np.float64]
    horizon: float

    def __post_init__(self):
        if self.initial_value not in (0, 1):
            raise ValueError("initial_value must be 0 or 1")
        jt = np.asarray(self.jump_times, dtype=float)
        if jt.size and (np.any(np.diff(jt) <= 0) or jt[0] <= 0 or jt[-1] >= self.horizon):
            raise ValueError("jump times must be strictly increasing inside (0, horizon)")
        object.__setattr__(self, "jump_times", _freeze(jt))

    @property
    def n_jumps(self) -> int:
        return self.jump_times.shape[0]

    def value_at(self, t) -> np.ndarray:
        """Observed value at time t (vectorized); value flips at each jump."""
        flips = np.searchsorted(self.jump_times, t, side="right")
        return (self.initial_value + flips) % 2

    def to_csv(self, target) -> None:
        rows = ((j, tj, int((self.initial_value + j + 1) % 2))
                for j, tj in enumerate(self.jump_times))
        write_csv(target, ["jump", "time", "new_value"], rows)


def synthesize_observations(path: ChainPath, model: ObservationModel,
                            dt: float, rng: np.random.Generator) -> ObservationPath:
    """Generate grid observation increments for a sampled chain path.

    The signal part of each increment is the exact integral of h along
    the path over the cell; the noise part is sigma * sqrt(dt) * xi with
    iid standard normal xi drawn from rng.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt!r}")
    if model.n <= int(path.states.max()):
        raise ValueError("observation map shorter than the path's state range")
    K = int(round(path.horizon / dt))
    if K < 1 or abs(K * dt - path.horizon) > 1e-9 * max(1.0, path.horizon):
        raise ValueError(f"dt {dt!r} does not divide horizon {path.horizon!r}")
    signal = path.cell_integrals(model.h, dt, K)
    noise = model.sigma * np.sqrt(dt) * rng.standard_normal(K)
    return ObservationPath(dt=dt, increments=signal + noise)


def noiseless_indicator_observation(path: ChainPath, states) -> JumpObservation:
    """Exact record of 1{X_t in states} along a sampled path."""
    member = np.zeros(int(path.states.max()) + 1, dtype=bool)
    member[np.asarray(list(states), dtype=int)] = True
    vals = member[path.states].astype(np.int64)
    flips = np.flatnonzero(np.diff(vals) != 0)
    return JumpObservation(
        initial_value=int(vals[0]),
        jump_times=path.jump_times[flips].copy(),
        horizon=path.horizon,
    )
