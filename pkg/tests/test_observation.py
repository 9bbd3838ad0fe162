"""Observation synthesis against hand-built paths and known statistics."""

import io

import numpy as np
import pytest

from wonhamlab import (ChainPath, JumpObservation, ObservationModel,
                       ObservationPath, noiseless_indicator_observation,
                       synthesize_observations, trial_rng, validate_generator,
                       sample_path)


def two_state_path():
    return ChainPath(states=np.array([0, 1, 0]),
                     jump_times=np.array([1.0, 2.5]), horizon=4.0)


def test_model_validation():
    with pytest.raises(ValueError):
        ObservationModel(h=np.array([0.0, 1.0]), sigma=0.0)
    with pytest.raises(ValueError):
        ObservationModel(h=np.array([0.0, 1.0]), sigma=-1.0)
    with pytest.raises(ValueError):
        ObservationModel(h=np.array([0.0, np.nan]), sigma=1.0)
    m = ObservationModel(h=np.array([0.0, 1.0]), sigma=2.0)
    assert not m.h.flags.writeable


def test_increments_are_signal_plus_scaled_noise():
    # with sigma tiny the increments reduce to the exact cell integrals
    path = two_state_path()
    model = ObservationModel(h=np.array([2.0, -1.0]), sigma=1e-12)
    obs = synthesize_observations(path, model, 0.5, trial_rng(0, 0))
    cells = path.cell_integrals(np.array([2.0, -1.0]), 0.5, 8)
    assert obs.n_steps == 8
    assert np.abs(obs.increments - cells).max() <= 1e-10


def test_noise_statistics():
    # pure-noise observation: h = 0, so increments are N(0, sigma^2 dt)
    path = ChainPath(states=np.array([0]), jump_times=np.array([]),
                     horizon=100.0)
    model = ObservationModel(h=np.array([0.0]), sigma=0.5)
    obs = synthesize_observations(path, model, 0.01, trial_rng(1, 0))
    z = obs.increments / (0.5 * np.sqrt(0.01))
    assert abs(z.mean()) <= 4 / np.sqrt(z.size)
    assert abs(z.std() - 1.0) <= 4 / np.sqrt(2 * z.size)


def test_dt_must_divide_horizon():
    path = two_state_path()
    model = ObservationModel(h=np.array([0.0, 1.0]), sigma=1.0)
    with pytest.raises(ValueError):
        synthesize_observations(path, model, 0.3, trial_rng(0, 0))


def test_cumulative_and_slices():
    inc = np.array([0.5, -0.25, 1.0, 0.0])
    obs = ObservationPath(dt=0.5, increments=inc)
    assert obs.horizon == 2.0
    cum = obs.cumulative()
    assert np.allclose(cum, [0.0, 0.5, 0.25, 1.25, 1.25])
    part = obs.slice_steps(1, 3)
    assert part.dt == 0.5
    assert np.array_equal(part.increments, inc[1:3])


def test_observation_csv_round_numbers():
    obs = ObservationPath(dt=0.5, increments=np.array([0.5, -0.25]))
    buf = io.StringIO()
    obs.to_csv(buf)
    lines = buf.getvalue().strip().split("\n")
    assert lines[0] == "step,t_end,increment"
    assert lines[1] == "0,0.5,0.5"
    assert lines[2] == "1,1.0,-0.25"


def test_jump_observation_value_at():
    jo = JumpObservation(initial_value=1, jump_times=np.array([1.0, 3.0]),
                         horizon=5.0)
    ts = np.array([0.0, 0.5, 1.0, 2.0, 3.0, 4.5])
    assert np.array_equal(jo.value_at(ts), [1, 1, 0, 0, 1, 1])


def test_noiseless_indicator_from_hand_path():
    # states 0 -> 1 -> 2 with indicator on {0, 2}: reading 1, 0, 1
    path = ChainPath(states=np.array([0, 1, 2]),
                     jump_times=np.array([1.0, 2.0]), horizon=3.0)
    jo = noiseless_indicator_observation(path, (0, 2))
    assert jo.initial_value == 1
    assert np.array_equal(jo.jump_times, [1.0, 2.0])
    # a move inside the indicator set produces no observation jump
    path2 = ChainPath(states=np.array([0, 2, 1]),
                      jump_times=np.array([1.0, 2.0]), horizon=3.0)
    jo2 = noiseless_indicator_observation(path2, (0, 2))
    assert jo2.initial_value == 1
    assert np.array_equal(jo2.jump_times, [2.0])


def test_indicator_matches_sampled_cycle_parity():
    Q = validate_generator([[-1.0, 1.0, 0.0, 0.0], [0.0, -1.0, 1.0, 0.0],
                            [0.0, 0.0, -1.0, 1.0], [1.0, 0.0, 0.0, -1.0]])
    path = sample_path(Q, [0.25] * 4, 30.0, trial_rng(2, 0))
    jo = noiseless_indicator_observation(path, (0, 2))
    ts = np.linspace(0.1, 29.9, 57)
    states = path.state_at(ts)
    vals = jo.value_at(ts)
    assert np.array_equal(vals, np.isin(states, (0, 2)).astype(np.int64))
    # on the 4-cycle every chain jump flips the indicator
    assert jo.jump_times.shape[0] == path.n_jumps
