"""Filter recursion, pair-distance recursion, propagators, smoother."""

import numpy as np
import pytest
from numpy.linalg import matrix_power

from wonhamlab import (DegenerateMassError, ObservationModel, ObservationPath,
                       StateSpaceTooLargeError, StepKernel, augmented_filter,
                       batch_time_average, filter_step_batch, l1_distance,
                       pair_log_distances, run_filter, run_smoother,
                       sample_path, synthesize_observations, transition_matrix,
                       trial_rng, validate_generator, wonham_step,
                       zakai_propagator)

SYM2 = validate_generator([[-1.0, 1.0], [1.0, -1.0]])
SYM3 = validate_generator([[-2.0, 1.0, 1.0], [1.0, -2.0, 1.0],
                           [1.0, 1.0, -2.0]])
MODEL2 = ObservationModel(h=np.array([0.0, 1.0]), sigma=1.0)
MODEL3 = ObservationModel(h=np.array([0.0, 1.0, 2.0]), sigma=1.0)
# smoother-oracle comparisons use a gentler model: the Euler constant of
# the smoother step stays well under the 1e-3 checking tolerance
GENTLE3 = validate_generator([[-1.0, 0.5, 0.5], [0.5, -1.0, 0.5],
                              [0.5, 0.5, -1.0]])
GENTLE_MODEL = ObservationModel(h=np.array([0.0, 0.5, 1.0]), sigma=1.0)


def make_obs(Q, model, T, dt, seed, nu=None):
    rng = trial_rng(seed, 0)
    n = Q.n
    nu = np.full(n, 1.0 / n) if nu is None else np.asarray(nu, dtype=float)
    path = sample_path(Q, nu, T, rng)
    return synthesize_observations(path, model, dt, rng)


def test_step_is_bayes_rule_by_hand():
    dt = 0.25
    kernel = StepKernel.build(SYM2, MODEL2, dt)
    pi = np.array([0.3, 0.7])
    dY = 0.4
    post, logm = wonham_step(pi, dY, dt, SYM2, MODEL2)
    P = transition_matrix(SYM2, dt)
    pred = pi @ P
    lik = np.exp(MODEL2.h * dY / MODEL2.sigma ** 2
                 - MODEL2.h ** 2 * dt / (2 * MODEL2.sigma ** 2))
    expected = pred * lik / (pred * lik).sum()
    assert np.abs(post - expected).max() <= 1e-14
    assert logm == pytest.approx(np.log((pred * lik).sum()), abs=1e-12)
    assert kernel.P.shape == (2, 2)


def test_filter_reduces_to_prediction_without_signal():
    # h = 0 carries no information: the filter is the forward marginal
    Q = SYM3
    model = ObservationModel(h=np.zeros(3), sigma=1.0)
    obs = make_obs(Q, model, 2.0, 1e-2, seed=0)
    traj = run_filter([1.0, 0.0, 0.0], obs, Q, model)
    P = transition_matrix(Q, 1e-2)
    for k in (0, 1, 7, 200):
        marg = np.array([1.0, 0.0, 0.0]) @ matrix_power(P, k)
        assert np.abs(traj.pis[k] - marg).max() <= 1e-12
    assert np.abs(traj.log_mass).max() <= 1e-12


def test_filter_conserves_mass_and_positivity():
    obs = make_obs(SYM3, MODEL3, 5.0, 1e-3, seed=1)
    traj = run_filter([0.2, 0.5, 0.3], obs, SYM3, MODEL3)
    assert np.abs(traj.pis.sum(axis=1) - 1.0).max() <= 1e-12
    assert traj.pis.min() >= 0.0
    assert np.all(np.isfinite(traj.log_mass))


def test_filter_grid_refinement_first_order():
    # halving dt roughly halves the sup discretization error; pointwise
    # ratios wobble, so check the mean slope over an 8x step range
    Q, model = SYM3, MODEL3
    init = np.array([0.6, 0.3, 0.1])
    overall = []
    for seed in (2, 3, 4):
        rng = trial_rng(seed, 0)
        path = sample_path(Q, [1 / 3] * 3, 1.0, rng)
        fine = synthesize_observations(path, model, 1.0 / 1024, rng)
        ref = run_filter(init, fine, Q, model).pis

        def sup_at(step_mult):
            inc = fine.increments.reshape(-1, step_mult).sum(axis=1)
            obs = ObservationPath(dt=fine.dt * step_mult, increments=inc)
            pis = run_filter(init, obs, Q, model).pis
            return np.abs(pis - ref[::step_mult]).max()

        e2, e16 = sup_at(2), sup_at(16)
        assert e16 > e2
        ratio = (e16 / e2) ** (1.0 / 3.0)  # per-halving error growth
        assert 1.3 <= ratio <= 3.2
        overall.append(ratio)
    assert 1.6 <= np.mean(overall) <= 2.8


def test_degenerate_mass_raises():
    # frozen chain, huge observation spread: the off weight underflows
    Q0 = validate_generator([[0.0, 0.0], [0.0, 0.0]])
    model = ObservationModel(h=np.array([0.0, 1e4]), sigma=1.0)
    kernel = StepKernel.build(Q0, model, 1.0)
    pis = np.array([[1.0, 0.0]])
    with pytest.raises(DegenerateMassError):
        filter_step_batch(pis, np.array([6000.0]), kernel)


def test_pair_distances_match_direct_subtraction():
    Q, model = SYM2, MODEL2
    dt = 1e-3
    kernel = StepKernel.build(Q, model, dt)
    obs = make_obs(Q, model, 3.0, dt, seed=3, nu=[1.0, 0.0])
    inc = obs.increments[None, :]
    ell = pair_log_distances([1.0, 0.0], [0.5, 0.5], inc, kernel)[0]
    a = run_filter([1.0, 0.0], obs, Q, model).pis
    b = run_filter([0.5, 0.5], obs, Q, model).pis
    direct = np.abs(a - b).sum(axis=1)
    keep = direct > 1e-11  # below that, direct subtraction is pure noise
    assert keep[:500].all()
    rel = np.abs(np.exp(ell[keep]) - direct[keep]) / direct[keep]
    assert rel.max() <= 1e-8


def test_pair_distances_survive_deep_decay():
    Q, model = SYM2, MODEL2
    dt = 1e-3
    kernel = StepKernel.build(Q, model, dt)
    obs = make_obs(Q, model, 40.0, dt, seed=4, nu=[1.0, 0.0])
    ell = pair_log_distances([1.0, 0.0], [0.5, 0.5], obs.increments[None, :],
                             kernel)[0]
    assert np.all(np.isfinite(ell))
    # forgetting at rate about -2: far below the 1e-16 subtraction floor
    assert ell[-1] < -60.0
    assert ell[-1] > -120.0


def test_pair_distances_zero_for_equal_laws():
    kernel = StepKernel.build(SYM2, MODEL2, 1e-2)
    inc = np.zeros((2, 50))
    ell = pair_log_distances([0.5, 0.5], [0.5, 0.5], inc, kernel)
    assert np.all(np.isinf(ell)) and np.all(ell < 0)


def test_pair_distances_batched_rows_independent():
    kernel = StepKernel.build(SYM2, MODEL2, 1e-2)
    rng = np.random.default_rng(5)
    inc = rng.normal(0.0, 0.1, size=(3, 80))
    both = pair_log_distances([1.0, 0.0], [0.25, 0.75], inc, kernel)
    single = pair_log_distances([1.0, 0.0], [0.25, 0.75], inc[1:2], kernel)
    assert np.array_equal(both[1], single[0])


def test_batch_time_average_matches_filter_trajectory():
    Q, model = SYM3, MODEL3
    dt = 1e-2
    kernel = StepKernel.build(Q, model, dt)
    obs = make_obs(Q, model, 2.0, dt, seed=6)
    init = np.array([0.5, 0.25, 0.25])
    avg = batch_time_average(init, obs.increments[None, :], kernel)[0]
    traj = run_filter(init, obs, Q, model)
    assert np.abs(avg - traj.pis[:-1].mean(axis=0)).max() <= 1e-13


def test_zakai_factorization_and_positivity():
    Q, model = SYM3, MODEL3
    dt = 1e-3
    obs = make_obs(Q, model, 2.0, dt, seed=7)
    steps = obs.n_steps
    whole = zakai_propagator(obs, Q, model)
    first = zakai_propagator(obs.slice_steps(0, steps // 2), Q, model)
    second = zakai_propagator(obs.slice_steps(steps // 2, steps), Q, model)
    composed = second.compose(first)
    lhs = whole.matrix * np.exp(whole.log_scale - composed.log_scale)
    assert np.abs(lhs - composed.matrix).max() <= 1e-8 * composed.matrix.max()
    assert whole.matrix.min() > 0.0


def test_zakai_linearity_reproduces_filter():
    Q, model = SYM3, MODEL3
    obs = make_obs(Q, model, 1.0, 1e-3, seed=8)
    J = zakai_propagator(obs, Q, model)
    for init in ([1.0, 0.0, 0.0], [0.1, 0.2, 0.7]):
        final = run_filter(init, obs, Q, model).final
        lin = J.apply_normalized(np.asarray(init))
        assert np.abs(final - lin).max() <= 1e-13


def test_zakai_mass_tracks_filter_log_mass():
    Q, model = SYM2, MODEL2
    obs = make_obs(Q, model, 1.0, 1e-3, seed=9)
    init = np.array([0.4, 0.6])
    traj = run_filter(init, obs, Q, model)
    J = zakai_propagator(obs, Q, model)
    total = np.log((J.matrix @ init).sum()) + J.log_scale
    assert total == pytest.approx(traj.log_mass[-1], abs=1e-10)


def test_smoother_columns_and_contraction():
    Q, model = SYM3, MODEL3
    obs = make_obs(Q, model, 3.0, 1e-3, seed=10)
    run = run_smoother(obs, Q, model, [1 / 3] * 3)
    sums = run.rhos.sum(axis=1)
    assert np.abs(sums - 1.0).max() <= 1e-9
    deltas = run.deltas
    assert np.all(np.diff(deltas) <= 1e-6)
    assert deltas[0] == pytest.approx(1.0)
    # all rates are 1: row-spread shrinks at least like exp(-2t)
    times = np.arange(deltas.shape[0]) * 1e-3
    assert np.all(deltas <= np.exp(-2.0 * times) + 1e-3)


def test_smoother_point_mass_init_stays_proper():
    # pi_0 = delta_0 floors the denominator of column 1; the capped step
    # must land that column on its relaxation limit (X jumped from 0)
    # instead of overshooting to entries of size dt/floor.
    Q, model = SYM2, MODEL2
    obs = make_obs(Q, model, 2.0, 1e-2, seed=9)
    run = run_smoother(obs, Q, model, [1.0, 0.0])
    assert np.allclose(run.rhos[1], [[1.0, 1.0], [0.0, 0.0]])
    assert run.rhos.min() >= -1e-12
    assert run.rhos.max() <= 1.0 + 1e-12
    assert np.abs(run.rhos.sum(axis=1) - 1.0).max() <= 1e-9
    assert np.all(np.diff(run.deltas) <= 1e-6)
    assert 0.0 < run.floor_fraction < 0.1
    assert not run.floor_dominated


def test_smoother_matches_augmented_oracle():
    Q, model = GENTLE3, GENTLE_MODEL
    obs = make_obs(Q, model, 2.0, 1e-3, seed=11)
    init = np.array([0.5, 0.3, 0.2])
    run = run_smoother(obs, Q, model, init)
    aug = augmented_filter(init, obs, Q, model)
    sup = 0.0
    for k in range(0, obs.n_steps + 1, 40):
        sup = max(sup, np.abs(run.rhos[k] - aug.conditional_initial(k)).max())
    assert sup <= 1e-3
    post = run.initial_posterior(obs.n_steps)
    assert np.abs(post - aug.initial_posteriors()[-1]).max() <= 1e-3


def test_augmented_marginals_match_plain_filter():
    Q, model = SYM3, MODEL3
    obs = make_obs(Q, model, 1.0, 1e-3, seed=12)
    init = np.array([0.2, 0.2, 0.6])
    aug = augmented_filter(init, obs, Q, model)
    traj = run_filter(init, obs, Q, model)
    assert np.abs(aug.marginals() - traj.pis).max() <= 1e-11
    assert np.abs(aug.log_mass - traj.log_mass).max() <= 1e-10
    rho0 = aug.conditional_initial(0)
    assert np.abs(rho0 - np.eye(3)).max() <= 1e-12


def test_augmented_state_count_cap():
    n = 60  # the pair chain would need 3600 states
    rng = np.random.default_rng(13)
    a = rng.uniform(0.1, 1.0, size=(n, n))
    np.fill_diagonal(a, 0.0)
    np.fill_diagonal(a, -a.sum(axis=1))
    Q = validate_generator(a)
    model = ObservationModel(h=np.arange(n, dtype=float), sigma=1.0)
    obs = ObservationPath(dt=0.1, increments=np.zeros(5))
    with pytest.raises(StateSpaceTooLargeError):
        augmented_filter(np.full(n, 1 / n), obs, Q, model)


def test_smoother_floor_flag():
    Q, model = SYM3, MODEL3
    obs = make_obs(Q, model, 0.5, 1e-2, seed=14)
    # an absurd floor binds on every step and trips the dominance flag
    run = run_smoother(obs, Q, model, [1 / 3] * 3, floor=0.5)
    assert run.floor_fraction > 0.1
    assert run.floor_dominated
    normal = run_smoother(obs, Q, model, [1 / 3] * 3)
    assert normal.floor_fraction == 0.0
    assert not normal.floor_dominated


def test_filter_csv_shape():
    import io
    Q, model = SYM2, MODEL2
    obs = make_obs(Q, model, 0.1, 1e-2, seed=15)
    traj = run_filter([0.5, 0.5], obs, Q, model)
    buf = io.StringIO()
    traj.to_csv(buf)
    lines = buf.getvalue().strip().split("\n")
    assert lines[0] == "t,pi_0,pi_1,log_mass"
    assert len(lines) == obs.n_steps + 2
