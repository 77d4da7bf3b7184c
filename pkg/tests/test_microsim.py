import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from markov_multinomial import (
    CohortSpec,
    DimensionMismatchError,
    InsufficientReplicationsError,
    ReplicationSummary,
    StateSpace,
    TransitionSchedule,
    compare,
    four_state_example,
    moment_trajectory,
    replicate,
    simulate_cohort,
    simulate_replications,
)
from markov_multinomial.microsim import replication_rng


@pytest.fixture
def identity_spec():
    return CohortSpec(StateSpace(("a", "b", "c")), TransitionSchedule(np.eye(3)),
                      [4, 0, 7], horizon=6)


@pytest.fixture
def small_four_state():
    return four_state_example(n0=500, horizon=20)


def test_identity_schedule_counts_constant(identity_spec):
    counts = simulate_cohort(identity_spec, 3)
    assert_array_equal(counts, np.tile([4, 0, 7], (7, 1)))


def test_same_seed_same_output(small_four_state):
    assert_array_equal(simulate_cohort(small_four_state, 11), simulate_cohort(small_four_state, 11))
    assert not np.array_equal(simulate_cohort(small_four_state, 11),
                              simulate_cohort(small_four_state, 12))


@pytest.mark.parametrize("seed", range(5))
def test_absorbing_count_non_decreasing_and_closed(small_four_state, seed):
    counts = simulate_cohort(small_four_state, seed)
    assert np.all(np.diff(counts[:, 3]) >= 0)
    assert np.all(counts.sum(axis=1) == 500)


def test_paths_are_consistent_with_counts(small_four_state):
    P = small_four_state.schedule.matrices[0]
    counts, paths = simulate_cohort(small_four_state, 5, return_paths=True)
    assert paths.shape == (500, 21)
    assert np.all(paths[:, 0] == 0)
    for z in range(21):
        assert_array_equal(np.bincount(paths[:, z], minlength=4), counts[z])
    # every realized step has positive probability
    assert np.all(P[paths[:, :-1], paths[:, 1:]] > 0)
    # path retention does not perturb the random stream
    assert_array_equal(counts, simulate_cohort(small_four_state, 5))


def test_start_states_follow_label_order():
    spec = CohortSpec(StateSpace(("a", "b", "c")), TransitionSchedule(np.eye(3)), [2, 0, 3],
                      horizon=1)
    _, paths = simulate_cohort(spec, 0, return_paths=True)
    assert_array_equal(paths[:, 0], [0, 0, 2, 2, 2])


def test_zero_probability_targets_never_drawn():
    # tiny rounding in cumulative sums must not open a gap into a zero-probability state
    row = np.array([0.1] * 7 + [0.3, 0.0])
    P = np.vstack([row] + [np.eye(9)[k] for k in range(1, 9)])
    spec = CohortSpec(StateSpace(tuple("abcdefghi")), TransitionSchedule(P),
                      [20000] + [0] * 8, horizon=1)
    counts = simulate_cohort(spec, 1)
    assert counts[1, 8] == 0


def test_time_varying_schedule_in_simulation():
    swap = np.array([[0.0, 1.0], [1.0, 0.0]])
    sched = TransitionSchedule(np.stack([swap, np.eye(2), swap]), hold_last=False)
    spec = CohortSpec(StateSpace(("a", "b")), sched, [5, 2], horizon=3)
    assert_array_equal(simulate_cohort(spec, 0), [[5, 2], [2, 5], [2, 5], [5, 2]])


def test_replication_streams_are_index_addressed(small_four_state):
    stacked = simulate_replications(small_four_state, 4, master_seed=99)
    for i in range(4):
        assert_array_equal(stacked[i], simulate_cohort(small_four_state, replication_rng(99, i)))


def test_replicate_serial_equals_parallel(small_four_state):
    a = replicate(small_four_state, 6, master_seed=7, workers=1)
    b = replicate(small_four_state, 6, master_seed=7, workers=3)
    assert_array_equal(a.empirical_mean, b.empirical_mean)
    assert_array_equal(a.empirical_variance, b.empirical_variance)


def test_replicate_degenerate_has_zero_variance(identity_spec):
    summary = replicate(identity_spec, 2, master_seed=0)
    assert_array_equal(summary.empirical_variance, 0.0)
    assert_array_equal(summary.empirical_mean, np.tile([4, 0, 7], (7, 1)))


def test_replicate_needs_two(identity_spec):
    with pytest.raises(InsufficientReplicationsError):
        replicate(identity_spec, 1, master_seed=0)


def test_summary_uses_unbiased_variance(small_four_state):
    stacked = simulate_replications(small_four_state, 5, master_seed=3)
    summary = replicate(small_four_state, 5, master_seed=3)
    x = stacked[:, 2, 1].astype(float)
    assert summary.empirical_variance[2, 1] == pytest.approx(((x - x.mean()) ** 2).sum() / 4)
    assert_allclose(summary.empirical_mean.sum(axis=1), 500, rtol=1e-12)


# compare


def _noiseless(trajectory, r=1000):
    return ReplicationSummary(r, trajectory.mean.copy(), trajectory.variance, seed=0)


def test_compare_noiseless_summary_gives_zero_z():
    traj = moment_trajectory(four_state_example())
    report = compare(_noiseless(traj), traj)
    assert_array_equal(report.mean_z[~report.degenerate], 0.0)
    assert report.passed
    assert report.max_abs_z == 0.0


def test_compare_flags_perturbed_cell():
    traj = moment_trajectory(four_state_example())
    summary = _noiseless(traj)
    perturbed = moment_trajectory(four_state_example())
    perturbed.mean[1, 0] *= 1.10
    report = compare(summary, perturbed)
    expected_z = (7100 - 7810) / np.sqrt(2059 / 1000)
    assert report.mean_z[1, 0] == pytest.approx(expected_z, rel=1e-9)
    assert not report.z_ok[1, 0]
    assert not report.passed
    assert report.z_ok.sum() == report.z_ok.size - 1


def test_compare_degenerate_cell_requires_zero_variance():
    traj = moment_trajectory(four_state_example())
    evar = traj.variance
    evar[0, 1] = 0.5
    report = compare(ReplicationSummary(1000, traj.mean.copy(), evar), traj)
    assert report.degenerate[0, 1] and not report.degenerate_ok[0, 1]
    assert not report.passed


def test_compare_dimension_mismatch():
    traj = moment_trajectory(four_state_example(horizon=5))
    other = moment_trajectory(four_state_example(horizon=6))
    with pytest.raises(DimensionMismatchError):
        compare(_noiseless(other), traj)


def test_compare_degenerate_model_passes(identity_spec):
    report = compare(replicate(identity_spec, 2, master_seed=1), moment_trajectory(identity_spec))
    assert report.degenerate.all() and report.passed
    assert report.strict_fraction == 1.0


def test_mixed_starting_states_match_simulation():
    P = np.array([[0.6, 0.4], [0.25, 0.75]])
    spec = CohortSpec(StateSpace(("a", "b")), TransitionSchedule(P), [20, 10], horizon=3)
    report = compare(replicate(spec, 4000, master_seed=2024), moment_trajectory(spec),
                     variance_floor=1.0)
    assert report.checked[1:].all()
    assert report.passed, report.summary()
