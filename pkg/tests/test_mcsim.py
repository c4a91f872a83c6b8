"""Monte Carlo walker: trajectories, Gibbs weights, estimators."""

import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from wsaw1d.mcsim import (
    MCError,
    Trajectory,
    WeightedEstimate,
    _free_walk_batch,
    conditional_sample,
    estimate_concentration,
    estimate_conditional_moment,
    estimate_laplace_two_point,
    gibbs_weight,
    log_gibbs_weight,
    sample_trajectory,
)
from wsaw1d.model import ModelParams, PhiSpec

THETA_1 = 1.3949530897233466  # escape speed at g=1, from the spectral route


@given(seed=st.integers(0, 10_000), T=st.floats(0.1, 30.0))
@settings(max_examples=100, deadline=None)
def test_trajectory_invariants(seed, T):
    traj = sample_trajectory(seed, T)
    assert sum(traj.local_times.values()) == pytest.approx(T, rel=1e-12)
    steps = np.diff(np.concatenate([[traj.start], traj.positions]))
    assert np.all(np.isin(steps, (-1, 1)))
    if len(traj.jump_times):
        assert traj.jump_times[0] > 0
        assert traj.jump_times[-1] < T
        assert np.all(np.diff(traj.jump_times) > 0)
    assert traj.final_position == traj.start + int(steps.sum())


@given(seed=st.integers(0, 10_000), T=st.floats(0.1, 30.0), box=st.integers(0, 3))
@settings(max_examples=100, deadline=None)
def test_trajectory_box_confinement(seed, T, box):
    traj = sample_trajectory(seed, T, box=box)
    assert all(abs(x) <= box for x in traj.local_times)
    if len(traj.positions):
        assert np.max(np.abs(traj.positions)) <= box


def test_trajectory_tiny_T_stays_home():
    traj = sample_trajectory(0, 1e-6)
    assert len(traj.jump_times) == 0
    assert traj.local_times == {0: 1e-6}
    assert traj.final_position == 0


def test_trajectory_single_site_box():
    traj = sample_trajectory(7, 12.5, box=0)
    assert traj.local_times == {0: 12.5}
    assert len(traj.positions) == 0


def test_trajectory_validation():
    with pytest.raises(ValueError):
        sample_trajectory(0, 0.0)
    with pytest.raises(ValueError):
        sample_trajectory(0, 1.0, start=3, box=2)
    with pytest.raises(ValueError):
        sample_trajectory(0, 1.0, box=-1)


def test_jump_count_matches_poisson_rate():
    # rate-2 total jump intensity: mean count over 10^4 paths at T=10 must
    # sit within 3 sigma of 20
    T, m = 10.0, 10_000
    counts = [len(sample_trajectory(seed, T).jump_times) for seed in range(m)]
    assert np.mean(counts) == pytest.approx(2.0 * T, abs=3.0 * math.sqrt(2.0 * T / m))


def test_gibbs_weight_trivials():
    traj = sample_trajectory(3, 8.0)
    assert log_gibbs_weight(traj, 0.0) == 0.0
    assert gibbs_weight(traj, 0.0) == 1.0
    stuck = sample_trajectory(0, 4.0, box=0)
    assert log_gibbs_weight(stuck, 0.5) == pytest.approx(-0.5 * 16.0, rel=1e-12)
    with pytest.raises(ValueError):
        log_gibbs_weight(traj, -1.0)


def test_gibbs_weight_manual_two_site_path():
    traj = Trajectory(
        T=5.0,
        start=0,
        jump_times=np.array([2.0]),
        positions=np.array([1]),
        local_times={0: 2.0, 1: 3.0},
    )
    assert log_gibbs_weight(traj, 1.0) == pytest.approx(-(4.0 + 9.0), rel=1e-14)
    cubic = PhiSpec(terms=((3, 1.0),))
    assert log_gibbs_weight(traj, 2.0, phi=cubic) == pytest.approx(
        -2.0 * (8.0 + 27.0), rel=1e-14
    )


def test_free_walk_batch_agrees_with_reference_sampler():
    # the vectorized order-statistics sampler against the scalar Gillespie
    # one, on displacement mean and Gibbs exponent mean
    T, m = 4.0, 4000
    phi = PhiSpec.quadratic()
    rng = np.random.default_rng(42)
    x_b, sp_b = _free_walk_batch(rng, m, T, 1.0, 1.0, phi)

    sp_r = np.empty(m)
    x_r = np.empty(m)
    for s in range(m):
        traj = sample_trajectory(10_000 + s, T)
        x_r[s] = traj.final_position
        sp_r[s] = sum(ell**2 for ell in traj.local_times.values())

    for batch, ref in ((x_b, x_r), (sp_b, sp_r)):
        se = math.sqrt(np.var(batch) / m + np.var(ref) / m)
        assert abs(np.mean(batch) - np.mean(ref)) <= 3.0 * se
    # displacement is symmetric: both means near zero on their own scale
    assert abs(np.mean(x_b)) <= 3.0 * math.sqrt(np.var(x_b) / m)


def test_conditional_sample_structure():
    p = ModelParams(g=1.0, nu=0.0)
    x, w, n_eff, n_cond = conditional_sample(p, 5.0, 4000, 11, THETA_1, 2000)
    assert np.all(x > 0)
    assert w.shape == x.shape
    assert float(w.sum()) == pytest.approx(1.0, rel=1e-12)
    assert np.all(w >= 0)
    assert 1.0 <= n_eff <= n_cond <= 4000


def test_conditional_sample_deterministic():
    p = ModelParams(g=1.0, nu=0.0)
    a = conditional_sample(p, 5.0, 2000, 11, THETA_1, 1000)
    b = conditional_sample(p, 5.0, 2000, 11, THETA_1, 1000)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    c = conditional_sample(p, 5.0, 2000, 12, THETA_1, 1000)
    assert not np.array_equal(a[0], c[0])


def test_conditional_sample_no_survivors():
    # a hard negative tilt pushes every path left; with 20 samples the
    # conditioning event is unreachable
    p = ModelParams(g=1.0, nu=0.0)
    with pytest.raises(MCError):
        conditional_sample(p, 20.0, 20, 0, -4.0, 20)


def test_conditional_moment_free_walk_skellam_oracle():
    # g=0 the displacement is Skellam(T, T); condition on X > 0 and compare
    # the exact conditional mean with the estimator
    T = 6.0
    ks = np.arange(1, 400)
    pmf = scipy.stats.skellam.pmf(ks, T, T)
    want = float((ks * pmf).sum() / pmf.sum())
    est = estimate_conditional_moment(ModelParams(g=0.0, nu=0.0), T, 1, 20_000, seed=3)
    assert T * est.value == pytest.approx(want, abs=3.0 * T * est.std_error)
    assert not est.low_confidence


def test_moment_ratio_concentrates_with_T():
    # E[X^2]/E[X]^2 -> 1 as T grows: the conditioned walk settles onto a
    # deterministic speed
    p = ModelParams(g=1.0, nu=0.0)
    ratios = {}
    for T in (10.0, 30.0):
        m1 = estimate_conditional_moment(p, T, 1, 20_000, seed=5, tilt_speed=THETA_1)
        m2 = estimate_conditional_moment(p, T, 2, 20_000, seed=6, tilt_speed=THETA_1)
        ratios[T] = m2.value / m1.value**2
    assert 1.0 < ratios[30.0] < ratios[10.0]
    assert ratios[30.0] < 1.05


def test_conditional_moment_validation():
    p = ModelParams(g=1.0, nu=0.0)
    with pytest.raises(ValueError):
        estimate_conditional_moment(p, 5.0, 0, 100)
    with pytest.raises(ValueError):
        estimate_conditional_moment(p, -1.0, 1, 100)


def test_concentration_is_a_probability():
    p = ModelParams(g=1.0, nu=0.0)
    est = estimate_concentration(p, 10.0, THETA_1, 0.1, 5000, seed=8, tilt_speed=THETA_1)
    assert 0.0 <= est.value <= 1.0
    assert est.std_error >= 0.0
    with pytest.raises(ValueError):
        estimate_concentration(p, 10.0, THETA_1, 0.0, 100)


def test_laplace_free_walk_matrix_oracle():
    # g=0 the box-walk Laplace transform is ((nu - L)^{-1})_{ij} for the
    # tridiagonal box generator; three entries, three independent seeds
    nu, N = 0.7, 3
    n = 2 * N + 1
    L = np.zeros((n, n))
    for a in range(n):
        for b in (a - 1, a + 1):
            if 0 <= b < n:
                L[a, b] = 1.0
                L[a, a] -= 1.0
    R = np.linalg.inv(nu * np.eye(n) - L)
    p = ModelParams(g=0.0, nu=nu)
    for i, j in ((0, 0), (0, 1), (-3, -3)):
        est = estimate_laplace_two_point(p, N, i, j, 40_000, seed=1)
        assert est.value == pytest.approx(R[i + N, j + N], abs=3.0 * est.std_error)


def test_laplace_interacting_point_is_positive():
    est = estimate_laplace_two_point(ModelParams(g=1.0, nu=0.5), 2, 0, 0, 20_000, seed=2)
    assert est.value > 0
    assert est.std_error > 0
    assert est.n_conditioned > 0
    assert est.seed == 2


def test_laplace_deterministic():
    p = ModelParams(g=1.0, nu=0.5)
    a = estimate_laplace_two_point(p, 2, 0, 1, 5000, seed=9)
    b = estimate_laplace_two_point(p, 2, 0, 1, 5000, seed=9)
    assert a.value == b.value
    assert a.std_error == b.std_error


def test_laplace_validation():
    p = ModelParams(g=1.0, nu=0.5)
    with pytest.raises(ValueError):
        estimate_laplace_two_point(ModelParams(g=1.0, nu=0.0), 2, 0, 0, 100)
    with pytest.raises(ValueError):
        estimate_laplace_two_point(p, 2, 0, 3, 100)
    with pytest.raises(ValueError):
        estimate_laplace_two_point(p, 2, 0, 0, 1)


def test_weighted_estimate_low_confidence_flag():
    lo = WeightedEstimate(value=1.0, std_error=0.1, n_samples=100, n_effective=10.0)
    hi = WeightedEstimate(value=1.0, std_error=0.1, n_samples=100, n_effective=100.0)
    assert lo.low_confidence
    assert not hi.low_confidence
