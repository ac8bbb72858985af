import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from logbbm.checks import discrete_ks
from logbbm.errors import PopulationCapError
from logbbm.lbprocess import (LBParams, log_stationary_pmf, sample_stationary, simulate_lb_chain,
                              stationary_mean, stationary_pmf, stationary_pmf_array,
                              stationary_support_bound, transition_rates)

# values frozen from an independent 30-digit mpmath evaluation of the
# zero-truncated Poisson(1/c) law
PMF_C1_K1 = 0.581976706869326424
PMF_CHALF_K2 = 0.313035285499331304
MEAN_CHALF = 2.31303528549933130
MEAN_C1 = 1.58197670686932642


def test_pmf_oracle_values():
    assert stationary_pmf(1.0, 1) == pytest.approx(PMF_C1_K1, rel=1e-13)
    assert stationary_pmf(0.5, 2) == pytest.approx(PMF_CHALF_K2, rel=1e-13)


def test_mean_oracle_values():
    assert stationary_mean(0.5) == pytest.approx(MEAN_CHALF, rel=1e-13)
    assert stationary_mean(1.0) == pytest.approx(MEAN_C1, rel=1e-13)


@pytest.mark.parametrize("c", [0.01, 0.1, 0.5, 1.0, 5.0, 100.0])
def test_pmf_normalized(c):
    p = stationary_pmf_array(c, stationary_support_bound(c))
    assert p.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("c", [0.1, 0.5, 1.0, 5.0])
def test_mean_equals_weighted_sum(c):
    kmax = stationary_support_bound(c)
    p = stationary_pmf_array(c, kmax)
    assert abs(stationary_mean(c) - np.dot(np.arange(1, kmax + 1), p)) < 1e-10


def test_log_pmf_handles_large_k():
    # k! overflows doubles near 171; the log form must stay finite
    v = log_stationary_pmf(0.005, 400)
    assert math.isfinite(v)
    assert stationary_pmf_array(0.005, 400)[-1] == pytest.approx(math.exp(v), rel=1e-9)


def test_pmf_array_matches_scalar():
    arr = stationary_pmf_array(0.3, 20)
    assert np.allclose(arr, [stationary_pmf(0.3, k) for k in range(1, 21)], rtol=1e-12)


def test_transition_rates():
    p = LBParams(0.5)
    assert transition_rates(1, p) == (1.0, 0.0)
    assert transition_rates(3, p) == (3.0, 3.0)
    assert transition_rates(4, LBParams(0.0)) == (4.0, 0.0)
    with pytest.raises(ValueError):
        transition_rates(0, p)


@pytest.mark.parametrize("bad", [-1.0, float("nan"), float("inf")])
def test_invalid_rates_rejected(bad):
    with pytest.raises(ValueError):
        LBParams(bad)


def test_stationary_functions_need_positive_c():
    with pytest.raises(ValueError):
        stationary_mean(0.0)
    with pytest.raises(ValueError):
        stationary_pmf(1.0, 0)


def test_sampler_matches_pmf():
    draws = sample_stationary(1.0, np.random.default_rng(11), size=100_000)
    assert draws.min() >= 1
    kmax = int(draws.max())
    emp = np.bincount(draws, minlength=kmax + 1)[1:] / draws.size
    tv = 0.5 * np.abs(emp - stationary_pmf_array(1.0, kmax)).sum()
    tv += 0.5 * (1.0 - stationary_pmf_array(1.0, kmax).sum())
    assert tv < 0.005


def test_sampler_scalar_and_large_c():
    assert isinstance(sample_stationary(2.0, np.random.default_rng(1)), int)
    draws = sample_stationary(100.0, np.random.default_rng(2), size=5000)
    assert np.mean(draws == 1) >= 0.99


def test_sampler_deterministic():
    a = sample_stationary(0.2, np.random.default_rng(5), size=50)
    b = sample_stationary(0.2, np.random.default_rng(5), size=50)
    assert np.array_equal(a, b)


@given(c=st.floats(0.05, 20.0), n0=st.integers(1, 30), seed=st.integers(0, 2**32))
def test_trajectory_steps_and_floor(c, n0, seed):
    traj = simulate_lb_chain(LBParams(c), n0, 5.0, seed)
    assert traj.sizes.min() >= 1
    assert set(np.abs(np.diff(traj.sizes)).tolist()) <= {1}
    assert np.all(np.diff(traj.event_times) > 0)
    assert traj.event_times[-1] <= 5.0


def test_yule_mean_is_e():
    rng = np.random.default_rng(3)
    sizes = np.array([simulate_lb_chain(LBParams(0.0), 1, 1.0, rng).final_size for _ in range(10_000)])
    se = sizes.std(ddof=1) / math.sqrt(sizes.size)
    assert abs(sizes.mean() - math.e) < 3 * se


def test_yule_law_is_geometric():
    rng = np.random.default_rng(4)
    sizes = np.array([simulate_lb_chain(LBParams(0.0), 1, 1.0, rng).final_size for _ in range(10_000)])
    _, pvalue = discrete_ks(sizes, stats.geom(math.exp(-1.0)).cdf)
    assert pvalue > 0.05


@pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
def test_time_weighted_occupation(c):
    traj = simulate_lb_chain(LBParams(c), 1, 20_000.0, np.random.default_rng(int(10 * c)))
    occ = traj.occupation(burn_in=100.0)
    kmax = max(max(occ), 40)
    pmf = stationary_pmf_array(c, kmax)
    emp = np.array([occ.get(k, 0.0) for k in range(1, kmax + 1)])
    assert 0.5 * np.abs(emp - pmf).sum() < 0.02
    assert sum(occ.values()) == pytest.approx(1.0, abs=1e-9)


def test_trajectory_accessors():
    traj = simulate_lb_chain(LBParams(1.0), 2, 3.0, 9)
    assert traj.size_at(0.0) == 2
    assert traj.size_at(3.0) == traj.final_size
    assert traj.holding_times().sum() == pytest.approx(3.0)
    with pytest.raises(ValueError):
        traj.size_at(3.5)


def test_population_cap():
    with pytest.raises(PopulationCapError):
        simulate_lb_chain(LBParams(0.0), 1, 30.0, 1, max_population=1000)


def test_chain_rejects_bad_start():
    with pytest.raises(ValueError):
        simulate_lb_chain(LBParams(1.0), 0, 1.0, 1)
