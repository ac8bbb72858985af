import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from logbbm.fkpp import CDF, Field1D, Grid1D, heaviside_cdf
from logbbm.measures import (COUNT, MASS, StepCDF, average_cdfs, cdf, cdf_at, empirical_mean,
                             empirical_measure, histogram, mean_from_cdf, sup_distance)
from logbbm.simulator import PopulationState

atom_sets = st.lists(st.floats(-20, 20, allow_nan=False), min_size=1, max_size=40)


def test_count_normalization():
    m = empirical_measure(PopulationState([0.0, 1.0, 2.0]), COUNT)
    assert m.total_mass == 1.0
    assert m.weight_per_atom == pytest.approx(1 / 3)


def test_mass_normalization():
    # c_K = 1 gives m_K = 1/(1 - e^{-1}); two atoms carry 2(1 - e^{-1})
    m = empirical_measure(np.array([0.0, 0.3]), MASS, c_K=1.0)
    assert m.total_mass == pytest.approx(1.2642411176571153, rel=1e-14)


def test_mass_normalization_needs_rate():
    with pytest.raises(ValueError):
        empirical_measure(np.array([0.0]), MASS)
    with pytest.raises(ValueError):
        empirical_measure(np.array([0.0]), "bogus")


def test_empty_measure_rejected():
    with pytest.raises(ValueError):
        empirical_measure(np.array([]), COUNT)


def test_cdf_examples():
    single = empirical_measure(np.array([0.0]))
    assert cdf_at(single, -0.1) == 0.0 and cdf_at(single, 0.0) == 1.0
    F = cdf(empirical_measure(np.array([0.0, 1.0])))
    assert F.at(0.5) == 0.5
    heavy = empirical_measure(np.array([0.0, 1.0, 1.0]), MASS, c_K=0.5)
    assert cdf_at(heavy, 1.0) == pytest.approx(heavy.total_mass)


@given(atom_sets)
def test_cdf_monotone_right_continuous(xs):
    m = empirical_measure(np.array(xs))
    F = cdf(m)
    grid = np.linspace(-25, 25, 501)
    vals = F.at(grid)
    assert np.all(np.diff(vals) >= 0)
    # right continuity: constant on [p_i, p_{i+1})
    nxt = np.append(F.jump_points[1:], F.jump_points[-1] + 1.0)
    for p, q in zip(F.jump_points, nxt):
        assert F.at(p) == F.at(p + 0.5 * (q - p))
        assert F.left_limit(p) < F.at(p)
    assert cdf_at(m, m.atoms[-1]) == 1.0
    assert F.at(-1e9) == 0.0


@given(atom_sets, st.floats(-10, 10))
def test_mean_matches_cdf_integral(xs, shift):
    m = empirical_measure(np.array(xs))
    assert abs(empirical_mean(m) - mean_from_cdf(cdf(m))) < 1e-10
    shifted = empirical_measure(np.array(xs) + shift)
    assert empirical_mean(shifted) == pytest.approx(empirical_mean(m) + shift, abs=1e-9)


def test_mean_examples():
    assert empirical_mean(empirical_measure(np.array([0.0, 2.0]))) == 1.0
    with pytest.raises(ValueError):
        empirical_mean(empirical_measure(np.array([0.0]), MASS, c_K=1.0))


def _step(atoms):
    return cdf(empirical_measure(np.array(atoms)))


def test_sup_distance_examples():
    a = _step([0.0, 1.0])
    assert sup_distance(a, a) == 0.0
    assert sup_distance(_step([0.0]), _step([1.0])) == 1.0
    grid = Grid1D(0.0, 1.0, 11)
    ramp = Field1D(grid, grid.nodes.copy(), CDF)
    assert sup_distance(a, ramp) == pytest.approx(0.5, abs=1e-15)


def test_sup_distance_heaviside_field_and_step():
    grid = Grid1D(-5.0, 5.0, 201)
    assert sup_distance(_step([0.0]), heaviside_cdf(grid)) == 0.0


def test_sup_distance_normalization_guard():
    light = cdf(empirical_measure(np.array([0.0]), MASS, c_K=1.0))
    with pytest.raises(ValueError):
        sup_distance(light, _step([0.0]))
    assert sup_distance(light, _step([0.0]), unnormalized=True) == pytest.approx(1 - light.total_mass)


@given(atom_sets, atom_sets, atom_sets)
def test_sup_distance_pseudometric(xa, xb, xc):
    a, b, c = _step(xa), _step(xb), _step(xc)
    assert sup_distance(a, b) == sup_distance(b, a)
    assert 0.0 <= sup_distance(a, b) <= 1.0
    assert sup_distance(a, c) <= sup_distance(a, b) + sup_distance(b, c) + 1e-12


def test_average_cdfs():
    avg = average_cdfs([_step([0.0]), _step([1.0])])
    assert avg.at(0.5) == 0.5 and avg.at(1.0) == 1.0
    with pytest.raises(ValueError):
        average_cdfs([])
    with pytest.raises(ValueError):
        average_cdfs([_step([0.0]), cdf(empirical_measure(np.array([0.0]), MASS, c_K=1.0))])


def test_step_cdf_validation():
    with pytest.raises(ValueError):
        StepCDF(np.array([1.0, 0.0]), np.array([0.5, 1.0]))
    with pytest.raises(ValueError):
        StepCDF(np.array([0.0, 1.0]), np.array([0.6, 0.5]))


def test_histogram_integrates_to_mass():
    m = empirical_measure(np.random.default_rng(0).normal(size=500), MASS, c_K=0.01)
    edges, h = histogram(m, 0.25)
    assert (h * np.diff(edges)).sum() == pytest.approx(m.total_mass)
    with pytest.raises(ValueError):
        histogram(m, 0.0)


def test_measure_is_immutable():
    m = empirical_measure(np.array([1.0, 0.0]))
    assert m.atoms.tolist() == [0.0, 1.0]
    with pytest.raises(ValueError):
        m.atoms[0] = 3.0
    assert math.isclose(m.total_mass, 1.0)
