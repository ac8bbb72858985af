import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from logbbm.errors import DomainTooSmallError, MassDriftError
from logbbm.fkpp import (BRAMSON_COEFFICIENT, CDF, DENSITY, SQRT2, Field1D, FrontTrace, Grid1D,
                         bramson_fit, cdf_from_density, density_from_function, front_position,
                         front_speed, heaviside_cdf, logistic_mass, solve_fkpp_cdf,
                         solve_fkpp_nonlocal_density, wave_integral_identity)
from logbbm.measures import sup_distance


def gaussian(center=0.0, scale=1.0):
    return lambda x: np.exp(-0.5 * ((x - center) / scale) ** 2)


# -- grid and fields ------------------------------------------------------------

def test_grid_from_spacing():
    g = Grid1D.from_spacing(-30, 150, 0.05)
    assert g.n_nodes == 3601 and g.dx == pytest.approx(0.05)
    with pytest.raises(ValueError):
        Grid1D(1.0, 0.0, 5)
    with pytest.raises(ValueError):
        Grid1D(0.0, 1.0, 2)


def test_field_validation():
    g = Grid1D(0.0, 1.0, 3)
    with pytest.raises(ValueError):
        Field1D(g, np.array([0.0, 0.6, 0.5]), CDF)
    with pytest.raises(ValueError):
        Field1D(g, np.array([0.0, 0.5, 1.5]), CDF)
    with pytest.raises(ValueError):
        Field1D(g, np.array([0.0, -0.1, 0.0]), DENSITY)
    with pytest.raises(ValueError):
        Field1D(g, np.zeros(3), "speed")
    f = Field1D(g, np.array([0.0, 0.5, 1.0]), CDF)
    with pytest.raises(ValueError):
        f.values[0] = 1.0


# -- CDF solver -------------------------------------------------------------------

@pytest.mark.parametrize("value", [0.0, 1.0])
def test_constant_fixed_points(value):
    g = Grid1D.from_spacing(-5, 5, 0.1)
    sol = solve_fkpp_cdf(Field1D(g, np.full(g.n_nodes, value), CDF), 5.0, save_times=(1.0,),
                         boundary_guard=False)
    for f in sol.fields:
        assert np.all(f.values == value)


def test_cfl_rejected():
    g = Grid1D.from_spacing(-5, 5, 0.1)
    with pytest.raises(ValueError):
        solve_fkpp_cdf(heaviside_cdf(g), 1.0, dt=0.0091)
    with pytest.raises(ValueError):
        solve_fkpp_nonlocal_density(density_from_function(g, gaussian()), 1.0, dt=0.0091)


def test_wrong_role_rejected():
    g = Grid1D.from_spacing(-5, 5, 0.1)
    with pytest.raises(ValueError):
        solve_fkpp_cdf(density_from_function(g, gaussian()), 1.0)
    with pytest.raises(ValueError):
        solve_fkpp_nonlocal_density(heaviside_cdf(g), 1.0)


def test_save_times_exact():
    g = Grid1D.from_spacing(-20, 40, 0.1)
    sol = solve_fkpp_cdf(heaviside_cdf(g), 5.0, save_times=(0.0, 1.0 / 3.0, 2.5))
    assert [f.time for f in sol.fields] == [0.0, 1.0 / 3.0, 2.5, 5.0]
    assert sol.dt <= 0.9 * g.dx ** 2 + 1e-15


def test_monotonicity_preserved():
    g = Grid1D.from_spacing(-20, 40, 0.1)
    ic = Field1D(g, np.clip((g.nodes + 2) / 4, 0, 1), CDF)
    sol = solve_fkpp_cdf(ic, 8.0, save_times=tuple(np.arange(0.5, 8.0, 0.5)))
    for f in sol.fields:
        assert np.all(np.diff(f.values) >= -1e-8)


@given(st.integers(0, 2**32))
def test_cdf_comparison_principle(seed):
    rng = np.random.default_rng(seed)
    g = Grid1D.from_spacing(-10, 10, 0.25)
    b = np.sort(rng.random(g.n_nodes))
    a = b * rng.random(g.n_nodes)
    a = np.maximum.accumulate(a)
    a = np.minimum(a, b)
    # boundary values pinned at the stable states 0 and 1
    a[0] = b[0] = 0.0
    a[-1] = b[-1] = 1.0
    sa = solve_fkpp_cdf(Field1D(g, a, CDF), 2.0, save_times=(0.5, 1.0, 1.5), boundary_guard=False)
    sb = solve_fkpp_cdf(Field1D(g, b, CDF), 2.0, save_times=(0.5, 1.0, 1.5), boundary_guard=False)
    for fa, fb in zip(sa.fields, sb.fields):
        assert np.all(fa.values <= fb.values)


def test_domain_guard():
    g = Grid1D.from_spacing(-5, 10, 0.1)
    with pytest.raises(DomainTooSmallError):
        solve_fkpp_cdf(heaviside_cdf(g), 10.0)


def test_grid_refinement():
    # measured changes of front_position(t=10) under halving: 0.2475, 0.0758, 0.0253
    fronts = []
    for dx in (0.2, 0.1, 0.05, 0.025):
        g = Grid1D.from_spacing(-20, 40, dx)
        fronts.append(front_position(solve_fkpp_cdf(heaviside_cdf(g), 10.0).at_time(10.0)))
    changes = np.abs(np.diff(fronts))
    assert changes[0] < 4 * changes[1]
    assert changes[1] < 4 * changes[2]
    assert np.all(np.diff(changes) < 0)


# -- front analytics ------------------------------------------------------------

def test_front_position_examples():
    g = Grid1D.from_spacing(-5, 5, 0.1)
    assert abs(front_position(heaviside_cdf(g))) <= g.dx
    ramp = Field1D(Grid1D(0.0, 2.0, 21), np.linspace(0, 1, 21), CDF)
    assert front_position(ramp) == 1.0
    assert front_position(ramp, level=0.25) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(ValueError):
        front_position(Field1D(g, np.zeros(g.n_nodes), CDF))


@given(st.floats(-100, 100), st.floats(0.05, 0.95))
def test_front_position_equivariant(shift, level):
    g = Grid1D.from_spacing(-5, 5, 0.1)
    f = Field1D(g, 1 / (1 + np.exp(-2 * g.nodes)), CDF)
    assert front_position(f.shifted(shift), level) == pytest.approx(
        front_position(f, level) + shift, abs=1e-12)


def test_front_speed_linear_trace():
    t = np.linspace(0, 60, 601)
    speed, intercept, rms = front_speed(FrontTrace(t, SQRT2 * t), (20, 60))
    assert abs(speed - SQRT2) < 1e-12 and abs(intercept) < 1e-10 and rms < 1e-10


def test_front_speed_bramson_trace():
    t = np.linspace(1, 60, 591)
    speed, *_ = front_speed(FrontTrace(t, SQRT2 * t + BRAMSON_COEFFICIENT * np.log(t)), (20, 60))
    assert 1.37 <= speed <= 1.414


def test_bramson_fit_synthetic():
    t = np.linspace(1, 80, 791)
    exact = FrontTrace(t, SQRT2 * t + BRAMSON_COEFFICIENT * np.log(t) + 0.7)
    assert bramson_fit(exact, (20, 80)) == pytest.approx(-3 / (2 * SQRT2), abs=1e-10)
    assert abs(bramson_fit(FrontTrace(t, SQRT2 * t - 2.0), (20, 80))) < 1e-10


def test_window_needs_samples():
    t = np.arange(0.0, 10.0)
    with pytest.raises(ValueError):
        front_speed(FrontTrace(t, t), (0, 5))


def test_heaviside_front_speed_fine_grid():
    # at dx = 0.025 the explicit time error is small enough to see the band
    g = Grid1D.from_spacing(-30, 150, 0.025)
    sol = solve_fkpp_cdf(heaviside_cdf(g), 60.0, front_every=0.1)
    speed, *_ = front_speed(sol.front, (20, 60))
    assert abs(speed - SQRT2) <= 0.03


def test_wave_integral_examples():
    g = Grid1D.from_spacing(-60, 60, 0.01)
    assert wave_integral_identity(heaviside_cdf(g), guard=False) == 0.0
    logistic = Field1D(g, 1 / (1 + np.exp(-g.nodes)), CDF)
    # closed form: the integrand is the derivative of the logistic, which rises by 1
    assert wave_integral_identity(logistic, guard=False) == pytest.approx(1.0, abs=1e-8)


def test_wave_integral_guard():
    g = Grid1D.from_spacing(-3, 3, 0.1)
    with pytest.raises(DomainTooSmallError):
        wave_integral_identity(Field1D(g, 1 / (1 + np.exp(-g.nodes)), CDF))


# -- nonlocal density solver ------------------------------------------------------

def test_nonlocal_zero_stays_zero():
    g = Grid1D.from_spacing(-5, 5, 0.1)
    sol = solve_fkpp_nonlocal_density(Field1D(g, np.zeros(g.n_nodes), DENSITY), 2.0,
                                      require_unit_mass=False, boundary_guard=False)
    assert np.all(sol.fields[-1].values == 0.0)


def test_nonlocal_unit_mass_conserved():
    g = Grid1D.from_spacing(-30, 60, 0.05)
    sol = solve_fkpp_nonlocal_density(density_from_function(g, gaussian()), 10.0,
                                      save_times=tuple(range(1, 10)))
    assert np.max(np.abs(sol.masses - 1.0)) < 1e-3
    assert all(abs(f.mass - 1.0) < 1e-3 for f in sol.fields)


@pytest.mark.parametrize("m0", [0.5, 1.0, 2.0])
def test_nonlocal_logistic_mass(m0):
    g = Grid1D.from_spacing(-30, 40, 0.1)
    base = density_from_function(g, gaussian())
    ic = Field1D(g, m0 * base.values, DENSITY)
    sol = solve_fkpp_nonlocal_density(ic, 5.0, require_unit_mass=False)
    assert np.max(np.abs(sol.masses - logistic_mass(m0, sol.mass_times))) < 1e-2


def test_nonlocal_requires_unit_mass():
    g = Grid1D.from_spacing(-10, 10, 0.1)
    ic = Field1D(g, 2 * density_from_function(g, gaussian()).values, DENSITY)
    with pytest.raises(ValueError):
        solve_fkpp_nonlocal_density(ic, 1.0)


def test_mass_drift_guard():
    g = Grid1D.from_spacing(-10, 10, 0.1)
    ic = Field1D(g, 0.5 * density_from_function(g, gaussian()).values, DENSITY)
    with pytest.raises(MassDriftError):
        solve_fkpp_nonlocal_density(ic, 1.0, require_unit_mass=False, mass_tol=1e-6)


@pytest.mark.parametrize("shape", [
    gaussian(),
    lambda x: ((x > -2) & (x < 2)).astype(float),
    lambda x: gaussian(-3, 0.7)(x) + 0.5 * gaussian(3, 1.5)(x),
])
def test_cross_solver_consistency(shape):
    g = Grid1D.from_spacing(-30, 60, 0.05)
    dens = density_from_function(g, shape)
    d_sol = solve_fkpp_nonlocal_density(dens, 5.0)
    c_sol = solve_fkpp_cdf(cdf_from_density(dens), 5.0)
    integrated = cdf_from_density(d_sol.at_time(5.0))
    assert sup_distance(integrated, c_sol.at_time(5.0), unnormalized=True) < 5e-3


def test_nonlocal_nodewise_order_not_preserved():
    # extra mass far to the right raises the suffix integral and slows growth on the left
    g = Grid1D.from_spacing(-20, 30, 0.1)
    x = g.nodes
    a = 0.5 * gaussian()(x) / math.sqrt(2 * math.pi) * (np.abs(x) < 19)
    b = a + 0.5 * gaussian(10)(x) / math.sqrt(2 * math.pi) * (np.abs(x) < 19)
    assert np.all(a <= b)
    sa = solve_fkpp_nonlocal_density(Field1D(g, a, DENSITY), 1.0, require_unit_mass=False)
    sb = solve_fkpp_nonlocal_density(Field1D(g, b, DENSITY), 1.0, require_unit_mass=False)
    assert np.max(sa.fields[-1].values - sb.fields[-1].values) > 0.1


@given(st.floats(0.0, 4.0), st.floats(0.5, 2.0), st.floats(0.0, 1.0))
def test_nonlocal_cdf_order_preserved(shift, scale, weight):
    # a unit-mass density whose CDF lies below another keeps it below
    g = Grid1D.from_spacing(-25, 35, 0.1)
    lo = density_from_function(g, gaussian(0.0, scale))
    hi = density_from_function(
        g, lambda x: weight * gaussian(shift, scale)(x) + (1 - weight) * gaussian(shift + 3, scale)(x))
    assert np.all(cdf_from_density(hi).values <= cdf_from_density(lo).values + 1e-12)
    s_lo = solve_fkpp_nonlocal_density(lo, 2.0, save_times=(1.0,))
    s_hi = solve_fkpp_nonlocal_density(hi, 2.0, save_times=(1.0,))
    for f_lo, f_hi in zip(s_lo.fields, s_hi.fields):
        assert np.all(cdf_from_density(f_hi).values <= cdf_from_density(f_lo).values + 1e-9)


def test_logistic_mass_formula():
    assert logistic_mass(1.0, 3.0) == pytest.approx(1.0)
    assert logistic_mass(0.5, 0.0) == 0.5
    t = 0.7
    m = logistic_mass(2.0, t)
    h = 1e-6
    deriv = (logistic_mass(2.0, t + h) - logistic_mass(2.0, t - h)) / (2 * h)
    assert deriv == pytest.approx(m * (1 - m), rel=1e-6)
