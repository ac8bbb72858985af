"""Explicit finite-difference solvers for the FKPP equations and front analytics.

Two equations are solved on a uniform grid:

* the CDF form ``F_t = F_xx / 2 - F (1 - F)``, where ``F`` is 0 far left and
  1 far right and the front invades to the right at speed ``sqrt(2)``;
* the nonlocal density form ``u_t = u_xx / 2 + u (1 - 2 S)`` with the suffix
  mass ``S(x) = int_x^inf u``. Integrating it in ``x`` recovers the CDF form
  for unit-mass data, which gives a cross-solver check.

Time stepping is forward Euler with second-order central differences. With
diffusion coefficient 1/2 the scheme is monotone for ``dt <= dx**2``; a 0.9
safety factor is enforced.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainTooSmallError, MassDriftError

log = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
BRAMSON_COEFFICIENT = -3.0 / (2.0 * SQRT2)
CFL_SAFETY = 0.9
CDF = "cdf"
DENSITY = "density"


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_nodes: int

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError("x_min must be smaller than x_max")
        if self.n_nodes < 3:
            raise ValueError("a grid needs at least 3 nodes")

    @classmethod
    def from_spacing(cls, x_min: float, x_max: float, dx: float) -> "Grid1D":
        n = int(round((x_max - x_min) / dx)) + 1
        return cls(float(x_min), float(x_min + (n - 1) * dx), n)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_nodes - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_nodes)


@dataclass(frozen=True, eq=False)
class Field1D:
    """Nodal values on a grid, tagged as a CDF or a density.

    CDF fields must lie in [0, 1] and be nondecreasing up to 1e-8; density
    fields must be nonnegative up to 1e-12.
    """

    grid: Grid1D
    values: np.ndarray
    role: str
    time: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n_nodes,):
            raise ValueError(f"expected {self.grid.n_nodes} values, got shape {v.shape}")
        if self.role == CDF:
            if v.min() < -1e-12 or v.max() > 1 + 1e-12:
                raise ValueError("CDF values must lie in [0, 1]")
            if np.any(np.diff(v) < -1e-8):
                raise ValueError("CDF values must be nondecreasing")
        elif self.role == DENSITY:
            if v.min() < -1e-12:
                raise ValueError("density values must be nonnegative")
        else:
            raise ValueError(f"unknown field role {self.role!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def x(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def mass(self) -> float:
        """Trapezoid integral of the values (meaningful for densities)."""
        return _trapezoid(self.values, self.grid.dx)

    def at(self, x) -> np.ndarray:
        """Piecewise-linear interpolation, constant beyond the grid ends."""
        return np.interp(x, self.grid.nodes, self.values)

    def shifted(self, a: float) -> "Field1D":
        """The same profile translated right by ``a`` (grid moved along)."""
        g = Grid1D(self.grid.x_min + a, self.grid.x_max + a, self.grid.n_nodes)
        return Field1D(g, self.values, self.role, self.time)


def _trapezoid(v: np.ndarray, dx: float) -> float:
    return float(dx * (v.sum() - 0.5 * (v[0] + v[-1])))


def heaviside_cdf(grid: Grid1D, at: float = 0.0) -> Field1D:
    """CDF of a unit point mass: ``1{x >= at}`` sampled at the nodes."""
    return Field1D(grid, (grid.nodes >= at).astype(float), CDF)


def cdf_from_density(density: Field1D) -> Field1D:
    """Cumulative trapezoid integral ``int_{x_min}^x u`` of a density field."""
    v = density.values
    dx = density.grid.dx
    cum = np.concatenate(([0.0], np.cumsum(0.5 * dx * (v[1:] + v[:-1]))))
    return Field1D(density.grid, np.clip(cum, 0.0, 1.0), CDF, density.time)


def density_from_function(grid: Grid1D, f, normalize: bool = True) -> Field1D:
    """Sample ``f`` on the grid, zero the boundary nodes and optionally rescale to unit mass."""
    v = np.asarray(f(grid.nodes), dtype=float).copy()
    v[0] = v[-1] = 0.0
    if normalize:
        v /= _trapezoid(v, grid.dx)
    return Field1D(grid, v, DENSITY)


@dataclass(frozen=True)
class FrontTrace:
    times: np.ndarray
    positions: np.ndarray
    level: float = 0.5

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        m = np.asarray(self.positions, dtype=float)
        if t.shape != m.shape:
            raise ValueError("one position per time is required")
        if np.any(np.diff(t) <= 0):
            raise ValueError("front times must be increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", m)


@dataclass
class FKPPSolution:
    fields: list[Field1D]
    front: FrontTrace | None
    dt: float
    max_clamp: float = 0.0
    total_clamp: float = 0.0
    masses: np.ndarray | None = None
    mass_times: np.ndarray | None = None

    def at_time(self, t: float) -> Field1D:
        for f in self.fields:
            if math.isclose(f.time, t, rel_tol=0, abs_tol=0.5 * self.dt + 1e-12):
                return f
        raise KeyError(f"no saved field at t={t}")


def _check_cfl(grid: Grid1D, dt: float) -> None:
    limit = CFL_SAFETY * grid.dx ** 2
    if not 0 < dt <= limit * (1 + 1e-12):
        raise ValueError(f"dt={dt:.6g} violates the stability bound dt <= {limit:.6g}")


def _march(t_end: float, dt: float, save_times, step, on_save, probe_every=None, on_probe=None):
    """Drive ``step(h)`` from 0 to ``t_end``, landing exactly on every save time.

    Each interval between consecutive save times is split into equal steps
    no longer than ``dt``. ``on_probe(t)`` fires at the first step reaching
    each multiple of ``probe_every``. Returns the largest step used.
    """
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    stops = sorted(set(float(s) for s in save_times) | {float(t_end)})
    if stops[0] < 0 or stops[-1] > t_end:
        raise ValueError(f"save times must lie in [0, {t_end}]")
    t = 0.0
    h_max = 0.0
    next_probe = math.inf
    if probe_every:
        on_probe(0.0)
        next_probe = probe_every
    for stop in stops:
        n = int(math.ceil((stop - t) / dt - 1e-9)) if stop > t else 0
        if n:
            h = (stop - t) / n
            h_max = max(h_max, h)
            for i in range(1, n + 1):
                step(h)
                now = t + i * h
                if now >= next_probe - 0.5 * h:
                    on_probe(now)
                    while next_probe <= now + 0.5 * h:
                        next_probe += probe_every
        t = stop
        on_save(stop)
    return h_max or dt


def front_position(field: Field1D, level: float = 0.5) -> float:
    """First crossing of ``level`` from below, linearly interpolated between nodes."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    v = field.values
    above = np.flatnonzero(v >= level)
    if above.size == 0 or above[0] == 0:
        raise ValueError(f"field does not cross level {level} from below")
    i = int(above[0])
    x = field.grid.nodes
    frac = (level - v[i - 1]) / (v[i] - v[i - 1])
    return float(x[i - 1] + frac * (x[i] - x[i - 1]))


def _guard(values: np.ndarray, left: float, right: float, grid: Grid1D, t: float,
           width: int = 10, tol: float = 1e-6) -> None:
    if np.any(np.abs(values[1:width + 1] - left) > tol) or \
            np.any(np.abs(values[-width - 1:-1] - right) > tol):
        raise DomainTooSmallError(
            f"solution at t={t:.4g} reaches within {width} nodes of the boundary of "
            f"[{grid.x_min}, {grid.x_max}]; enlarge the domain")


def solve_fkpp_cdf(ic: Field1D, t_end: float, dt: float | None = None, save_times=(),
                   front_every: float | None = None, level: float = 0.5,
                   boundary_guard: bool = True) -> FKPPSolution:
    """Integrate ``F_t = F_xx / 2 - F (1 - F)`` with Dirichlet data taken from ``ic``'s end values.

    Fields are saved at ``save_times`` and ``t_end``; the level crossing is
    recorded every ``front_every`` time units when given.
    """
    if ic.role != CDF:
        raise ValueError("solve_fkpp_cdf needs a CDF field")
    grid = ic.grid
    dx = grid.dx
    dt = CFL_SAFETY * dx ** 2 if dt is None else float(dt)
    _check_cfl(grid, dt)
    u = np.array(ic.values, dtype=float)
    left, right = float(u[0]), float(u[-1])
    fields, f_t, f_m = [], [], []
    clamp = {"max": 0.0, "total": 0.0}
    lap_scale = 0.5 / dx ** 2

    def step(h):
        c = u[1:-1]
        new = c + (h * lap_scale) * (u[2:] - 2.0 * c + u[:-2]) - h * c * (1.0 - c)
        lo, hi = new.min(), new.max()
        if lo < 0.0 or hi > 1.0:
            clamp["max"] = max(clamp["max"], -lo, hi - 1.0)
            clamp["total"] += float(np.sum(np.clip(-new, 0, None)) + np.sum(np.clip(new - 1, 0, None)))
            np.clip(new, 0.0, 1.0, out=new)
        u[1:-1] = new

    def on_probe(t):
        f_t.append(t)
        f_m.append(front_position(Field1D(grid, u, CDF, t), level))
        if boundary_guard:
            _guard(u, left, right, grid, t)

    def on_save(t):
        if boundary_guard:
            _guard(u, left, right, grid, t)
        fields.append(Field1D(grid, u.copy(), CDF, t))

    h = _march(t_end, dt, save_times, step, on_save, front_every, on_probe)
    if clamp["max"] > 1e-10:
        log.warning("CDF solver clamped values by up to %.3g", clamp["max"])
    elif clamp["max"] > 0:
        log.debug("CDF solver clamped values by up to %.3g", clamp["max"])
    trace = FrontTrace(np.array(f_t), np.array(f_m), level) if front_every else None
    return FKPPSolution(fields, trace, h, clamp["max"], clamp["total"])


def logistic_mass(m0: float, t):
    """Solution of ``m' = m (1 - m)`` from ``m0``."""
    e = np.exp(t)
    return m0 * e / (1.0 - m0 + m0 * e)


def solve_fkpp_nonlocal_density(ic: Field1D, t_end: float, dt: float | None = None,
                                save_times=(), require_unit_mass: bool = True,
                                mass_tol: float = 1e-2, boundary_guard: bool = True,
                                mass_every: float | None = None) -> FKPPSolution:
    """Integrate ``u_t = u_xx / 2 + u (1 - 2 int_x^inf u)`` with zero Dirichlet boundaries.

    The suffix integral is a reverse cumulative trapezoid sum, recomputed
    every step. The trapezoid mass is compared with the logistic ODE it
    must follow; a drift beyond ``mass_tol`` raises ``MassDriftError``.
    """
    if ic.role != DENSITY:
        raise ValueError("solve_fkpp_nonlocal_density needs a density field")
    grid = ic.grid
    dx = grid.dx
    dt = CFL_SAFETY * dx ** 2 if dt is None else float(dt)
    _check_cfl(grid, dt)
    m0 = ic.mass
    if require_unit_mass and abs(m0 - 1.0) > 1e-6:
        raise ValueError(f"initial density must have unit mass, got {m0:.8g}")
    u = np.array(ic.values, dtype=float)
    u[0] = u[-1] = 0.0
    lap_scale = 0.5 / dx ** 2
    half_dx = 0.5 * dx
    fields, m_t, m_v = [], [], []
    clamp = {"max": 0.0, "total": 0.0}
    suffix = np.empty_like(u)

    def step(h):
        # suffix[i] = int_{x_i}^{x_max} u
        seg = half_dx * (u[1:] + u[:-1])
        suffix[-1] = 0.0
        suffix[:-1] = np.cumsum(seg[::-1])[::-1]
        c = u[1:-1]
        new = c + (h * lap_scale) * (u[2:] - 2.0 * c + u[:-2]) + h * c * (1.0 - 2.0 * suffix[1:-1])
        lo = new.min()
        if lo < 0.0:
            clamp["max"] = max(clamp["max"], -lo)
            clamp["total"] += float(np.sum(np.clip(-new, 0, None)))
            np.clip(new, 0.0, None, out=new)
        u[1:-1] = new

    def check_mass(t):
        m = _trapezoid(u, dx)
        if m_t and m_t[-1] == t:
            return
        m_t.append(t)
        m_v.append(m)
        expected = float(logistic_mass(m0, t))
        if abs(m - expected) > mass_tol:
            raise MassDriftError(
                f"mass {m:.6g} at t={t:.4g} departs from the logistic value "
                f"{expected:.6g}; refine the grid or enlarge the domain")
        if boundary_guard:
            _guard(u, 0.0, 0.0, grid, t)

    def on_save(t):
        check_mass(t)
        fields.append(Field1D(grid, u.copy(), DENSITY, t))

    every = mass_every if mass_every else max(t_end / 200.0, dt)
    h = _march(t_end, dt, save_times, step, on_save, every, check_mass)
    if clamp["max"] > 1e-12:
        log.warning("density solver clamped negative values of size up to %.3g", clamp["max"])
    return FKPPSolution(fields, None, h, clamp["max"], clamp["total"],
                        masses=np.array(m_v), mass_times=np.array(m_t))


def _window(trace: FrontTrace, window) -> tuple[np.ndarray, np.ndarray]:
    a, b = window
    sel = (trace.times >= a - 1e-9) & (trace.times <= b + 1e-9)
    if sel.sum() < 10:
        raise ValueError(f"need at least 10 front samples in [{a}, {b}], got {int(sel.sum())}")
    return trace.times[sel], trace.positions[sel]


def front_speed(trace: FrontTrace, window) -> tuple[float, float, float]:
    """Least-squares line through the front positions in ``window``.

    Returns ``(speed, intercept, rms_residual)``.
    """
    t, m = _window(trace, window)
    A = np.column_stack([t, np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(A, m, rcond=None)
    resid = m - A @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(resid ** 2)))


def bramson_fit(trace: FrontTrace, window) -> float:
    """Coefficient ``b`` of the fit ``m(t) - sqrt(2) t ~ a + b log t`` over ``window``."""
    t, m = _window(trace, window)
    A = np.column_stack([np.log(t), np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(A, m - SQRT2 * t, rcond=None)
    return float(coef[0])


def wave_integral_identity(field: Field1D, guard: bool = True) -> float:
    """Trapezoid integral of ``F (1 - F)`` over the grid.

    For a developed front this equals its instantaneous speed, which tends
    to ``sqrt(2)``.
    """
    if field.role != CDF:
        raise ValueError("wave_integral_identity needs a CDF field")
    v = field.values
    if guard:
        _guard(v, float(v[0]), float(v[-1]), field.grid, field.time)
    return _trapezoid(v * (1.0 - v), field.grid.dx)
