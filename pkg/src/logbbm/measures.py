"""Empirical measures of the particle cloud and Kolmogorov-Smirnov distances.

Two normalizations are supported. ``"count"`` gives each of the ``N`` atoms
weight ``1/N`` (a probability measure). ``"mass"`` gives each atom weight
``1/m_K``, with ``m_K`` the stationary mean population at competition rate
``c_K``, so total mass fluctuates around 1.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fkpp import CDF, Field1D
from .lbprocess import stationary_mean

COUNT = "count"
MASS = "mass"
NORMALIZATIONS = (COUNT, MASS)


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    atoms: np.ndarray
    denominator: float
    normalization: str

    def __post_init__(self):
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        a = np.sort(np.asarray(self.atoms, dtype=float).ravel())
        if a.size == 0:
            raise ValueError("an empirical measure needs at least one atom")
        if not self.denominator > 0:
            raise ValueError("denominator must be positive")
        a.setflags(write=False)
        object.__setattr__(self, "atoms", a)

    @property
    def weight_per_atom(self) -> float:
        return 1.0 / self.denominator

    @property
    def total_mass(self) -> float:
        # k / denominator rather than k * weight, so count normalization gives exactly 1
        return self.atoms.size / self.denominator


def _atoms_of(state) -> np.ndarray:
    from .simulator import PopulationState, Snapshot

    if isinstance(state, PopulationState):
        return state.blue_positions.copy()
    if isinstance(state, Snapshot):
        return state.blue
    return np.asarray(state, dtype=float)


def empirical_measure(state, normalization: str = COUNT, c_K: float | None = None) -> EmpiricalMeasure:
    """Measure with one atom per alive blue particle.

    ``state`` may be a ``PopulationState``, a ``Snapshot`` or an array of
    positions. Mass normalization needs the scaled competition rate ``c_K``.
    """
    atoms = _atoms_of(state)
    if normalization == COUNT:
        return EmpiricalMeasure(atoms, float(np.size(atoms)), COUNT)
    if normalization == MASS:
        if c_K is None:
            raise ValueError("mass normalization needs c_K")
        return EmpiricalMeasure(atoms, stationary_mean(c_K), MASS)
    raise ValueError(f"unknown normalization {normalization!r}")


@dataclass(frozen=True, eq=False)
class StepCDF:
    """Right-continuous step function.

    ``values[i]`` is the value on ``[jump_points[i], jump_points[i + 1])``;
    the function is 0 left of the first jump point.
    """

    jump_points: np.ndarray
    values: np.ndarray
    normalization: str = COUNT

    def __post_init__(self):
        x = np.asarray(self.jump_points, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if x.shape != v.shape or x.ndim != 1:
            raise ValueError("jump_points and values must be 1-d of equal length")
        if np.any(np.diff(x) <= 0):
            raise ValueError("jump points must be strictly increasing")
        if np.any(np.diff(v) < 0) or (v.size and v[0] < 0):
            raise ValueError("CDF values must be nonnegative and nondecreasing")
        object.__setattr__(self, "jump_points", x)
        object.__setattr__(self, "values", v)

    @property
    def total_mass(self) -> float:
        return float(self.values[-1]) if self.values.size else 0.0

    def __call__(self, x):
        return self.at(x)

    def at(self, x):
        idx = np.searchsorted(self.jump_points, x, side="right") - 1
        v = np.where(idx >= 0, self.values[np.maximum(idx, 0)], 0.0)
        return float(v) if np.ndim(x) == 0 else v

    def left_limit(self, x):
        idx = np.searchsorted(self.jump_points, x, side="left") - 1
        v = np.where(idx >= 0, self.values[np.maximum(idx, 0)], 0.0)
        return float(v) if np.ndim(x) == 0 else v


def cdf(measure: EmpiricalMeasure) -> StepCDF:
    atoms = measure.atoms
    pts, counts = np.unique(atoms, return_counts=True)
    return StepCDF(pts, np.cumsum(counts) / measure.denominator, measure.normalization)


def cdf_at(measure: EmpiricalMeasure, x):
    """``#{atoms <= x} / denominator``."""
    k = np.searchsorted(measure.atoms, x, side="right")
    return k / measure.denominator


def average_cdfs(cdfs: Sequence[StepCDF]) -> StepCDF:
    """Pointwise mean of step CDFs, again a step CDF on the union of jump points."""
    if not cdfs:
        raise ValueError("nothing to average")
    norms = {c.normalization for c in cdfs}
    if len(norms) != 1:
        raise ValueError(f"cannot average mixed normalizations {sorted(norms)}")
    pts = np.unique(np.concatenate([c.jump_points for c in cdfs]))
    acc = np.zeros_like(pts)
    for c in cdfs:
        acc += c.at(pts)
    return StepCDF(pts, acc / len(cdfs), norms.pop())


def empirical_mean(measure: EmpiricalMeasure) -> float:
    if measure.normalization != COUNT:
        raise ValueError("the empirical mean is defined for the count-normalized measure only")
    return float(np.mean(measure.atoms))


def mean_from_cdf(F: StepCDF) -> float:
    """``int_0^inf (1 - F) dx - int_{-inf}^0 F dx`` evaluated exactly for a step CDF of mass 1."""
    if abs(F.total_mass - 1.0) > 1e-12:
        raise ValueError("mean_from_cdf needs a probability CDF")
    lo = F.jump_points
    hi = np.append(F.jump_points[1:], np.inf)
    v = F.values
    neg_len = np.clip(np.minimum(hi, 0.0) - lo, 0.0, None)
    pos_len = np.clip(hi - np.maximum(lo, 0.0), 0.0, None)
    head = max(F.jump_points[0], 0.0)  # F = 0 on (-inf, first atom)
    # F = 1 beyond the last atom, so only finite intervals add to the positive part
    return float(head + np.sum((1.0 - v[:-1]) * pos_len[:-1]) - np.sum(v * neg_len))


def _points_and_mass(obj):
    if isinstance(obj, StepCDF):
        return obj.jump_points, obj.total_mass
    if isinstance(obj, Field1D):
        if obj.role != CDF:
            raise ValueError("only CDF-role fields can be compared")
        return obj.grid.nodes, float(obj.values[-1])
    raise TypeError(f"cannot compare objects of type {type(obj).__name__}")


def _eval(obj, x, left: bool):
    if isinstance(obj, StepCDF):
        return obj.left_limit(x) if left else obj.at(x)
    return obj.at(x)


def sup_distance(a, b, unnormalized: bool = False, include_left_limits: bool = False) -> float:
    """Kolmogorov-Smirnov distance between two CDFs (step functions or CDF fields).

    Both functions are evaluated at every jump point and grid node of either
    argument (step functions right-continuously, fields by linear
    interpolation). Between two step functions this is the exact supremum.
    With ``include_left_limits`` step functions are also compared through
    their left limits, which makes step-versus-field comparisons exact for
    the piecewise-linear reading of the field. Inputs must have total mass 1
    unless ``unnormalized`` is set.
    """
    pa, ma = _points_and_mass(a)
    pb, mb = _points_and_mass(b)
    if not unnormalized:
        for name, m in (("first", ma), ("second", mb)):
            if abs(m - 1.0) > 1e-12:
                raise ValueError(f"{name} argument has total mass {m:.6g}; pass unnormalized=True "
                                 "to compare measures that are not probability measures")
    pts = np.union1d(pa, pb)
    d = np.abs(_eval(a, pts, False) - _eval(b, pts, False)).max()
    if include_left_limits:
        d = max(d, np.abs(_eval(a, pts, True) - _eval(b, pts, True)).max())
    return float(d)


def histogram(measure: EmpiricalMeasure, bin_width: float, lo: float | None = None,
              hi: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-width histogram density (diagnostics only). Returns ``(edges, heights)``."""
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    a = measure.atoms
    lo = float(np.floor(a[0] / bin_width) * bin_width) if lo is None else lo
    hi = float(np.floor(a[-1] / bin_width) * bin_width + bin_width) if hi is None else hi
    edges = np.arange(lo, hi + 0.5 * bin_width, bin_width)
    counts, _ = np.histogram(a, bins=edges)
    return edges, counts / (measure.denominator * bin_width)
