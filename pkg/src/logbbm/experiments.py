"""Monte Carlo studies built on the simulator and the PDE solvers.

Every study takes a master seed and derives one substream per replicate,
cycle or block of replicates, so results do not depend on execution order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EventBudgetError, NoiseFloorError
from .fkpp import FKPPSolution, heaviside_cdf
from .lbprocess import LBParams, sample_stationary
from .measures import COUNT, MASS, StepCDF, average_cdfs, cdf, empirical_measure, sup_distance
from .rng import substream
from .simulator import PopulationState, advance_to_next_event, run_until

SQRT2 = math.sqrt(2.0)
BLOCK = 1000


@dataclass(frozen=True)
class RenewalRecord:
    duration: float
    max_increment: float
    cycle_index: int
    events: int = 0
    max_abs_position: float = 0.0

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("cycle duration must be positive")


@dataclass(frozen=True)
class VelocityEstimate:
    c: float
    v_hat: float
    stderr: float
    method: str
    statistic: str = "max"
    n_cycles: int | None = None
    t_horizon: float | None = None
    replicates: int | None = None

    def __post_init__(self):
        if not self.stderr >= 0:
            raise ValueError("stderr must be nonnegative")


def joint_se(a: VelocityEstimate, b: VelocityEstimate) -> float:
    return math.hypot(a.stderr, b.stderr)


def sample_renewal_cycle(c: float, rng, cycle_index: int = 0,
                         event_budget: int = 1_000_000) -> RenewalRecord:
    """One regeneration cycle from a single particle at the origin.

    An independent Exp(1) holding time is run first; the cycle then ends
    at the first time the population is back to one particle. ``M`` is the
    survivor's position, i.e. the displacement of the maximum over the
    cycle. The largest ``|max position|`` seen at event times is kept as a
    diagnostic.
    """
    if not c > 0:
        raise ValueError("renewal cycles need c > 0")
    params = LBParams(c)
    state = PopulationState([0.0])
    hold = rng.standard_exponential()
    events = 0
    peak = 0.0
    while True:
        _, mark = advance_to_next_event(state, params, rng, horizon=hold)
        if mark is None:
            break
        events += 1
        peak = max(peak, abs(float(state.blue_positions.max())))
        if events > event_budget:
            raise EventBudgetError(f"cycle {cycle_index} used more than {event_budget} events")
    while state.n_blue > 1:
        advance_to_next_event(state, params, rng)
        events += 1
        peak = max(peak, abs(float(state.blue_positions.max())))
        if events > event_budget:
            raise EventBudgetError(f"cycle {cycle_index} used more than {event_budget} events")
    return RenewalRecord(state.time, float(state.blue_positions[0]), cycle_index, events, peak)


def renewal_cycles(c: float, n_cycles: int, seed: int, event_budget: int = 1_000_000,
                   stream: int = 0) -> list[RenewalRecord]:
    return [sample_renewal_cycle(c, substream(seed, stream, i), i, event_budget)
            for i in range(n_cycles)]


def ratio_estimate(M: np.ndarray, T: np.ndarray) -> tuple[float, float]:
    """``mean(M) / mean(T)`` with its delta-method standard error."""
    n = M.size
    mt = T.mean()
    v = M.mean() / mt
    cov = np.cov(M, T, ddof=1)
    var = (cov[0, 0] - 2 * v * cov[0, 1] + v * v * cov[1, 1]) / (n * mt * mt)
    return float(v), float(math.sqrt(max(var, 0.0)))


def velocity_renewal(c: float, n_cycles: int, seed: int, event_budget: int = 1_000_000,
                     records: list[RenewalRecord] | None = None) -> VelocityEstimate:
    if n_cycles < 100:
        raise ValueError("velocity_renewal needs at least 100 cycles")
    if records is None:
        records = renewal_cycles(c, n_cycles, seed, event_budget)
    M = np.array([r.max_increment for r in records])
    T = np.array([r.duration for r in records])
    v, se = ratio_estimate(M, T)
    return VelocityEstimate(c, v, se, "renewal", "max", n_cycles=len(records))


@dataclass(frozen=True)
class DirectVelocity:
    max_based: VelocityEstimate
    min_based: VelocityEstimate
    final_max: np.ndarray = field(repr=False)
    final_min: np.ndarray = field(repr=False)

    @property
    def gap(self) -> float:
        return self.max_based.v_hat - self.min_based.v_hat

    @property
    def paired_gap_se(self) -> float:
        d = (self.final_max - self.final_min) / self.max_based.t_horizon
        return float(d.std(ddof=1) / math.sqrt(d.size))


def velocity_direct(c: float, t_horizon: float, replicates: int, seed: int,
                    stream: int = 1, max_particles: int = 1_000_000,
                    min_horizon: float = 50.0) -> DirectVelocity:
    """Front velocity from the rightmost and the leftmost particle at ``t_horizon``.

    Each replicate starts from the stationary number of particles at the
    origin (one particle when ``c = 0``). The max-based and min-based
    estimates come from disjoint halves of the replicates, so their
    standard errors combine in quadrature.
    """
    if t_horizon < min_horizon:
        raise ValueError(f"t_horizon must be at least {min_horizon}")
    if replicates < 4:
        raise ValueError("need at least 4 replicates")
    params = LBParams(c)
    hi, lo = [], []
    for r in range(replicates):
        rng = substream(seed, stream, r)
        n0 = 1 if c == 0 else sample_stationary(c, rng)
        state = PopulationState(np.zeros(n0))
        run_until(state, t_horizon, params, rng, max_particles=max_particles)
        x = state.blue_positions
        hi.append(float(x.max()))
        lo.append(float(x.min()))
    hi_a, lo_a = np.array(hi), np.array(lo)
    half = replicates // 2
    a = hi_a[:half] / t_horizon
    b = lo_a[half:] / t_horizon
    est_max = VelocityEstimate(c, float(a.mean()), float(a.std(ddof=1) / math.sqrt(a.size)),
                               "direct", "max", t_horizon=t_horizon, replicates=a.size)
    est_min = VelocityEstimate(c, float(b.mean()), float(b.std(ddof=1) / math.sqrt(b.size)),
                               "direct", "min", t_horizon=t_horizon, replicates=b.size)
    return DirectVelocity(est_max, est_min, hi_a, lo_a)


def bbm_max_mean_from_pde(solution: FKPPSolution, t: float) -> float:
    """Mean of the branching Brownian motion maximum at ``t`` from the Heaviside FKPP run.

    The distribution function of the maximum solves the CDF FKPP equation
    from ``1{x >= 0}``, so the mean is read off the saved field.
    """
    f = solution.at_time(t)
    F = f.values
    if F[0] != 0.0 or F[-1] != 1.0:
        raise ValueError("the field must be pinned at 0 and 1 at the grid ends")
    # E[X] = x_min + int_{x_min}^{x_max} (1 - F) when F vanishes below x_min
    tail = 1.0 - F
    return float(f.grid.x_min + f.grid.dx * (tail.sum() - 0.5 * (tail[0] + tail[-1])))


# ---------------------------------------------------------------------------
# Hydrodynamic limit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HydroResult:
    K: int
    t: float
    replicates: int
    mean_cdf: StepCDF = field(repr=False)
    sup_dist_to_pde: float
    stderr: float
    argmax: float
    normalization: str = MASS

    def __post_init__(self):
        if not 0.0 <= self.sup_dist_to_pde <= 1.0 + 1e-12 and self.normalization == COUNT:
            raise ValueError("sup distance of probability CDFs must lie in [0, 1]")


def _check_heaviside_reference(pde_ref: FKPPSolution) -> None:
    first = min(pde_ref.fields, key=lambda f: f.time)
    if first.time != 0.0:
        raise ValueError("the PDE reference must include its initial field")
    if not np.array_equal(first.values, heaviside_cdf(first.grid).values):
        raise ValueError("particles start at the origin, but the PDE reference "
                         "does not start from the Heaviside CDF")


def hydrodynamic_study(c: float, K_list, t: float, replicates: int, pde_ref: FKPPSolution,
                       seed: int, normalization: str = MASS, stream: int = 2,
                       max_particles: int = 1_000_000) -> list[HydroResult]:
    """Mean empirical CDF at time ``t`` versus the PDE solution, for each ``K``.

    Every replicate draws its initial count from the stationary law at rate
    ``c / K`` and places all particles at the origin.
    """
    _check_heaviside_reference(pde_ref)
    target = pde_ref.at_time(t) if t > 0 else min(pde_ref.fields, key=lambda f: f.time)
    out = []
    for ki, K in enumerate(K_list):
        c_K = c / K
        params = LBParams(c_K)
        cdfs = []
        for r in range(replicates):
            rng = substream(seed, stream, ki, r)
            state = PopulationState(np.zeros(sample_stationary(c_K, rng)))
            run_until(state, t, params, rng, max_particles=max_particles)
            cdfs.append(cdf(empirical_measure(state, normalization, c_K)))
        mean = average_cdfs(cdfs)
        d = sup_distance(mean, target, unnormalized=True)
        # standard error of the mean CDF at the point where the distance is attained
        pts = np.union1d(mean.jump_points, target.grid.nodes)
        gap = np.abs(mean.at(pts) - target.at(pts))
        x_star = float(pts[int(np.argmax(gap))])
        vals = np.array([cd.at(x_star) for cd in cdfs])
        se = float(vals.std(ddof=1) / math.sqrt(replicates)) if replicates > 1 else 0.0
        out.append(HydroResult(int(K), float(t), replicates, mean, d, se, x_star, normalization))
    return out


def hydro_trend_ok(results: list[HydroResult], n_se: float = 2.0) -> bool:
    """Sup distance nonincreasing in ``K`` up to ``n_se`` combined standard errors."""
    rs = sorted(results, key=lambda r: r.K)
    return all(b.sup_dist_to_pde <= a.sup_dist_to_pde + n_se * math.hypot(a.stderr, b.stderr)
               for a, b in zip(rs, rs[1:]))


# ---------------------------------------------------------------------------
# Many-to-one
# ---------------------------------------------------------------------------

GAUSSIAN_MEANS = {
    "one": (lambda x: np.ones_like(x), lambda t: 1.0),
    "x": (lambda x: x, lambda t: 0.0),
    "x2": (lambda x: x * x, lambda t: t),
    "cos": (np.cos, lambda t: math.exp(-t / 2.0)),
}


@dataclass(frozen=True)
class CheckResult:
    lhs: float
    rhs: float
    z_score: float
    stderr: float
    lhs_stderr: float = math.nan

    @property
    def passed(self) -> bool:
        return abs(self.z_score) < 3.0


def _z(diff: float, se: float) -> float:
    if se == 0.0:
        return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    return diff / se


def many_to_one_check(t: float, functional: str, replicates: int, seed: int,
                      stream: int = 3, max_particles: int = 1_000_000) -> CheckResult:
    """Sum of a functional over all particles of a branching Brownian motion.

    The Monte Carlo mean of ``sum_u f(X_u(t))`` from one particle at the
    origin is compared with ``e^t E[f(B_t)]``.
    """
    if functional not in GAUSSIAN_MEANS:
        raise ValueError(f"unsupported functional {functional!r}; choose from {sorted(GAUSSIAN_MEANS)}")
    f, gauss = GAUSSIAN_MEANS[functional]
    params = LBParams(0.0)
    vals = np.empty(replicates)
    for r in range(replicates):
        if r % BLOCK == 0:
            rng = substream(seed, stream, r // BLOCK)
        state = PopulationState([0.0])
        run_until(state, t, params, rng, max_particles=max_particles)
        vals[r] = float(np.sum(f(state.blue_positions)))
    lhs = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(replicates))
    rhs = math.exp(t) * gauss(t)
    return CheckResult(lhs, rhs, _z(lhs - rhs, se), se)


# ---------------------------------------------------------------------------
# Drift identity for the mean count-normalized CDF
# ---------------------------------------------------------------------------

LAPLACIAN_5 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


@dataclass(frozen=True)
class DriftCheck:
    cdf_route: CheckResult
    mean_route: CheckResult
    heat_kernel: float | None = None

    @property
    def heat_kernel_z(self) -> float | None:
        """z-score of the finite-difference time derivative against the Gaussian value."""
        if self.heat_kernel is None:
            return None
        return _z(self.cdf_route.lhs - self.heat_kernel, self.cdf_route.lhs_stderr)


def _fraction_le(x_sorted: np.ndarray, probes: np.ndarray) -> np.ndarray:
    return np.searchsorted(x_sorted, probes, side="right") / x_sorted.size


def mean_cdf_drift_check(c: float, K: int, x_probe: float, t: float, replicates: int, seed: int,
                         dt_probe: float = 0.05, dx_probe: float = 0.2, n0: int | None = None,
                         stream: int = 4) -> DriftCheck:
    """Check the evolution equation of the mean count-normalized CDF at one point.

    The time derivative is a central difference over ``t +- dt_probe`` on the
    same paths; the right side averages half a five-point Laplacian of the
    step CDF minus the competition term ``c_K N^2/(N-1) (F - F^2)``. Both are
    computed per replicate and the paired difference gives the z-score.
    A second route checks the drift of the empirical mean against the
    gap-weighted competition sum.
    """
    if not t > dt_probe:
        raise ValueError("t must exceed dt_probe")
    floor = 1.0 / math.sqrt(replicates)
    if dx_probe ** 2 < floor or dt_probe < floor:
        raise NoiseFloorError(
            f"stencil (dt={dt_probe}, dx={dx_probe}) is below the Monte Carlo noise floor "
            f"for {replicates} replicates; increase replicates to at least "
            f"{math.ceil(max(dx_probe ** -4, dt_probe ** -2))}")
    c_K = c / K
    params = LBParams(c_K)
    probes = x_probe + dx_probe * np.arange(-2, 3)
    h = dt_probe
    d_cdf = np.empty(replicates)
    d_mean = np.empty(replicates)
    lhs_c = np.empty(replicates)
    lhs_m = np.empty(replicates)
    for r in range(replicates):
        if r % BLOCK == 0:
            rng = substream(seed, stream, r // BLOCK)
        n_init = n0 if n0 is not None else sample_stationary(c_K, rng)
        state = PopulationState(np.zeros(n_init))
        run_until(state, t - h, params, rng)
        x = np.sort(state.blue_positions)
        f_before = np.searchsorted(x, x_probe, side="right") / x.size
        mean_before = x.mean()
        run_until(state, t, params, rng)
        x = np.sort(state.blue_positions)
        n = x.size
        F = _fraction_le(x, probes)
        f_mid = F[2]
        rhs = 0.5 * float(LAPLACIAN_5 @ F) / dx_probe ** 2
        gap_sum = 0.0
        if n > 1:
            rhs -= c_K * n * n / (n - 1) * (f_mid - f_mid * f_mid)
            j = np.arange(1, n)
            gap_sum = c_K * float(np.sum(j * (n - j) * np.diff(x))) / (n - 1)
        run_until(state, t + h, params, rng)
        x = state.blue_positions
        f_after = np.count_nonzero(x <= x_probe) / x.size
        lhs = (f_after - f_before) / (2 * h)
        lhs_c[r] = lhs
        d_cdf[r] = lhs - rhs
        lm = (x.mean() - mean_before) / (2 * h)
        lhs_m[r] = lm
        d_mean[r] = lm - gap_sum

    def summarize(lhs_vals, diffs):
        se = float(diffs.std(ddof=1) / math.sqrt(replicates))
        lhs = float(lhs_vals.mean())
        rhs = lhs - float(diffs.mean())
        lhs_se = float(lhs_vals.std(ddof=1) / math.sqrt(replicates))
        return CheckResult(lhs, rhs, _z(float(diffs.mean()), se), se, lhs_se)

    heat = None
    if n0 == 1 and c_K >= 100:
        # a lone particle: the mean CDF is the Gaussian CDF, d/dt Phi(x/sqrt t)
        heat = -x_probe * math.exp(-x_probe ** 2 / (2 * t)) / (2 * t * math.sqrt(2 * math.pi * t))
    return DriftCheck(summarize(lhs_c, d_cdf), summarize(lhs_m, d_mean), heat)
