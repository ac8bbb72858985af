"""Acceptance suite: every quantitative claim checked at desk scale.

``run_checks`` runs the numbered criteria, returns a pass/fail record per
criterion and the text of every data file the run produced. Each criterion
gets its own child seed of the master seed, so criteria can be run alone
without changing their numbers.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import experiments as ex
from .fkpp import (Grid1D, SQRT2, bramson_fit, cdf_from_density, density_from_function,
                   front_speed, heaviside_cdf, solve_fkpp_cdf, solve_fkpp_nonlocal_density,
                   wave_integral_identity)
from .lbprocess import LBParams, simulate_lb_chain, stationary_mean, stationary_pmf_array
from .measures import sup_distance
from .output import table_text
from .rng import child_seed, substream
from .simulator import SimConfig, run_coupled, run_gap_coupled

DEFAULT_SEED = 20240917


@dataclass(frozen=True)
class CheckSettings:
    """Sample sizes and horizons; defaults are the acceptance values."""

    chain_t_end: float = 100_000.0
    chain_burn_in: float = 100.0
    yule_replicates: int = 10_000
    fkpp_dx: float = 0.05
    fkpp_t_end: float = 80.0
    nonlocal_dx: float = 0.05
    hydro_replicates: int = 200
    hydro_K: tuple[int, ...] = (5, 20, 50)
    velocity_cs: tuple[float, ...] = (1.0, 0.5, 0.2)
    renewal_cycles: tuple[int, ...] = (20_000, 20_000, 8_000)
    direct_replicates: int = 400
    direct_horizon: float = 200.0
    coupled_runs: int = 1000
    coupled_t_end: float = 4.0
    gap_pairs: int = 1000
    gap_t_end: float = 5.0
    many_to_one_replicates: int = 100_000
    drift_replicates: int = 100_000

    @classmethod
    def quick(cls) -> "CheckSettings":
        """Reduced sizes for smoke runs; statistical verdicts are not meaningful."""
        return cls(chain_t_end=2000.0, yule_replicates=500, fkpp_dx=0.2, fkpp_t_end=80.0,
                   nonlocal_dx=0.1, hydro_replicates=20, renewal_cycles=(200, 200, 100),
                   direct_replicates=8, direct_horizon=50.0, coupled_runs=20, gap_pairs=20,
                   many_to_one_replicates=2000, drift_replicates=2000)


@dataclass
class CriterionResult:
    id: int
    name: str
    passed: bool
    runtime: float
    limit: float
    details: dict = field(default_factory=dict)

    @property
    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"[{verdict}] criterion {self.id:2d} {self.name} ({self.runtime:.1f}s / {self.limit:.0f}s)"


@dataclass
class ChecksReport:
    seed: int
    criteria: list[CriterionResult]
    files: dict[str, str]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "passed": self.passed,
            "criteria": [
                {"id": c.id, "name": c.name, "passed": c.passed, "runtime_s": round(c.runtime, 3),
                 "limit_s": c.limit, "details": c.details}
                for c in self.criteria
            ],
        }


def _tv(emp: dict[int, float], c: float) -> float:
    kmax = max(max(emp), 60)
    pmf = stationary_pmf_array(c, kmax)
    e = np.zeros(kmax)
    for k, p in emp.items():
        e[k - 1] = p
    return float(0.5 * np.abs(e - pmf).sum() + 0.5 * max(0.0, 1.0 - pmf.sum()))


def check_stationary_law(seed, s: CheckSettings, files, fmt):
    details, ok, rows = {}, True, []
    for i, c in enumerate((0.5, 1.0)):
        traj = simulate_lb_chain(LBParams(c), 1, s.chain_t_end, substream(seed, i))
        occ = traj.occupation(s.chain_burn_in)
        tv = _tv(occ, c)
        mean = traj.time_average(s.chain_burn_in)
        target = stationary_mean(c)
        rel = abs(mean - target) / target
        details[f"c={c}"] = {"tv": tv, "time_average": mean, "stationary_mean": target,
                             "relative_error": rel}
        ok &= tv < 0.02 and rel < 0.01
        pmf = stationary_pmf_array(c, max(occ))
        rows += [(c, k, occ.get(k, 0.0), float(pmf[k - 1])) for k in range(1, max(occ) + 1)]
    files[f"stationary_occupation.{fmt}"] = table_text(("c", "k", "occupation", "pmf"), rows, fmt)
    return ok, details


def discrete_ks(sample: np.ndarray, cdf) -> tuple[float, float]:
    """KS distance over the integers and its (conservative) Kolmogorov p-value."""
    sample = np.sort(np.asarray(sample))
    ks = np.arange(int(sample.min()) - 1, int(sample.max()) + 1)
    emp = np.searchsorted(sample, ks, side="right") / sample.size
    d = float(np.max(np.abs(emp - cdf(ks))))
    return d, float(stats.kstwo.sf(d, sample.size))


def check_yule(seed, s: CheckSettings, files, fmt):
    rng = substream(seed, 0)
    sizes = np.array([simulate_lb_chain(LBParams(0.0), 1, 1.0, rng).final_size
                      for _ in range(s.yule_replicates)])
    mean = float(sizes.mean())
    se = float(sizes.std(ddof=1) / math.sqrt(sizes.size))
    z = (mean - math.e) / se
    ks_d, ks_p = discrete_ks(sizes, stats.geom(math.exp(-1.0)).cdf)
    kmax = int(sizes.max())
    counts = np.bincount(sizes, minlength=kmax + 1)[1:]
    files[f"yule_sizes.{fmt}"] = table_text(
        ("k", "count", "geometric_pmf"),
        [(k, int(n), float(stats.geom(math.exp(-1.0)).pmf(k))) for k, n in enumerate(counts, 1)], fmt)
    return abs(z) < 3 and ks_p > 0.05, {"mean": mean, "stderr": se, "z": z,
                                         "ks_statistic": ks_d, "ks_pvalue": ks_p}


def _front_run(s: CheckSettings):
    grid = Grid1D.from_spacing(-30.0, 150.0, s.fkpp_dx)
    return solve_fkpp_cdf(heaviside_cdf(grid), s.fkpp_t_end, save_times=(40.0,), front_every=0.1)


def check_front_speed(sol, files, fmt):
    speed, intercept, resid = front_speed(sol.front, (20.0, 60.0))
    files[f"front.{fmt}"] = table_text(("t", "m"), zip(sol.front.times, sol.front.positions), fmt)
    f40 = sol.at_time(40.0)
    files[f"cdf_t40.{fmt}"] = table_text(("x", "F"), zip(f40.x, f40.values), fmt)
    lo, hi = SQRT2 - 0.03, SQRT2 + 0.03
    return lo <= speed <= hi, {"speed": speed, "band": [lo, hi], "intercept": intercept,
                               "rms_residual": resid, "dt": sol.dt, "max_clamp": sol.max_clamp}


def check_bramson(sol):
    coef = bramson_fit(sol.front, (20.0, 80.0))
    return -1.6 <= coef <= -0.6, {"log_coefficient": coef, "band": [-1.6, -0.6],
                                  "asymptotic": -3 / (2 * SQRT2)}


def check_wave_identity(sol):
    val = wave_integral_identity(sol.at_time(40.0))
    return abs(val - SQRT2) <= 0.05, {"integral": val, "target": SQRT2}


NONLOCAL_ICS = {
    "gaussian": lambda x: np.exp(-x ** 2 / 2),
    "uniform": lambda x: ((x >= -1) & (x <= 1)).astype(float),
    "bimodal": lambda x: np.exp(-(x + 3) ** 2) + 0.5 * np.exp(-(x - 2) ** 2 / 0.5),
}


def check_nonlocal(s: CheckSettings, files, fmt):
    grid = Grid1D.from_spacing(-30.0, 60.0, s.nonlocal_dx)
    details, ok, mass_rows = {}, True, []
    for name, f in NONLOCAL_ICS.items():
        ic = density_from_function(grid, f)
        dens = solve_fkpp_nonlocal_density(ic, 10.0, save_times=(5.0,), mass_every=0.1)
        ref = solve_fkpp_cdf(cdf_from_density(ic), 5.0)
        drift = float(np.abs(dens.masses - 1.0).max())
        d = sup_distance(cdf_from_density(dens.at_time(5.0)), ref.at_time(5.0), unnormalized=True)
        details[name] = {"max_mass_drift": drift, "sup_distance_t5": d}
        ok &= drift <= 1e-3 and d < 5e-3
        mass_rows += [(name, t, m) for t, m in zip(dens.mass_times, dens.masses)]
    files[f"nonlocal_mass.{fmt}"] = table_text(("initial_condition", "t", "mass"), mass_rows, fmt)
    return ok, details


def check_hydro(seed, s: CheckSettings, files, fmt):
    grid = Grid1D.from_spacing(-30.0, 30.0, 0.05)
    pde = solve_fkpp_cdf(heaviside_cdf(grid), 1.0, save_times=(0.0, 1.0))
    res = ex.hydrodynamic_study(1.0, s.hydro_K, 1.0, s.hydro_replicates, pde, seed)
    f1 = pde.at_time(1.0)
    files[f"cdf_t1.{fmt}"] = table_text(("x", "F"), zip(f1.x, f1.values), fmt)
    files[f"hydro.{fmt}"] = table_text(
        ("K", "t", "replicates", "sup_dist", "stderr", "argmax"),
        [(r.K, r.t, r.replicates, r.sup_dist_to_pde, r.stderr, r.argmax) for r in res], fmt)
    last = max(res, key=lambda r: r.K)
    trend = ex.hydro_trend_ok(res, 2.0)
    return trend and last.sup_dist_to_pde < 0.05, {
        "trend_ok": trend, "largest_K": last.K, "largest_K_distance": last.sup_dist_to_pde,
        "by_K": {str(r.K): {"sup_dist": r.sup_dist_to_pde, "stderr": r.stderr} for r in res}}


def check_velocity(seed, s: CheckSettings, files, fmt):
    rows, per_c = [], {}
    renewal, direct = {}, {}
    for i, (c, n) in enumerate(zip(s.velocity_cs, s.renewal_cycles)):
        renewal[c] = ex.velocity_renewal(c, n, child_seed(seed, i, 0))
        direct[c] = ex.velocity_direct(c, s.direct_horizon, s.direct_replicates, child_seed(seed, i, 1))
        r, dm, dn = renewal[c], direct[c].max_based, direct[c].min_based
        rows += [(c, r.v_hat, r.stderr, "renewal"), (c, dm.v_hat, dm.stderr, "direct_max"),
                 (c, dn.v_hat, dn.stderr, "direct_min")]
        per_c[str(c)] = {
            "renewal": [r.v_hat, r.stderr], "direct_max": [dm.v_hat, dm.stderr],
            "direct_min": [dn.v_hat, dn.stderr],
            "a_renewal_vs_direct_z": (r.v_hat - dm.v_hat) / ex.joint_se(r, dm),
            "b_max_vs_min_z": (dm.v_hat - dn.v_hat) / ex.joint_se(dm, dn),
        }
    files[f"velocity.{fmt}"] = table_text(("c", "v_hat", "stderr", "method"), rows, fmt)
    a = all(abs(v["a_renewal_vs_direct_z"]) <= 3 for v in per_c.values())
    b = all(abs(v["b_max_vs_min_z"]) <= 3 for v in per_c.values())
    order = sorted(s.velocity_cs, reverse=True)  # decreasing c
    c_ok = True
    for est in (renewal, {k: v.max_based for k, v in direct.items()}):
        for hi_c, lo_c in zip(order, order[1:]):
            c_ok &= est[lo_c].v_hat >= est[hi_c].v_hat - 2 * ex.joint_se(est[lo_c], est[hi_c])
    all_est = [e for c in s.velocity_cs for e in (renewal[c], direct[c].max_based, direct[c].min_based)]
    d = all(e.v_hat <= SQRT2 + 3 * e.stderr for e in all_est)
    return a and b and c_ok and d, {"a": a, "b": b, "c": c_ok, "d": d, "by_c": per_c}


def check_coupling(seed, s: CheckSettings, files, fmt):
    snaps_at = tuple(np.round(np.arange(0.5, s.coupled_t_end + 1e-9, 0.5), 10))
    violations = 0
    n_snaps = 0
    rows = []
    for r in range(s.coupled_runs):
        cfg = SimConfig(c=1.0, t_end=s.coupled_t_end, seed=child_seed(seed, r),
                        snapshot_times=snaps_at, coupling_enabled=True)
        for snap in run_coupled(cfg):
            n_snaps += 1
            everything = np.concatenate([snap.blue, snap.red])
            ok = snap.n_blue <= snap.n_total and snap.blue.max() <= everything.max()
            violations += not ok
            if r < 50:
                rows.append((r, snap.time, snap.n_blue, snap.n_total, float(snap.blue.max()),
                             float(everything.max())))
    files[f"coupling.{fmt}"] = table_text(
        ("run", "t", "n_blue", "n_total", "max_blue", "max_total"), rows, fmt)
    return violations == 0, {"runs": s.coupled_runs, "snapshots": n_snaps, "violations": violations}


def check_gap_monotonicity(seed, s: CheckSettings, files, fmt):
    violations = 0
    events = 0
    rows = []
    for r in range(s.gap_pairs):
        rng = substream(seed, r)
        n = int(max(2, rng.poisson(1.0) + 1))
        gb = rng.exponential(1.0, n - 1)
        ga = np.zeros(n - 1) if r % 2 == 0 else gb * rng.random(n - 1)
        a = np.concatenate(([0.0], np.cumsum(ga)))
        b = np.concatenate(([0.0], np.cumsum(gb)))
        traj = run_gap_coupled(SimConfig(c=1.0, t_end=s.gap_t_end), a, b, rng=rng)
        dom = traj.dominated()
        violations += dom.count(False)
        events += len(dom)
        rows.append((r, n, len(dom), dom.count(False)))
    files[f"gap_coupling.{fmt}"] = table_text(("pair", "n0", "records", "violations"), rows, fmt)
    return violations == 0, {"pairs": s.gap_pairs, "records": events, "violations": violations}


def check_many_to_one(seed, s: CheckSettings, files, fmt):
    details, ok, rows = {}, True, []
    for i, name in enumerate(("one", "x", "x2")):
        res = ex.many_to_one_check(1.0, name, s.many_to_one_replicates, child_seed(seed, i))
        details[name] = {"lhs": res.lhs, "rhs": res.rhs, "z": res.z_score, "stderr": res.stderr}
        ok &= res.passed
        rows.append((name, res.lhs, res.rhs, res.stderr, res.z_score))
    files[f"many_to_one.{fmt}"] = table_text(("functional", "lhs", "rhs", "stderr", "z"), rows, fmt)
    return ok, details


def check_drift(seed, s: CheckSettings, files, fmt):
    main = ex.mean_cdf_drift_check(1.0, 1, 0.0, 1.0, s.drift_replicates, child_seed(seed, 0))
    heat = ex.mean_cdf_drift_check(1000.0, 1, 0.5, 1.0, s.drift_replicates, child_seed(seed, 1), n0=1)
    rows = []
    for label, d in (("c=1,x=0", main), ("c=1000,n0=1,x=0.5", heat)):
        for route, r in (("cdf", d.cdf_route), ("mean", d.mean_route)):
            rows.append((label, route, r.lhs, r.rhs, r.stderr, r.z_score))
    files[f"drift.{fmt}"] = table_text(("case", "route", "lhs", "rhs", "stderr", "z"), rows, fmt)
    ok = (main.cdf_route.passed and main.mean_route.passed and heat.cdf_route.passed
          and abs(heat.heat_kernel_z) < 3)
    return ok, {
        "z_cdf_route": main.cdf_route.z_score, "z_mean_route": main.mean_route.z_score,
        "heat_case_z": heat.cdf_route.z_score, "heat_kernel_value": heat.heat_kernel,
        "heat_kernel_lhs": heat.cdf_route.lhs, "heat_kernel_z": heat.heat_kernel_z,
    }


CRITERIA = {
    1: ("stationary law", 30.0),
    2: ("Yule sanity", 30.0),
    3: ("FKPP minimal speed", 120.0),
    4: ("Bramson correction", 180.0),
    5: ("wave identity", 120.0),
    6: ("nonlocal solver", 120.0),
    7: ("hydrodynamic limit", 300.0),
    8: ("weak selection", 600.0),
    9: ("coupling invariants", 60.0),
    10: ("gap monotonicity", 60.0),
    11: ("many-to-one", 60.0),
    12: ("mean-CDF drift identity", 180.0),
}


def run_checks(seed: int = DEFAULT_SEED, settings: CheckSettings | None = None,
               only=None, fmt: str = "csv", log=None) -> ChecksReport:
    """Run criteria 1-12 (or the subset ``only``) and collect their data files."""
    s = settings or CheckSettings()
    wanted = sorted(CRITERIA if only is None else only)
    unknown = set(wanted) - set(CRITERIA)
    if unknown:
        raise ValueError(f"unknown criteria {sorted(unknown)}")
    files: dict[str, str] = {}
    results: list[CriterionResult] = []

    def record(cid, fn):
        name, limit = CRITERIA[cid]
        t0 = time.perf_counter()
        ok, details = fn()
        dt = time.perf_counter() - t0
        res = CriterionResult(cid, name, bool(ok) and dt < limit, dt, limit, details)
        results.append(res)
        if log is not None:
            log(res.line)

    cs = lambda cid: child_seed(seed, cid)
    front_sol = {}

    def front():
        if "sol" not in front_sol:
            t0 = time.perf_counter()
            front_sol["sol"] = _front_run(s)
            front_sol["time"] = time.perf_counter() - t0
        return front_sol["sol"]

    for cid in wanted:
        if cid == 1:
            record(1, lambda: check_stationary_law(cs(1), s, files, fmt))
        elif cid == 2:
            record(2, lambda: check_yule(cs(2), s, files, fmt))
        elif cid == 3:
            record(3, lambda: check_front_speed(front(), files, fmt))
        elif cid == 4:
            record(4, lambda: check_bramson(front()))
        elif cid == 5:
            record(5, lambda: check_wave_identity(front()))
        elif cid == 6:
            record(6, lambda: check_nonlocal(s, files, fmt))
        elif cid == 7:
            record(7, lambda: check_hydro(cs(7), s, files, fmt))
        elif cid == 8:
            record(8, lambda: check_velocity(cs(8), s, files, fmt))
        elif cid == 9:
            record(9, lambda: check_coupling(cs(9), s, files, fmt))
        elif cid == 10:
            record(10, lambda: check_gap_monotonicity(cs(10), s, files, fmt))
        elif cid == 11:
            record(11, lambda: check_many_to_one(cs(11), s, files, fmt))
        elif cid == 12:
            record(12, lambda: check_drift(cs(12), s, files, fmt))
    return ChecksReport(seed, results, files)
