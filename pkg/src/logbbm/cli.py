"""Command-line entry point.

    logbbm <command> --config FILE [--seed N] [--out DIR] [--format csv|jsonl]

The config file is a flat JSON object. Keys not known to the command are
rejected. Command-line flags override the file. Results are staged in a
temporary directory and moved into place only when the command succeeds.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import shutil
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from . import checks as checks_mod
from . import experiments as ex
from .fkpp import (Grid1D, bramson_fit, cdf_from_density, density_from_function, front_speed,
                   heaviside_cdf, solve_fkpp_cdf, solve_fkpp_nonlocal_density,
                   wave_integral_identity)
from .output import json_text, table_text
from .rng import child_seed
from .simulator import InitialCondition, SimConfig, run_gap_coupled, simulate

COMMANDS = ("simulate", "couple", "gaps", "pde-cdf", "pde-nonlocal", "velocity", "hydro", "checks")
FORMATS = ("csv", "jsonl")
EXIT_OK, EXIT_FAILED_CHECKS, EXIT_ERROR = 0, 1, 2


class ConfigError(ValueError):
    pass


# -- validators --------------------------------------------------------------

def _num(name, v, lo=None, hi=None, strict_lo=False, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{name}: expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{name}: expected an integer, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(f"{name}: must be finite")
    if lo is not None and (v <= lo if strict_lo else v < lo):
        raise ConfigError(f"{name}: must be {'>' if strict_lo else '>='} {lo}, got {v!r}")
    if hi is not None and v > hi:
        raise ConfigError(f"{name}: must be <= {hi}, got {v!r}")
    return int(v) if integer else float(v)


def nonneg(name, v):
    return _num(name, v, 0.0)


def positive(name, v):
    return _num(name, v, 0.0, strict_lo=True)


def pos_int(name, v):
    return _num(name, v, 1, integer=True)


def opt_pos_int(name, v):
    return None if v is None else pos_int(name, v)


def opt_positive(name, v):
    return None if v is None else positive(name, v)


def real(name, v):
    return _num(name, v)


def boolean(name, v):
    if not isinstance(v, bool):
        raise ConfigError(f"{name}: expected true or false, got {v!r}")
    return v


def num_list(check):
    def validate(name, v):
        if not isinstance(v, (list, tuple)):
            raise ConfigError(f"{name}: expected a list, got {v!r}")
        return [check(f"{name}[{i}]", x) for i, x in enumerate(v)]
    return validate


def window(name, v):
    vals = num_list(nonneg)(name, v)
    if len(vals) != 2 or not vals[0] < vals[1]:
        raise ConfigError(f"{name}: expected [start, end] with start < end")
    return vals


def choice(*options):
    def validate(name, v):
        if v not in options:
            raise ConfigError(f"{name}: expected one of {list(options)}, got {v!r}")
        return v
    return validate


def seed_value(name, v):
    v = _num(name, v, 0, integer=True)
    if v >= 2 ** 64:
        raise ConfigError(f"{name}: must fit in 64 bits")
    return v


# -- per-command parameter tables (key -> (default, validator)) ---------------

_PARTICLES = {
    "c": (1.0, nonneg),
    "K": (1, pos_int),
    "t_end": (1.0, positive),
    "snapshot_times": ([], num_list(nonneg)),
    "n0": (None, opt_pos_int),
    "initial_condition": ("origin", choice("origin", "positions", "normal", "uniform")),
    "positions": ([], num_list(real)),
    "ic_scale": (1.0, positive),
    "max_particles": (1_000_000, pos_int),
}
_GRID = {
    "x_min": (-30.0, real),
    "x_max": (150.0, real),
    "dx": (0.05, positive),
    "dt": (None, opt_positive),
}

PARAMETERS: dict[str, dict[str, tuple[Any, Callable]]] = {
    "simulate": dict(_PARTICLES),
    "couple": dict(_PARTICLES),
    "gaps": {
        "c": (1.0, positive),
        "t_end": (5.0, positive),
        "init_a": ([0.0, 0.0, 0.0], num_list(real)),
        "init_b": ([0.0, 1.0, 2.5], num_list(real)),
        "substep": (0.01, positive),
    },
    "pde-cdf": {
        **_GRID,
        "t_end": (80.0, positive),
        "save_times": ([], num_list(nonneg)),
        "front_every": (0.1, positive),
        "level": (0.5, lambda n, v: _num(n, v, 0.0, 1.0, strict_lo=True)),
        "speed_window": ([20.0, 60.0], window),
        "bramson_window": ([20.0, 80.0], window),
    },
    "pde-nonlocal": {
        **_GRID,
        "x_max": (60.0, real),
        "t_end": (5.0, positive),
        "save_times": ([], num_list(nonneg)),
        "initial_density": ("gaussian", choice(*checks_mod.NONLOCAL_ICS)),
    },
    "velocity": {
        "c_list": ([1.0, 0.5, 0.2], num_list(positive)),
        "method": ("both", choice("renewal", "direct", "both")),
        "n_cycles": (2000, lambda n, v: _num(n, v, 100, integer=True)),
        "replicates": (200, lambda n, v: _num(n, v, 4, integer=True)),
        "t_horizon": (200.0, lambda n, v: _num(n, v, 50.0)),
        "event_budget": (1_000_000, pos_int),
    },
    "hydro": {
        "c": (1.0, positive),
        "K_list": ([5, 20, 50], num_list(pos_int)),
        "t": (1.0, nonneg),
        "replicates": (200, lambda n, v: _num(n, v, 2, integer=True)),
        "normalization": ("mass", choice("mass", "count")),
        "x_min": (-30.0, real),
        "x_max": (30.0, real),
        "dx": (0.05, positive),
    },
    "checks": {
        "criteria": (list(range(1, 13)), num_list(lambda n, v: _num(n, v, 1, 12, integer=True))),
        "determinism_rerun": (True, boolean),
        "quick": (False, boolean),
    },
}
COMMON = {"command", "seed", "output_dir", "format"}


@dataclass
class RunConfig:
    command: str
    parameters: dict = field(default_factory=dict)
    seed: int = 0
    output_dir: str = "logbbm-out"
    format: str = "csv"

    def echo(self) -> dict:
        return {"command": self.command, "seed": self.seed, "output_dir": self.output_dir,
                "format": self.format, **self.parameters}


def parse_config(raw: dict, overrides: dict | None = None) -> RunConfig:
    """Validate a flat config mapping (plus flag overrides) into a ``RunConfig``."""
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")
    data = dict(raw)
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    command = data.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"command: unknown command {command!r}; choose from {list(COMMANDS)}")
    table = PARAMETERS[command]
    for key in data:
        if key not in table and key not in COMMON:
            raise ConfigError(f"{key}: unknown key for command {command!r}")
    params = {}
    for key, (default, validate) in table.items():
        params[key] = validate(key, data[key]) if key in data else default
    _cross_validate(command, params)
    fmt = data.get("format", "csv")
    if fmt not in FORMATS:
        raise ConfigError(f"format: expected one of {list(FORMATS)}, got {fmt!r}")
    out = data.get("output_dir", "logbbm-out")
    if not isinstance(out, str) or not out:
        raise ConfigError("output_dir: expected a nonempty path string")
    return RunConfig(command, params, seed_value("seed", data.get("seed", 0)), out, fmt)


def _cross_validate(command: str, p: dict) -> None:
    if command in ("simulate", "couple"):
        if any(s > p["t_end"] for s in p["snapshot_times"]):
            raise ConfigError("snapshot_times: must lie in [0, t_end]")
        if p["snapshot_times"] != sorted(p["snapshot_times"]):
            raise ConfigError("snapshot_times: must be sorted")
        if p["initial_condition"] == "positions" and not p["positions"]:
            raise ConfigError("positions: required (nonempty) for initial_condition 'positions'")
        if p["c"] == 0 and p["n0"] is None and p["initial_condition"] != "positions":
            raise ConfigError("n0: required when c = 0 (no stationary law)")
    if command in ("pde-cdf", "pde-nonlocal", "hydro"):
        if not p["x_min"] < p["x_max"]:
            raise ConfigError("x_max: must exceed x_min")
    if command in ("pde-cdf", "pde-nonlocal"):
        if p["dt"] is not None and p["dt"] > 0.9 * p["dx"] ** 2:
            raise ConfigError(f"dt: must be <= 0.9*dx^2 = {0.9 * p['dx'] ** 2:.6g}")
        if any(s > p["t_end"] for s in p["save_times"]):
            raise ConfigError("save_times: must lie in [0, t_end]")
    if command == "gaps" and len(p["init_a"]) != len(p["init_b"]):
        raise ConfigError("init_b: must have as many particles as init_a")


# -- commands ----------------------------------------------------------------

def _tname(t: float) -> str:
    return f"{t:g}"


def _sim_config(cfg: RunConfig, coupled: bool) -> SimConfig:
    p = cfg.parameters
    kind = p["initial_condition"]
    ic = (InitialCondition.explicit(p["positions"]) if kind == "positions"
          else InitialCondition(kind=kind, scale=p["ic_scale"]))
    return SimConfig(c=p["c"], K=p["K"], t_end=p["t_end"], seed=cfg.seed,
                     snapshot_times=tuple(p["snapshot_times"]), initial_condition=ic, n0=p["n0"],
                     coupling_enabled=coupled, max_particles=p["max_particles"])


def cmd_simulate(cfg: RunConfig, coupled: bool = False):
    sim = _sim_config(cfg, coupled)
    snaps = []
    final = simulate(sim, snapshot_sink=snaps.append)
    if not snaps or snaps[-1].time != final.time:
        snaps.append(final.snapshot())
    rows = []
    for s in snaps:
        rows += [(s.time, "blue", float(x)) for x in s.blue]
        rows += [(s.time, "red", float(x)) for x in s.red]
    files = {f"snapshots.{cfg.format}": table_text(("t", "color", "x"), rows, cfg.format)}
    summary = {"snapshots": [{"t": s.time, "n_blue": s.n_blue, "n_total": s.n_total,
                              "max_blue": float(s.blue.max()), "min_blue": float(s.blue.min())}
                             for s in snaps]}
    ok = True
    if coupled:
        ok = all(s.n_blue <= s.n_total and s.blue.max() <= np.concatenate([s.blue, s.red]).max()
                 for s in snaps)
        summary["dominations_hold"] = ok
    return files, summary, ok


def cmd_gaps(cfg: RunConfig):
    p = cfg.parameters
    traj = run_gap_coupled(SimConfig(c=p["c"], t_end=p["t_end"], seed=cfg.seed),
                           p["init_a"], p["init_b"], substep=p["substep"])
    rows = []
    for i, (t, a, b) in enumerate(zip(traj.times, traj.gaps_a, traj.gaps_b)):
        rows += [(i, t, j + 1, float(ga), float(gb)) for j, (ga, gb) in enumerate(zip(a, b))]
    files = {f"gaps.{cfg.format}": table_text(("event", "t", "rank", "gap_a", "gap_b"), rows, cfg.format)}
    return files, {"records": len(traj.times), "dominated": traj.all_dominated}, traj.all_dominated


def _grid(p) -> Grid1D:
    return Grid1D.from_spacing(p["x_min"], p["x_max"], p["dx"])


def cmd_pde_cdf(cfg: RunConfig):
    p = cfg.parameters
    sol = solve_fkpp_cdf(heaviside_cdf(_grid(p)), p["t_end"], p["dt"], save_times=p["save_times"],
                         front_every=p["front_every"], level=p["level"])
    files = {}
    for f in sol.fields:
        files[f"cdf_t{_tname(f.time)}.{cfg.format}"] = table_text(("x", "F"), zip(f.x, f.values), cfg.format)
    files[f"front.{cfg.format}"] = table_text(("t", "m"), zip(sol.front.times, sol.front.positions), cfg.format)
    summary = {"dt": sol.dt, "max_clamp": sol.max_clamp, "level": p["level"],
               "wave_integral_final": wave_integral_identity(sol.fields[-1])}
    try:
        speed, intercept, resid = front_speed(sol.front, p["speed_window"])
        summary.update(speed=speed, speed_intercept=intercept, speed_rms_residual=resid)
        summary["bramson_coefficient"] = bramson_fit(sol.front, p["bramson_window"])
    except ValueError as err:
        summary["fit_skipped"] = str(err)
    return files, summary, True


def cmd_pde_nonlocal(cfg: RunConfig):
    p = cfg.parameters
    ic = density_from_function(_grid(p), checks_mod.NONLOCAL_ICS[p["initial_density"]])
    sol = solve_fkpp_nonlocal_density(ic, p["t_end"], p["dt"], save_times=p["save_times"])
    files = {}
    for f in sol.fields:
        tn = _tname(f.time)
        files[f"density_t{tn}.{cfg.format}"] = table_text(("x", "u"), zip(f.x, f.values), cfg.format)
        F = cdf_from_density(f)
        files[f"cdf_t{tn}.{cfg.format}"] = table_text(("x", "F"), zip(F.x, F.values), cfg.format)
    files[f"mass.{cfg.format}"] = table_text(("t", "mass"), zip(sol.mass_times, sol.masses), cfg.format)
    return files, {"dt": sol.dt, "final_mass": float(sol.masses[-1]),
                   "max_clamp": sol.max_clamp}, True


def cmd_velocity(cfg: RunConfig):
    p = cfg.parameters
    rows, summary = [], {}
    for i, c in enumerate(p["c_list"]):
        entry = {}
        if p["method"] in ("renewal", "both"):
            r = ex.velocity_renewal(c, p["n_cycles"], child_seed(cfg.seed, i, 0),
                                    p["event_budget"])
            rows.append((c, r.v_hat, r.stderr, "renewal"))
            entry["renewal"] = {"v_hat": r.v_hat, "stderr": r.stderr, "n_cycles": r.n_cycles}
        if p["method"] in ("direct", "both"):
            d = ex.velocity_direct(c, p["t_horizon"], p["replicates"],
                                   child_seed(cfg.seed, i, 1))
            rows += [(c, d.max_based.v_hat, d.max_based.stderr, "direct_max"),
                     (c, d.min_based.v_hat, d.min_based.stderr, "direct_min")]
            entry["direct_max"] = {"v_hat": d.max_based.v_hat, "stderr": d.max_based.stderr}
            entry["direct_min"] = {"v_hat": d.min_based.v_hat, "stderr": d.min_based.stderr}
        summary[_tname(c)] = entry
    return {f"velocity.{cfg.format}": table_text(("c", "v_hat", "stderr", "method"), rows, cfg.format)}, \
        summary, True


def cmd_hydro(cfg: RunConfig):
    p = cfg.parameters
    grid = Grid1D.from_spacing(p["x_min"], p["x_max"], p["dx"])
    pde = solve_fkpp_cdf(heaviside_cdf(grid), p["t"], save_times=(0.0, p["t"]))
    res = ex.hydrodynamic_study(p["c"], p["K_list"], p["t"], p["replicates"], pde, cfg.seed,
                                normalization=p["normalization"])
    target = pde.at_time(p["t"])
    files = {f"cdf_t{_tname(p['t'])}.{cfg.format}": table_text(("x", "F"), zip(target.x, target.values), cfg.format)}
    for r in res:
        files[f"mean_cdf_K{r.K}.{cfg.format}"] = table_text(
            ("x", "F"), zip(r.mean_cdf.jump_points, r.mean_cdf.values), cfg.format)
    files[f"hydro.{cfg.format}"] = table_text(
        ("K", "t", "replicates", "sup_dist", "stderr", "argmax"),
        [(r.K, r.t, r.replicates, r.sup_dist_to_pde, r.stderr, r.argmax) for r in res], cfg.format)
    summary = {"trend_ok": ex.hydro_trend_ok(res),
               "by_K": {str(r.K): {"sup_dist": r.sup_dist_to_pde, "stderr": r.stderr} for r in res}}
    return files, summary, True


def cmd_checks(cfg: RunConfig, log=None):
    p = cfg.parameters
    settings = checks_mod.CheckSettings.quick() if p["quick"] else checks_mod.CheckSettings()
    report = checks_mod.run_checks(cfg.seed, settings, p["criteria"], cfg.format, log=log)
    summary = report.summary()
    timings = {str(c["id"]): c.pop("runtime_s") for c in summary["criteria"]}
    if p["determinism_rerun"]:
        t0 = time.perf_counter()
        again = checks_mod.run_checks(cfg.seed, settings, p["criteria"], cfg.format)
        same = again.files == report.files
        dt = time.perf_counter() - t0
        differing = sorted(k for k in set(report.files) | set(again.files)
                           if report.files.get(k) != again.files.get(k))
        res = checks_mod.CriterionResult(13, "determinism", same, dt, math.inf,
                                         {"files_compared": len(report.files), "differing": differing})
        if log is not None:
            log(res.line)
        summary["criteria"].append({"id": 13, "name": res.name, "passed": same, "limit_s": None,
                                    "details": res.details})
        timings["13"] = round(dt, 3)
        summary["passed"] = summary["passed"] and same
    return report.files, summary, summary["passed"], timings


# -- dispatch ----------------------------------------------------------------

def _version() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True, text=True,
                             timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _threads() -> int | None:
    raw = os.environ.get("LOGBBM_THREADS")
    if raw is None or raw == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"LOGBBM_THREADS: expected a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"LOGBBM_THREADS: expected a positive integer, got {raw!r}")
    return n


def _publish(staging: Path, target: Path) -> None:
    if not target.exists():
        os.replace(staging, target)
        return
    if not target.is_dir():
        raise NotADirectoryError(f"output_dir {target} exists and is not a directory")
    for f in staging.iterdir():
        os.replace(f, target / f.name)
    staging.rmdir()


def dispatch(cfg: RunConfig, log=None) -> int:
    """Run one command, write its files and manifest; returns the process exit status."""
    log = log or (lambda msg: print(msg, file=sys.stderr))
    started = time.time()
    t0 = time.perf_counter()
    threads = _threads()
    target = Path(cfg.output_dir).resolve()
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        staging = Path(tempfile.mkdtemp(prefix=".logbbm-", dir=target.parent))
    except OSError as err:
        log(f"error: cannot write to {target}: {err}")
        return EXIT_ERROR
    try:
        timings = None
        if cfg.command == "checks":
            files, summary, ok, timings = cmd_checks(cfg, log)
        elif cfg.command in ("simulate", "couple"):
            files, summary, ok = cmd_simulate(cfg, coupled=cfg.command == "couple")
        else:
            handler = {"gaps": cmd_gaps, "pde-cdf": cmd_pde_cdf, "pde-nonlocal": cmd_pde_nonlocal,
                       "velocity": cmd_velocity, "hydro": cmd_hydro}[cfg.command]
            files, summary, ok = handler(cfg)
        files = dict(files)
        files["summary.json"] = json_text(summary)
        entries = []
        for name in sorted(files):
            data = files[name].encode()
            (staging / name).write_bytes(data)
            entries.append({"name": name, "bytes": len(data), "sha256": hashlib.sha256(data).hexdigest()})
        manifest = {
            "config": cfg.echo(),
            "version": _version(),
            "started_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(started)),
            "wall_time_s": round(time.perf_counter() - t0, 3),
            "threads": threads or 1,
            "files": entries,
            "success": bool(ok),
        }
        if timings is not None:
            manifest["criterion_runtimes_s"] = timings
        (staging / "manifest.json").write_text(json_text(manifest))
        _publish(staging, target)
    except Exception as err:  # surfaced verbatim with context; nothing partial is left behind
        shutil.rmtree(staging, ignore_errors=True)
        log(f"error: {cfg.command} failed: {type(err).__name__}: {err}")
        return EXIT_ERROR
    log(f"wrote {len(entries) + 1} files to {target}")
    return EXIT_OK if ok else EXIT_FAILED_CHECKS


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="logbbm", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="flat JSON config file")
    ap.add_argument("--seed", type=int, help="master seed (overrides the file)")
    ap.add_argument("--out", dest="output_dir", help="output directory (overrides the file)")
    ap.add_argument("--format", choices=FORMATS, help="table format (overrides the file)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = {}
        if args.config:
            try:
                raw = json.loads(Path(args.config).read_text())
            except FileNotFoundError:
                raise ConfigError(f"config: file {args.config} not found") from None
            except json.JSONDecodeError as err:
                raise ConfigError(f"config: malformed JSON in {args.config}: {err}") from None
        if "command" in raw and raw["command"] != args.command:
            raise ConfigError(f"command: file says {raw['command']!r} but {args.command!r} was requested")
        raw["command"] = args.command
        cfg = parse_config(raw, {"seed": args.seed, "output_dir": args.output_dir, "format": args.format})
        _threads()
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_ERROR
    return dispatch(cfg, log=lambda m: print(m, file=sys.stderr))


if __name__ == "__main__":
    sys.exit(main())
