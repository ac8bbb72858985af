"""Event-driven simulation of the logistic branching Brownian motion.

Particles diffuse as independent standard Brownian motions, each branches
at rate ``birth_rate`` (the child starts at the parent's position) and every
ordered pair of distinct alive particles competes at rate ``c_K = c / K``;
the lower particle of the pair dies.

A single exponential clock with the aggregate rate drives the dynamics and
the event type is chosen afterwards. Positions are only touched at event and
observation times, using the exact Gaussian increment of the elapsed
interval, so there is no time-discretization error.

With ``coupling_enabled`` the loser of a competition is recoloured red
instead of being removed. Red particles keep branching and diffusing but
never compete, so blue particles form the Log-BBM and blue plus red form a
plain branching Brownian motion started from the same initial particles.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import EventBudgetError, PopulationCapError
from .lbprocess import LBParams, sample_stationary
from .rng import make_rng

BLUE = "blue"
RED = "red"

Label = tuple


@dataclass(frozen=True)
class Particle:
    label: Label
    position: float
    birth_time: float
    death_time: float | None = None
    color: str = BLUE


@dataclass(frozen=True)
class InitialCondition:
    """Spatial layout of the initial particles.

    ``kind`` is one of ``"origin"`` (all particles at 0), ``"positions"``
    (explicit list, which also fixes the count), ``"normal"`` or
    ``"uniform"`` (i.i.d. draws with the given ``scale`` around ``center``).
    """

    kind: str = "origin"
    positions: tuple[float, ...] = ()
    scale: float = 1.0
    center: float = 0.0

    def __post_init__(self):
        if self.kind not in ("origin", "positions", "normal", "uniform"):
            raise ValueError(f"unknown initial condition kind {self.kind!r}")
        if self.kind == "positions" and len(self.positions) == 0:
            raise ValueError("explicit initial position list is empty")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    @classmethod
    def explicit(cls, positions: Iterable[float]) -> "InitialCondition":
        return cls(kind="positions", positions=tuple(float(x) for x in positions))

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "origin":
            return np.full(n, self.center, dtype=float)
        if self.kind == "positions":
            return np.asarray(self.positions, dtype=float)
        if self.kind == "normal":
            return self.center + self.scale * rng.standard_normal(n)
        return self.center + self.scale * rng.uniform(-1.0, 1.0, n)


@dataclass(frozen=True)
class SimConfig:
    c: float
    t_end: float
    seed: int = 0
    K: int = 1
    snapshot_times: tuple[float, ...] = ()
    initial_condition: InitialCondition = field(default_factory=InitialCondition)
    n0: int | None = None
    coupling_enabled: bool = False
    max_particles: int = 1_000_000
    birth_rate: float = 1.0

    def __post_init__(self):
        if not (self.c >= 0 and math.isfinite(self.c)):
            raise ValueError(f"c must be finite and nonnegative, got {self.c!r}")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K!r}")
        if not self.t_end >= 0:
            raise ValueError(f"t_end must be nonnegative, got {self.t_end!r}")
        snaps = tuple(float(s) for s in self.snapshot_times)
        if any(b < a for a, b in zip(snaps, snaps[1:])):
            raise ValueError("snapshot_times must be sorted")
        if snaps and (snaps[0] < 0 or snaps[-1] > self.t_end):
            raise ValueError("snapshot_times must lie in [0, t_end]")
        object.__setattr__(self, "snapshot_times", snaps)
        if self.n0 is not None and self.n0 < 1:
            raise ValueError("n0 must be >= 1")
        if self.initial_condition.kind == "positions" and self.n0 is not None:
            if self.n0 != len(self.initial_condition.positions):
                raise ValueError("n0 disagrees with the explicit position list")
        if self.c == 0 and self.n0 is None and self.initial_condition.kind != "positions":
            raise ValueError("c = 0 has no stationary law; give n0 or explicit positions")

    @property
    def c_K(self) -> float:
        return self.c / self.K

    @property
    def params(self) -> LBParams:
        return LBParams(c=self.c_K, birth_rate=self.birth_rate)


@dataclass(frozen=True)
class EventMark:
    """One jump of the dynamics.

    ``birth_index`` is the parent's label for a birth; ``pair`` is the
    ordered pair of competitors for a competition and ``loser`` the label
    that died (or turned red). Rank-driven couplings store ranks instead.
    """

    time: float
    kind: str
    birth_index: object = None
    pair: tuple | None = None
    loser: object = None

    def __post_init__(self):
        if self.kind == "competition" and self.pair is not None and self.pair[0] == self.pair[1]:
            raise ValueError("competition pair must have distinct members")


@dataclass(frozen=True)
class Snapshot:
    time: float
    blue: np.ndarray
    red: np.ndarray

    @property
    def n_blue(self) -> int:
        return int(self.blue.size)

    @property
    def n_total(self) -> int:
        return int(self.blue.size + self.red.size)


class PopulationState:
    """Alive particles at one instant.

    Storage is columnar: positions live in one float array with the blue
    particles in ``x[:n_blue]`` and red particles in
    ``x[n_blue:n_blue + n_red]``; labels, birth times and child counters are
    parallel lists. Dead particles are kept in ``graveyard`` only when
    ``record_history`` is set.
    """

    def __init__(self, positions, time: float = 0.0, labels=None, birth_times=None,
                 record_history: bool = False):
        x = np.asarray(positions, dtype=float).ravel()
        if x.size == 0:
            raise ValueError("a population needs at least one particle")
        n = x.size
        self.time = float(time)
        self._x = np.empty(max(16, 2 * n))
        self._x[:n] = x
        self.n_blue = n
        self.n_red = 0
        self.labels: list[Label] = list(labels) if labels is not None else [(i + 1,) for i in range(n)]
        self.birth_times: list[float] = list(birth_times) if birth_times is not None else [self.time] * n
        self.n_children: list[int] = [0] * n
        self.record_history = record_history
        self.graveyard: list[Particle] = []

    # -- views -----------------------------------------------------------
    @property
    def alive_count_blue(self) -> int:
        return self.n_blue

    @property
    def n_total(self) -> int:
        return self.n_blue + self.n_red

    @property
    def blue_positions(self) -> np.ndarray:
        return self._x[: self.n_blue]

    @property
    def red_positions(self) -> np.ndarray:
        return self._x[self.n_blue: self.n_total]

    @property
    def all_positions(self) -> np.ndarray:
        return self._x[: self.n_total]

    def particles(self, include_dead: bool = False) -> list[Particle]:
        out = [
            Particle(self.labels[i], float(self._x[i]), self.birth_times[i], None,
                     BLUE if i < self.n_blue else RED)
            for i in range(self.n_total)
        ]
        if include_dead:
            out.extend(self.graveyard)
        return out

    def snapshot(self) -> Snapshot:
        return Snapshot(self.time, np.sort(self.blue_positions), np.sort(self.red_positions))

    def copy(self) -> "PopulationState":
        new = PopulationState.__new__(PopulationState)
        new.time = self.time
        new._x = self._x.copy()
        new.n_blue = self.n_blue
        new.n_red = self.n_red
        new.labels = list(self.labels)
        new.birth_times = list(self.birth_times)
        new.n_children = list(self.n_children)
        new.record_history = self.record_history
        new.graveyard = list(self.graveyard)
        return new

    # -- mutation primitives ---------------------------------------------
    def diffuse(self, dt: float, rng: np.random.Generator) -> None:
        """Move every alive particle by an independent N(0, dt) increment."""
        if dt > 0.0:
            n = self.n_total
            self._x[:n] += math.sqrt(dt) * rng.standard_normal(n)
            self.time += dt

    def _swap(self, i: int, j: int) -> None:
        if i == j:
            return
        x = self._x
        x[i], x[j] = x[j], x[i]
        for col in (self.labels, self.birth_times, self.n_children):
            col[i], col[j] = col[j], col[i]

    def _ensure_capacity(self, n: int) -> None:
        if n > self._x.size:
            grown = np.empty(2 * n)
            grown[: self._x.size] = self._x
            self._x = grown

    def branch(self, i: int, cap: int) -> Label:
        """Duplicate particle ``i`` in place; the child keeps the parent's colour."""
        n = self.n_total
        if n + 1 > cap:
            raise PopulationCapError(n + 1, cap, self.time)
        self._ensure_capacity(n + 1)
        self.n_children[i] += 1
        label = self.labels[i] + (self.n_children[i],)
        self._x[n] = self._x[i]
        self.labels.append(label)
        self.birth_times.append(self.time)
        self.n_children.append(0)
        if i < self.n_blue:
            # new blue particle: move the first red slot to the end
            self._swap(self.n_blue, n)
            self.n_blue += 1
        else:
            self.n_red += 1
        return label

    def kill_blue(self, i: int) -> Label:
        last = self.n_blue - 1
        self._swap(i, last)
        label = self.labels[last]
        if self.record_history:
            self.graveyard.append(
                Particle(label, float(self._x[last]), self.birth_times[last], self.time, BLUE))
        tail = self.n_total - 1
        self._swap(last, tail)
        self.labels.pop()
        self.birth_times.pop()
        self.n_children.pop()
        self.n_blue -= 1
        return label

    def recolor_red(self, i: int) -> Label:
        last = self.n_blue - 1
        self._swap(i, last)
        self.n_blue -= 1
        self.n_red += 1
        return self.labels[last]


def init_system(config: SimConfig, rng, record_history: bool = False) -> PopulationState:
    """Initial population: stationary count (unless fixed) placed per the initial condition."""
    rng = make_rng(rng)
    ic = config.initial_condition
    if ic.kind == "positions":
        n = len(ic.positions)
    elif config.n0 is not None:
        n = int(config.n0)
    else:
        n = sample_stationary(config.c_K, rng)
    return PopulationState(ic.draw(n, rng), time=0.0, record_history=record_history)


def _total_rate(state: PopulationState, params: LBParams) -> tuple[float, float]:
    nb = state.n_blue
    birth = params.birth_rate * state.n_total
    return birth, birth + params.c * nb * (nb - 1)


def advance_to_next_event(state: PopulationState, params: LBParams, rng,
                          horizon: float = math.inf, coupled: bool = False,
                          max_particles: int = 1_000_000):
    """Advance ``state`` in place to its next event, or to ``horizon`` if that comes first.

    Returns ``(state, mark)``; ``mark`` is ``None`` when the horizon was
    reached without an event. The exponential clocks are memoryless, so the
    caller may simply call again from the horizon.
    """
    if state.n_blue < 1:
        raise ValueError("no alive blue particle")
    birth, total = _total_rate(state, params)
    dt = rng.standard_exponential() / total
    if state.time + dt > horizon:
        state.diffuse(horizon - state.time, rng)
        state.time = horizon
        return state, None
    state.diffuse(dt, rng)
    u = rng.random() * total
    if u < birth:
        i = min(int(u / params.birth_rate), state.n_total - 1)
        parent = state.labels[i]
        state.branch(i, max_particles)
        return state, EventMark(state.time, "birth", birth_index=parent)
    nb = state.n_blue
    k = min(int((u - birth) / params.c), nb * (nb - 1) - 1)
    i, j = divmod(k, nb - 1)
    if j >= i:
        j += 1
    pair = (state.labels[i], state.labels[j])
    x = state._x
    # ties (parent and newborn at one spot) kill the second member
    loser = i if x[i] < x[j] else j
    if coupled:
        label = state.recolor_red(loser)
    else:
        label = state.kill_blue(loser)
    return state, EventMark(state.time, "competition", pair=pair, loser=label)


def run_until(state: PopulationState, t: float, params: LBParams, rng,
              snapshot_times: Sequence[float] = (),
              snapshot_sink: Callable[[Snapshot], None] | None = None,
              coupled: bool = False, max_particles: int = 1_000_000,
              event_sink: Callable[[EventMark], None] | None = None,
              max_events: int | None = None) -> PopulationState:
    """Run ``state`` forward to time ``t``, emitting snapshots on the way."""
    if t < state.time:
        raise ValueError(f"cannot run backwards from {state.time} to {t}")
    rng = make_rng(rng)
    events = 0

    def advance(stop):
        nonlocal events
        while state.time < stop:
            _, mark = advance_to_next_event(state, params, rng, horizon=stop,
                                            coupled=coupled, max_particles=max_particles)
            if mark is not None:
                events += 1
                if event_sink is not None:
                    event_sink(mark)
                if max_events is not None and events > max_events:
                    raise EventBudgetError(f"more than {max_events} events before t={t}")

    for stop in snapshot_times:
        if state.time <= stop <= t:
            advance(stop)
            if snapshot_sink is not None:
                snapshot_sink(state.snapshot())
    advance(t)
    return state


def simulate(config: SimConfig, rng=None, snapshot_sink=None, record_history: bool = False):
    """Initialise from ``config`` and run to ``t_end``; returns the final state."""
    rng = make_rng(config.seed if rng is None else rng)
    state = init_system(config, rng, record_history=record_history)
    return run_until(state, config.t_end, config.params, rng,
                     snapshot_times=config.snapshot_times, snapshot_sink=snapshot_sink,
                     coupled=config.coupling_enabled, max_particles=config.max_particles)


def run_coupled(config: SimConfig, rng=None) -> list[Snapshot]:
    """Blue/red coupling with plain branching Brownian motion; snapshots at ``config.snapshot_times``."""
    if not config.coupling_enabled:
        raise ValueError("run_coupled needs coupling_enabled=True")
    snaps: list[Snapshot] = []
    simulate(config, rng, snapshot_sink=snaps.append)
    return snaps


def _positions(obj) -> np.ndarray:
    if isinstance(obj, PopulationState):
        return obj.blue_positions
    if isinstance(obj, Snapshot):
        return obj.blue
    return np.asarray(obj, dtype=float).ravel()


def seen_from_min(state) -> np.ndarray:
    """Sorted alive positions shifted so the leftmost sits at 0."""
    x = np.sort(_positions(state))
    if x.size == 0:
        raise ValueError("no alive particle")
    return x - x[0]


def gaps(state) -> np.ndarray:
    """Spacings between consecutive order statistics of alive positions."""
    x = np.sort(_positions(state))
    if x.size < 2:
        raise ValueError("gaps need at least two alive particles")
    return np.diff(x)


# ---------------------------------------------------------------------------
# Rank-driven coupling of two copies sharing marks and Brownian drivers
# ---------------------------------------------------------------------------

def _reflect(z: list[float]) -> tuple[list[float], list[float]]:
    """Skorokhod reflection of free gap values ``z`` for ranked Brownian particles.

    Solves ``g = z + l - Q l >= 0``, ``l >= 0``, ``l_i g_i = 0`` with ``Q``
    half the adjacency of the path graph, by Gauss-Seidel sweeps from
    ``l = 0``. Every float operation used is monotone, so the computed ``g``
    is monotone in ``z`` exactly, not just up to rounding.
    """
    n = len(z)
    ell = [0.0] * n
    if n == 0 or min(z) >= 0.0:
        return list(z), ell
    for _ in range(100_000):
        changed = False
        for i in range(n):
            left = ell[i - 1] if i > 0 else 0.0
            right = ell[i + 1] if i < n - 1 else 0.0
            new = 0.5 * (left + right) - z[i]
            if new < 0.0:
                new = 0.0
            if new != ell[i]:
                ell[i] = new
                changed = True
        if not changed:
            break
    else:  # pragma: no cover - the iteration is a contraction
        raise RuntimeError("gap reflection did not converge")
    g = []
    for i in range(n):
        left = ell[i - 1] if i > 0 else 0.0
        right = ell[i + 1] if i < n - 1 else 0.0
        v = z[i] - 0.5 * (left + right)
        g.append(v if v > 0.0 else 0.0)
    return g, ell


@dataclass
class _RankedSystem:
    minimum: float
    gaps: list[float]

    def positions(self) -> np.ndarray:
        return self.minimum + np.concatenate(([0.0], np.cumsum(self.gaps)))

    def move(self, dw: np.ndarray) -> None:
        z = [g + (dw[i + 1] - dw[i]) for i, g in enumerate(self.gaps)]
        self.gaps, ell = _reflect(z)
        self.minimum += dw[0] - (0.5 * ell[0] if ell else 0.0)

    def birth(self, rank: int) -> None:
        # duplicate of the particle at 1-based rank: zero gap between ranks rank and rank+1
        self.gaps.insert(rank - 1, 0.0)

    def kill(self, rank: int) -> None:
        n = len(self.gaps) + 1
        if rank == 1:
            self.minimum += self.gaps.pop(0)
        elif rank == n:
            self.gaps.pop()
        else:
            merged = self.gaps[rank - 2] + self.gaps[rank - 1]
            self.gaps[rank - 2] = merged
            del self.gaps[rank - 1]


@dataclass
class GapCoupledTrajectory:
    times: list[float]
    gaps_a: list[np.ndarray]
    gaps_b: list[np.ndarray]
    marks: list[EventMark]

    def dominated(self) -> list[bool]:
        """Componentwise ``gaps_a <= gaps_b`` at every recorded time."""
        return [bool(np.all(a <= b)) for a, b in zip(self.gaps_a, self.gaps_b)]

    @property
    def all_dominated(self) -> bool:
        return all(self.dominated())


def run_gap_coupled(config: SimConfig, init_a, init_b, rng=None, substep: float = 0.01,
                    max_events: int = 1_000_000) -> GapCoupledTrajectory:
    """Two Log-BBM copies driven by the same marks and rank-indexed Brownian motions.

    Both systems see the same event times, the same uniformly drawn birth
    rank and the same ordered competitor ranks; the lower-ranked competitor
    dies. Between events the particle holding rank ``i`` in either system is
    driven by the same Brownian increment ``dW_i``, with ranks maintained by
    Skorokhod reflection of the gaps on a ``substep`` grid. Gaps of both
    systems are recorded at time 0 and after every event.
    """
    a = np.sort(np.asarray(init_a, dtype=float))
    b = np.sort(np.asarray(init_b, dtype=float))
    if a.size != b.size:
        raise ValueError(f"initial sizes differ: {a.size} vs {b.size}")
    if a.size < 2:
        raise ValueError("gap coupling needs at least two particles")
    if np.any(np.diff(a) > np.diff(b)):
        raise ValueError("initial gaps of system a must be dominated by those of system b")
    if substep <= 0:
        raise ValueError("substep must be positive")
    rng = make_rng(config.seed if rng is None else rng)
    params = config.params
    sys_a = _RankedSystem(float(a[0]), [float(g) for g in np.diff(a)])
    sys_b = _RankedSystem(float(b[0]), [float(g) for g in np.diff(b)])
    t = 0.0
    out = GapCoupledTrajectory([0.0], [np.array(sys_a.gaps)], [np.array(sys_b.gaps)], [])
    n = a.size
    for _ in range(max_events):
        birth = params.birth_rate * n
        total = birth + params.c * n * (n - 1)
        dt = rng.standard_exponential() / total
        stop = min(t + dt, config.t_end)
        while t < stop:
            h = min(substep, stop - t)
            dw = math.sqrt(h) * rng.standard_normal(n)
            sys_a.move(dw)
            sys_b.move(dw)
            t += h
        t = stop
        if t >= config.t_end:
            return out
        u = rng.random() * total
        if u < birth:
            rank = min(int(u / params.birth_rate), n - 1) + 1
            if n + 1 > config.max_particles:
                raise PopulationCapError(n + 1, config.max_particles, t)
            sys_a.birth(rank)
            sys_b.birth(rank)
            n += 1
            mark = EventMark(t, "birth", birth_index=rank)
        else:
            k = min(int((u - birth) / params.c), n * (n - 1) - 1)
            i, j = divmod(k, n - 1)
            if j >= i:
                j += 1
            r1, r2 = i + 1, j + 1
            dead = min(r1, r2)
            sys_a.kill(dead)
            sys_b.kill(dead)
            n -= 1
            mark = EventMark(t, "competition", pair=(r1, r2), loser=dead)
        out.times.append(t)
        out.gaps_a.append(np.array(sys_a.gaps))
        out.gaps_b.append(np.array(sys_b.gaps))
        out.marks.append(mark)
    raise EventBudgetError(f"gap-coupled run exceeded {max_events} events")
