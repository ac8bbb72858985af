"""Population-size chain of the logistic branching process.

Dyadic branching at rate ``birth_rate`` per particle, no natural death, and
pairwise competition at rate ``c`` per ordered pair, so a population of size
``n`` jumps to ``n + 1`` at rate ``birth_rate * n`` and to ``n - 1`` at rate
``c * n * (n - 1)``. For ``c > 0`` and unit birth rate the chain is positive
recurrent on ``{1, 2, ...}`` with a zero-truncated Poisson(1/c) stationary law.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln
from scipy.stats import poisson

from .errors import PopulationCapError
from .rng import make_rng

DEFAULT_POPULATION_CAP = 10**7


@dataclass(frozen=True)
class LBParams:
    c: float
    birth_rate: float = 1.0

    def __post_init__(self):
        if not (self.c >= 0.0 and math.isfinite(self.c)):
            raise ValueError(f"c must be a finite nonnegative rate, got {self.c!r}")
        if not (self.birth_rate > 0.0 and math.isfinite(self.birth_rate)):
            raise ValueError(f"birth_rate must be positive, got {self.birth_rate!r}")

    @property
    def is_yule(self) -> bool:
        """No competition: the chain is a pure-birth (Yule) process."""
        return self.c == 0.0


def _check_c(c: float) -> float:
    c = float(c)
    if not (c > 0.0 and math.isfinite(c)):
        raise ValueError(f"c must be positive, got {c!r}")
    return c


def transition_rates(n: int, params: LBParams) -> tuple[float, float]:
    """Return ``(birth, death)`` rates out of population size ``n``."""
    if n < 1:
        raise ValueError(f"population size must be >= 1, got {n}")
    return params.birth_rate * n, params.c * n * (n - 1)


def log_stationary_pmf(c: float, k: int) -> float:
    c = _check_c(c)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    lam = 1.0 / c
    # log(1 - e^{-lam}) computed without cancellation for small lam
    log_norm = math.log(-math.expm1(-lam))
    return k * math.log(lam) - math.lgamma(k + 1) - lam - log_norm


def stationary_pmf(c: float, k: int) -> float:
    """Zero-truncated Poisson(1/c) probability of ``k``."""
    return math.exp(log_stationary_pmf(c, k))


def stationary_pmf_array(c: float, kmax: int) -> np.ndarray:
    """Probabilities for ``k = 1..kmax``."""
    c = _check_c(c)
    k = np.arange(1, kmax + 1, dtype=float)
    lam = 1.0 / c
    logp = k * math.log(lam) - gammaln(k + 1) - lam - math.log(-math.expm1(-lam))
    return np.exp(logp)


def stationary_mean(c: float) -> float:
    """Mean of the stationary law, ``1 / (c (1 - e^{-1/c}))``."""
    c = _check_c(c)
    return 1.0 / (c * -math.expm1(-1.0 / c))


def stationary_support_bound(c: float, tail: float = 1e-16) -> int:
    """Smallest ``kmax`` leaving stationary tail mass below ``tail``."""
    c = _check_c(c)
    lam = 1.0 / c
    kmax = max(10, int(lam + 12 * math.sqrt(lam) + 40))
    while poisson.sf(kmax, lam) / -math.expm1(-lam) > tail:
        kmax *= 2
    return kmax


def sample_stationary(c: float, rng, size: int | None = None):
    """Draw from Poisson(1/c) conditioned on being at least one.

    Zero outcomes are rejected; draws are made in vector batches so large
    ``c`` (where most Poisson draws are zero) stays cheap.
    """
    c = _check_c(c)
    rng = make_rng(rng)
    lam = 1.0 / c
    want = 1 if size is None else int(size)
    p_pos = -math.expm1(-lam)
    out = np.empty(want, dtype=np.int64)
    filled = 0
    while filled < want:
        need = want - filled
        batch = int(min(max(need / p_pos * 1.2 + 8, 16), 1 << 22))
        draws = rng.poisson(lam, size=batch)
        draws = draws[draws > 0][:need]
        out[filled:filled + draws.size] = draws
        filled += draws.size
    if size is None:
        return int(out[0])
    return out


@dataclass
class LBTrajectory:
    """Jump chain of the population size.

    ``event_times[0] == 0`` carries the initial size; each later entry is a
    jump. The path is piecewise constant and observed on ``[0, t_end]``.
    """

    event_times: np.ndarray
    sizes: np.ndarray
    t_end: float
    seed: int | None = None
    params: LBParams | None = field(default=None, repr=False)

    @property
    def final_size(self) -> int:
        return int(self.sizes[-1])

    def size_at(self, t: float) -> int:
        if t < 0 or t > self.t_end:
            raise ValueError(f"t={t} outside [0, {self.t_end}]")
        i = int(np.searchsorted(self.event_times, t, side="right")) - 1
        return int(self.sizes[i])

    def holding_times(self) -> np.ndarray:
        ends = np.append(self.event_times[1:], self.t_end)
        return ends - self.event_times

    def occupation(self, burn_in: float = 0.0) -> dict[int, float]:
        """Time-weighted occupation fractions over ``[burn_in, t_end]``."""
        if not 0.0 <= burn_in < self.t_end:
            raise ValueError("burn_in must lie in [0, t_end)")
        starts = np.maximum(self.event_times, burn_in)
        ends = np.append(self.event_times[1:], self.t_end)
        w = np.clip(ends - starts, 0.0, None)
        total = self.t_end - burn_in
        acc = np.bincount(self.sizes, weights=w) / total
        return {int(k): float(v) for k, v in enumerate(acc) if v > 0}

    def time_average(self, burn_in: float = 0.0) -> float:
        occ = self.occupation(burn_in)
        return sum(k * p for k, p in occ.items())


def simulate_lb_chain(
    params: LBParams,
    n0: int,
    t_end: float,
    rng,
    max_population: int = DEFAULT_POPULATION_CAP,
) -> LBTrajectory:
    """Exact (Gillespie) simulation of the size chain up to ``t_end``."""
    if n0 < 1:
        raise ValueError(f"n0 must be >= 1, got {n0}")
    if not t_end > 0:
        raise ValueError(f"t_end must be positive, got {t_end}")
    seed = rng if isinstance(rng, (int, np.integer)) else None
    gen = make_rng(rng)
    b, c = params.birth_rate, params.c

    times = [0.0]
    sizes = [int(n0)]
    t = 0.0
    n = int(n0)
    block = 4096
    expo = gen.standard_exponential(block)
    unif = gen.random(block)
    j = 0
    while True:
        if j == block:
            expo = gen.standard_exponential(block)
            unif = gen.random(block)
            j = 0
        birth = b * n
        total = birth + c * n * (n - 1)
        t += expo[j] / total
        if t > t_end:
            break
        if unif[j] * total < birth:
            n += 1
            if n > max_population:
                raise PopulationCapError(n, max_population, t)
        else:
            n -= 1
        j += 1
        times.append(t)
        sizes.append(n)
    return LBTrajectory(
        event_times=np.asarray(times),
        sizes=np.asarray(sizes, dtype=np.int64),
        t_end=float(t_end),
        seed=None if seed is None else int(seed),
        params=params,
    )
