"""Continuous-time simple random walks on Z and on the half-line, with exact oracles.

Conventions: ``jump_rate`` is the total rate at which the walker leaves its
site, split evenly between the two neighbours.  With edges firing at rate 1/2
(the interchange convention) a particle has ``jump_rate = 1``; with edges
firing at rate 1 it has ``jump_rate = 2``.  Both occur below, so the rate is
always passed explicitly.

A *visit* is an arrival of the embedded jump chain (plus the initial site),
not an occupation interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numba as nb
import numpy as np
from scipy import special, stats

from .paths import CadlagPath
from .parallel import run_blocks
from .rng import InvalidParameterError, StreamKey, as_generator, poisson_events

ORACLE_TAIL = 1e-12


class TruncationError(RuntimeError):
    pass


@dataclass(frozen=True)
class WalkSpec:
    start: int = 0
    jump_rate: float = 1.0
    horizon: float = 1.0

    def __post_init__(self):
        if not self.jump_rate > 0:
            raise InvalidParameterError("jump_rate must be positive")
        if self.horizon < 0:
            raise InvalidParameterError("horizon must be nonnegative")


@dataclass(frozen=True)
class HalfLineSpec:
    start: int = 0
    edge_rate: float = 1.0
    loop_rate_at_zero: float = 0.5

    def __post_init__(self):
        if self.start < 0:
            raise InvalidParameterError("half-line walk must start at a nonnegative site")
        if not self.edge_rate > 0 or self.loop_rate_at_zero < 0:
            raise InvalidParameterError("edge_rate must be positive, loop rate nonnegative")


def simulate_srw(spec: WalkSpec, key: StreamKey) -> CadlagPath:
    rng = as_generator(key)
    clock = poisson_events(spec.jump_rate, (0.0, spec.horizon), rng)
    steps = 2 * rng.integers(0, 2, size=clock.count) - 1
    values = spec.start + np.cumsum(steps)
    return CadlagPath(spec.start, clock.times, values, spec.horizon)


def sample_displacement(jump_rate: float, t: float, size: int, key: StreamKey) -> np.ndarray:
    """Exact draws of ``S(t) - S(0)``: Poisson(rate t) steps, each a fair sign."""
    rng = as_generator(key)
    n = rng.poisson(jump_rate * t, size=size)
    return 2 * rng.binomial(n, 0.5) - n


def walk_pmf_oracle(spec: WalkSpec, t: float, displacement: int) -> float:
    """``P(S(t) - S(0) = displacement)`` by Poissonizing the discrete walk.

    The series is cut where the Poisson tail drops below 1e-12; each omitted
    term is at most its Poisson weight, so the error is below that tail.
    """
    if t < 0:
        raise InvalidParameterError("t must be nonnegative")
    d = abs(int(displacement))
    lam = spec.jump_rate * t
    if lam == 0:
        return 1.0 if d == 0 else 0.0
    kmax = int(lam + 10 * math.sqrt(lam) + 50)
    while stats.poisson.sf(kmax, lam) > ORACLE_TAIL:
        kmax *= 2
        if kmax > 10**8:
            raise TruncationError(f"Poisson tail above {ORACLE_TAIL} at k={kmax}")
    if d > kmax:
        return 0.0
    k = np.arange(d, kmax + 1, 2, dtype=float)
    log_terms = (
        stats.poisson.logpmf(k, lam)
        + special.gammaln(k + 1)
        - special.gammaln((k + d) / 2 + 1)
        - special.gammaln((k - d) / 2 + 1)
        - k * math.log(2.0)
    )
    return float(np.sum(np.exp(log_terms)))


def count_visits(path: CadlagPath, targets, T: float | None = None) -> int:
    T = path.horizon if T is None else T
    targets = np.asarray(sorted(set(int(x) for x in targets)), dtype=float)
    k = np.searchsorted(path.times, T, side="right")
    first = int(np.isin(path.initial_value, targets))
    return first + int(np.count_nonzero(np.isin(path.values[:k], targets)))


def expected_visits_oracle(start: int, n_steps: int) -> float:
    """``E[#{0 <= k <= n : start + Z_k = 0}]`` for the discrete simple walk Z."""
    if n_steps < 0:
        raise InvalidParameterError("n_steps must be nonnegative")
    x = abs(int(start))
    if n_steps <= 4000:
        total = Fraction(0)
        for k in range(x, n_steps + 1, 2):
            total += Fraction(math.comb(k, (k + x) // 2), 2**k)
        return float(total)
    k = np.arange(x, n_steps + 1, 2, dtype=float)
    log_p = special.gammaln(k + 1) - special.gammaln((k + x) / 2 + 1) - special.gammaln((k - x) / 2 + 1) - k * math.log(2)
    return float(np.sum(np.exp(log_p)))


def expected_visits_continuous(start: int, targets, jump_rate: float, T: float) -> float:
    """Exact ``E[V(T)]`` for the continuous-time walk: sum over k of P(N(T) >= k) P(start + Z_k in targets)."""
    lam = jump_rate * T
    kmax = int(lam + 12 * math.sqrt(lam + 1) + 60)
    k = np.arange(0, kmax + 1)
    reach = stats.poisson.sf(k - 1, lam)  # P(N >= k)
    total = 0.0
    for y in set(int(v) for v in targets):
        d = abs(y - int(start))
        kk = k[(k >= d) & ((k - d) % 2 == 0)].astype(float)
        p = np.exp(special.gammaln(kk + 1) - special.gammaln((kk + d) / 2 + 1) - special.gammaln((kk - d) / 2 + 1) - kk * math.log(2))
        total += float(np.sum(reach[kk.astype(int)] * p))
    return total


@nb.njit(cache=True)
def _visit_counts(rng, start, lam, targets, reps):
    out = np.zeros(reps, np.int64)
    for r in range(reps):
        x = start
        c = 0
        for y in targets:
            if x == y:
                c += 1
        n = rng.poisson(lam)
        for _ in range(n):
            if rng.random() < 0.5:
                x -= 1
            else:
                x += 1
            for y in targets:
                if x == y:
                    c += 1
        out[r] = c
    return out


def _visit_block(size, key, start, lam, targets):
    return _visit_counts(key.generator(), start, lam, targets, size)


def visit_counts(start: int, jump_rate: float, T: float, reps: int, key: StreamKey, targets=(0,), block: int = 10_000, workers: int = 1) -> np.ndarray:
    """Visit counts of ``reps`` independent walks, generated in fixed replicate blocks."""
    targets = np.asarray(sorted(set(int(v) for v in targets)), dtype=np.int64)
    parts = run_blocks(_visit_block, key, reps, block, workers, (int(start), float(jump_rate * T), targets))
    return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)


@nb.njit(cache=True)
def _halfline(rng, start, edge, loop, T):
    cap = 64
    times = np.empty(cap)
    vals = np.empty(cap, np.int64)
    m = 0
    t = 0.0
    x = start
    while True:
        rate = 2.0 * edge if x > 0 else edge + loop
        t += rng.standard_exponential() / rate
        if t > T:
            break
        u = rng.random()
        if x > 0:
            x = x - 1 if u < 0.5 else x + 1
        elif u * rate < edge:
            x = 1
        # otherwise: self-loop at 0 fires, position unchanged but the event is logged
        if m == cap:
            cap *= 2
            nt = np.empty(cap)
            nv = np.empty(cap, np.int64)
            nt[:m] = times[:m]
            nv[:m] = vals[:m]
            times = nt
            vals = nv
        times[m] = t
        vals[m] = x
        m += 1
    return times[:m], vals[:m]


def simulate_halfline(spec: HalfLineSpec, T: float, key: StreamKey) -> CadlagPath:
    """Walk on {0, 1, 2, ...}; self-loop firings at 0 appear as no-op jump records."""
    times, vals = _halfline(as_generator(key), int(spec.start), float(spec.edge_rate), float(spec.loop_rate_at_zero), float(T))
    return CadlagPath(spec.start, times, vals, T)


def fold_halfline(x):
    """Covering map Z -> Z>=0 pairing the edge {0, 1} with the loop at 0: 1, 0 -> 0; 2, -1 -> 1; ..."""
    x = np.asarray(x)
    return np.where(x >= 1, x - 1, -x)


@dataclass(frozen=True)
class ReturnScalingRow:
    epsilon: float
    t: float
    reps: int
    mean_visits: float
    std_error: float


def return_scaling_experiment(epsilon: float, t: float, reps: int, key: StreamKey) -> ReturnScalingRow:
    """Mean number of visits to 0 by a rate-epsilon**-2 walk from 0 during [0, t]."""
    if not 0 < epsilon <= 1:
        raise InvalidParameterError("epsilon must lie in (0, 1]")
    if reps < 1:
        raise InvalidParameterError("reps must be positive")
    v = visit_counts(0, epsilon**-2, t, reps, key.child(experiment=f"{key.experiment}/eps={epsilon!r}"))
    se = float(v.std(ddof=1) / math.sqrt(reps)) if reps > 1 else float("nan")
    return ReturnScalingRow(epsilon, t, reps, float(v.mean()), se)


def return_scaling_fit(epsilons, t: float, reps: int, key: StreamKey):
    """Rows for each epsilon plus the least-squares slope of log(mean) on log(1/epsilon)."""
    rows = [return_scaling_experiment(e, t, reps, key) for e in epsilons]
    x = np.log(1.0 / np.asarray(epsilons, dtype=float))
    y = np.log([r.mean_visits for r in rows])
    slope = float(np.polyfit(x, y, 1)[0])
    return rows, slope


def return_scaling_exact_slope(epsilons, t: float) -> float:
    """The same log-log slope computed from exact expected visit counts."""
    m = [expected_visits_continuous(0, [0], e**-2, t) for e in epsilons]
    return float(np.polyfit(np.log(1.0 / np.asarray(epsilons, dtype=float)), np.log(m), 1)[0])
