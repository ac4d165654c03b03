"""Coupled triple (S1, S2, S3) on Z and the concentration experiment.

S1 and S2 are two tracked particles of the interchange process on Z, driven
by the primary edge clocks.  S3 starts with S2.  While the two particles are
adjacent (the critical set) S3 ignores S2 and moves on an auxiliary family of
edge clocks; at every other time S3 copies S2's signed increments.

Regime convention: an event at time t is handled according to the state just
before it, so t belongs to the critical set iff |S1(t-) - S2(t-)| = 1.  The
jump that makes the particles adjacent is therefore copied by S3 and the jump
that separates them is not.  With this (predictable) rule S3 is exactly a
rate-1 simple random walk; S3 - S2 changes only at times in the union of
(tau_j, tau_j^+], and is constant on every component of the complement of the
critical set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .interchange import _fire, _relevant_edges, fold_lattice
from .paths import CadlagPath
from .parallel import run_blocks
from .rng import InvalidParameterError, StreamKey

# ---------------------------------------------------------------- ledger and triple


@dataclass(frozen=True, eq=False)
class ExcursionLedger:
    """Adjacency excursions observed on [0, horizon].

    ``tau`` holds every entrance time <= horizon and ``tau_plus`` every exit
    time <= horizon, so ``len(tau_plus)`` is either ``len(tau)`` or one less.
    """

    tau: np.ndarray
    tau_plus: np.ndarray
    horizon: float

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        tp = np.asarray(self.tau_plus, dtype=float)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "tau_plus", tp)
        if not (tp.size == tau.size or tp.size == tau.size - 1):
            raise ValueError("entrances and exits do not interleave")
        inter = np.empty(tau.size + tp.size)
        inter[0::2] = tau
        inter[1::2] = tp
        if np.any(np.diff(inter) <= 0):
            raise ValueError("excursion times must strictly interleave")

    @property
    def J(self) -> int:
        """Index of the first excursion whose exit lies beyond the horizon."""
        return int(self.tau_plus.size) + 1

    @property
    def open_at_horizon(self) -> bool:
        return self.tau.size > self.tau_plus.size

    def intervals(self) -> list[tuple[float, float]]:
        ends = list(self.tau_plus) + ([self.horizon] if self.open_at_horizon else [])
        return list(zip(self.tau.tolist(), [float(e) for e in ends]))

    def contains(self, t) -> np.ndarray:
        """Membership in the critical set (half-open intervals [tau_j, tau_j^+))."""
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.tau, t, side="right")  # entrances <= t
        m = np.searchsorted(self.tau_plus, t, side="right")  # exits <= t
        return k > m

    def occupied_time(self, T: float | None = None) -> float:
        T = self.horizon if T is None else T
        total = 0.0
        for a, b in self.intervals():
            if a < T:
                total += min(b, T) - a
        return total


@dataclass(frozen=True, eq=False)
class CoupledTriple:
    S1: CadlagPath
    S2: CadlagPath
    S3: CadlagPath
    ledger: ExcursionLedger
    i: int
    j: int


@nb.njit(cache=True)
def _grow(times, vals, m):
    cap = 2 * times.size
    nt = np.empty(cap)
    nv = np.empty((cap, 3), np.int64)
    nt[:m] = times[:m]
    nv[:m] = vals[:m]
    return nt, nv


@nb.njit(cache=True)
def _triple(g1, g2, i, j, T, rate):
    pos = np.array([i, j], np.int64)
    s3 = j
    rel = np.empty(4, np.int64)
    times = np.empty(64)
    vals = np.empty((64, 3), np.int64)
    tau = [0.0]
    tau_plus = [0.0]
    tau.pop()
    tau_plus.pop()
    if abs(i - j) == 1:
        tau.append(0.0)
    m = 0
    r = _relevant_edges(pos, rel)
    t_p = g1.standard_exponential() / (r * rate)
    t_a = g2.standard_exponential() / (2.0 * rate)
    while t_p <= T or t_a <= T:
        if t_p <= t_a:
            t = t_p
            d0 = abs(pos[0] - pos[1])
            e = rel[int(g1.random() * r)]
            old = pos[1]
            _fire(pos, e)
            if d0 != 1:
                s3 += pos[1] - old
            d1 = abs(pos[0] - pos[1])
            if d0 != 1 and d1 == 1:
                tau.append(t)
            elif d0 == 1 and d1 != 1:
                tau_plus.append(t)
            r = _relevant_edges(pos, rel)
            t_p = t + g1.standard_exponential() / (r * rate)
        else:
            t = t_a
            u = g2.random()
            t_a = t + g2.standard_exponential() / (2.0 * rate)
            if abs(pos[0] - pos[1]) != 1:
                continue
            s3 += -1 if u < 0.5 else 1
        if m == times.size:
            times, vals = _grow(times, vals, m)
        times[m] = t
        vals[m, 0] = pos[0]
        vals[m, 1] = pos[1]
        vals[m, 2] = s3
        m += 1
    return times[:m], vals[:m], np.array(tau), np.array(tau_plus)


def simulate_coupled_triple(i: int, j: int, T_micro: float, key: StreamKey, edge_rate: float = 0.5) -> CoupledTriple:
    """Simulate the triple on [0, T_micro].

    Primary clocks draw from ``key.child(family="primary")`` in exactly the
    order used by :func:`tracked_lattice_interchange`, so (S1, S2) coincides
    path by path with the two-particle lattice interchange run on that key.
    """
    if i == j:
        raise InvalidParameterError("the two tracked particles need distinct starts")
    g1 = key.child(family="primary").generator()
    g2 = key.child(family="auxiliary").generator()
    times, vals, tau, tau_plus = _triple(g1, g2, int(i), int(j), float(T_micro), float(edge_rate))
    paths = [CadlagPath(s, times, vals[:, c], T_micro).compressed() for c, s in enumerate((i, j, j))]
    return CoupledTriple(*paths, ExcursionLedger(tau, tau_plus, T_micro), int(i), int(j))


# ---------------------------------------------------------------- pathwise checks and statistics


def _skeleton_times(triple: CoupledTriple) -> np.ndarray:
    ts = [triple.S1.times, triple.S2.times, triple.S3.times, triple.ledger.tau, triple.ledger.tau_plus, [0.0]]
    return np.unique(np.concatenate([np.asarray(x, dtype=float) for x in ts]))


def coupling_violations(triple: CoupledTriple) -> list[str]:
    """Exact pathwise checks; returns a description of every violated property."""
    out = []
    L = triple.ledger
    ts = _skeleton_times(triple)
    s1, s2, s3 = (p.value_at(ts) for p in (triple.S1, triple.S2, triple.S3))
    crit = L.contains(ts)
    adjacent = np.abs(s1 - s2) == 1
    if np.any(adjacent != crit):
        out.append(f"adjacency differs from critical-set membership at t={ts[adjacent != crit][0]!r}")
    if s3[0] != s2[0] or s2[0] != triple.j:
        out.append("S3 and S2 do not start together at j")
    diff = s3 - s2
    # constant on each component [tau_j^+, tau_{j+1}) of the complement (and on [0, tau_1))
    comp = np.searchsorted(L.tau_plus, ts, side="right")
    for c in np.unique(comp[~crit]):
        sel = (~crit) & (comp == c)
        if np.ptp(diff[sel]) != 0:
            out.append(f"S3 - S2 varies off the critical set (component {int(c)})")
    # every jump of S3 - S2 happens inside some (tau_j, tau_j^+]
    jumps = ts[1:][np.diff(diff) != 0]
    if jumps.size:
        k = np.searchsorted(L.tau, jumps, side="left")  # entrances strictly before the jump
        m = np.searchsorted(L.tau_plus, jumps, side="left")  # exits strictly before the jump
        bad = jumps[k <= m]
        if bad.size:
            out.append(f"S3 - S2 jumps outside the critical set at t={bad[0]!r}")
    disp = excursion_displacements(triple)
    if disp.size and disp.max() > 2:
        out.append(f"excursion displacement {int(disp.max())} exceeds 2")
    return out


def excursion_displacements(triple: CoupledTriple) -> np.ndarray:
    """``|S2(tau_j^+) - S2(tau_j)|`` per excursion (the last one read at the horizon if still open)."""
    out = []
    for a, b in triple.ledger.intervals():
        out.append(abs(triple.S2.value_at(b) - triple.S2.value_at(a)))
    return np.asarray(out, dtype=np.int64)


@dataclass(frozen=True)
class ExcursionStats:
    J: int
    occupied_time: float
    excursion_jumps: np.ndarray = field(repr=False)


def excursion_stats(triple: CoupledTriple, T: float | None = None) -> ExcursionStats:
    """J, occupied time of the critical set up to T and per-excursion S2 displacements."""
    L = triple.ledger
    T = L.horizon if T is None else float(T)
    if T > L.horizon:
        raise InvalidParameterError("ledger does not cover [0, T]")
    J = int(np.count_nonzero(L.tau_plus <= T)) + 1
    return ExcursionStats(J, L.occupied_time(T), excursion_displacements(triple))


def triple_exceeds(triple: CoupledTriple, n: int) -> bool:
    """Whether ``sup_t |fold(S2) - fold(S3)| / n > n**(-1/4)`` on the triple's horizon."""
    ts = np.union1d(np.union1d(triple.S2.times, triple.S3.times), [0.0])
    a = fold_lattice(triple.S2.value_at(ts).astype(np.int64), n)
    b = fold_lattice(triple.S3.value_at(ts).astype(np.int64), n)
    return bool(np.max(np.abs(a - b)) > n**0.75)


# ---------------------------------------------------------------- fast concentration kernel


@nb.njit(cache=True)
def _fold(x, n):
    y = (x - 1) % (2 * n) + 1
    return y if y <= n else 2 * n + 1 - y


@nb.njit(cache=True)
def _exceeds_once(rng, i, j, n, n_events, thr):
    # Uniformized chain at total rate 5 * edge_rate: five equally likely marks.
    # Adjacent: left outer edge, shared edge, right outer edge, two auxiliary
    # edges at S3.  Otherwise: the two edges of S1, the two of S2, one dummy.
    s1 = i
    s2 = j
    s3 = j
    left = n_events
    while left > 0:
        d = s2 - s1
        ad = abs(d)
        c = s3 - s2
        if ad >= 3:
            k = ad - 2
            if abs(c) > thr:
                g0 = abs(_fold(s2, n) - _fold(s3, n))
                k = min(k, int((thr - g0) // 2))
            if k >= 1:
                k = min(k, left)
                mv = rng.binomial(k, 0.8)
                m1 = rng.binomial(mv, 0.5)
                m2 = mv - m1
                s1 += 2 * rng.binomial(m1, 0.5) - m1
                step = 2 * rng.binomial(m2, 0.5) - m2
                s2 += step
                s3 += step
                left -= k
                continue
        mark = int(rng.random() * 5.0)
        left -= 1
        if ad == 1:
            a = min(s1, s2)
            if mark == 0:
                if s1 == a:
                    s1 -= 1
                else:
                    s2 -= 1
            elif mark == 1:
                s1, s2 = s2, s1
            elif mark == 2:
                if s1 == a + 1:
                    s1 += 1
                else:
                    s2 += 1
            elif mark == 3:
                s3 -= 1
            else:
                s3 += 1
        else:
            if mark == 0:
                s1 -= 1
            elif mark == 1:
                s1 += 1
            elif mark == 2:
                s2 -= 1
                s3 -= 1
            elif mark == 3:
                s2 += 1
                s3 += 1
        if abs(s3 - s2) > thr and abs(_fold(s2, n) - _fold(s3, n)) > thr:
            return True
    return False


@nb.njit(cache=True)
def _exceedance_block(rng, i, j, n, mean_events, thr, reps):
    out = np.zeros(reps, np.bool_)
    for r in range(reps):
        out[r] = _exceeds_once(rng, i, j, n, rng.poisson(mean_events), thr)
    return out


def _exceedance_job(size, key, i, j, n, mean_events, thr):
    return _exceedance_block(key.generator(), i, j, n, mean_events, thr, size)


def exceedance_indicators(
    i: int, j: int, n: int, T: float, reps: int, key: StreamKey, edge_rate: float = 0.5, block: int = 2048, workers: int = 1
) -> np.ndarray:
    """Per-replicate indicator of ``sup_{t<=T} |T_2(t) - T_3(t)| > n**(-1/4)`` (macro T).

    Only the sequence of states matters for the supremum, so the triple is run
    as its uniformized jump chain with a Poisson(5 edge_rate n^2 T) number of
    marks.  Stretches where the particles are at distance >= 3 are advanced in
    one batch of binomial draws whenever no exceedance can occur inside them.
    """
    if reps < 1:
        raise InvalidParameterError("reps must be positive")
    mean_events = 5.0 * edge_rate * float(n) ** 2 * T
    args = (int(i), int(j), int(n), mean_events, float(n) ** 0.75)
    return np.concatenate(run_blocks(_exceedance_job, key, reps, block, workers, args))


def default_pairs(n: int) -> list[tuple[int, int]]:
    """A separated pair (ceil(n/3), ceil(2n/3)) and an adjacent pair (ceil(n/2), ceil(n/2)+1)."""
    if n < 2:
        raise InvalidParameterError("need n >= 2 for a pair")
    a = (math.ceil(n / 3), math.ceil(2 * n / 3))
    m = min(math.ceil(n / 2), n - 1)
    pairs = [a, (m, m + 1)]
    return [p for k, p in enumerate(pairs) if p[0] != p[1] and p not in pairs[:k]]


@dataclass(frozen=True)
class ConcentrationRow:
    n: int
    T: float
    reps: int
    pair: str
    p_hat: float
    std_error: float
    scaled: float


def concentration_experiment(
    n: int, T: float, reps: int, key: StreamKey, pairs=None, edge_rate: float = 0.5, workers: int = 1
) -> list[ConcentrationRow]:
    """Tail estimate per pair with ``scaled = p_hat * sqrt(n) / sqrt(T)``."""
    if reps < 1:
        raise InvalidParameterError("reps must be positive")
    if n < 2:
        raise InvalidParameterError("n must be at least 2")
    rows = []
    for i, j in pairs or default_pairs(n):
        sub = key.child(experiment=f"{key.experiment}/n={n}/pair={i}-{j}")
        hits = exceedance_indicators(i, j, n, T, reps, sub, edge_rate, workers=workers)
        p = float(hits.mean())
        se = math.sqrt(p * (1 - p) / reps)
        rows.append(ConcentrationRow(n, T, reps, f"{i}-{j}", p, se, p * math.sqrt(n) / math.sqrt(T)))
    return rows
