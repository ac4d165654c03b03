"""Interchange process on the path graph P_n and on Z.

Vertices of P_n are 1..n.  The n+1 edges are indexed 0..n: edge 0 is the
self-loop at vertex 1, edge n the self-loop at vertex n, and edge e (0 < e < n)
joins e and e+1.  For n = 1 both loops sit on vertex 1.  On Z, edge x joins
x and x+1.

Times handed to the engine are *micro* (unrescaled) times; rescaled
trajectories run in macro time t = micro / n**2 and take values in
{1/n, ..., 1}.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numba as nb
import numpy as np

from .paths import CadlagPath, OutOfRangeError
from .rng import InvalidParameterError, StreamKey, as_generator, merge_streams, poisson_events
from .stats import PointMeasure


@dataclass(frozen=True)
class PathGraphConfig:
    n: int
    edge_rate: float = 0.5
    horizon_micro: float = 1.0

    def __post_init__(self):
        if int(self.n) < 1:
            raise InvalidParameterError("n must be at least 1")
        if not self.edge_rate > 0:
            raise InvalidParameterError("edge_rate must be positive")
        if self.horizon_micro < 0:
            raise InvalidParameterError("horizon must be nonnegative")

    @property
    def n_edges(self) -> int:
        return self.n + 1


def edge_endpoints(e: int, n: int) -> tuple[int, int]:
    if not 0 <= e <= n:
        raise InvalidParameterError(f"edge {e} not in 0..{n}")
    if e == 0:
        return 1, 1
    if e == n:
        return n, n
    return e, e + 1


# ---------------------------------------------------------------- replay kernels


@nb.njit(cache=True)
def _apply(pos, occ, e, n):
    if 0 < e < n:
        a = occ[e]
        b = occ[e + 1]
        occ[e] = b
        occ[e + 1] = a
        pos[a] = e + 1
        pos[b] = e


@nb.njit(cache=True)
def _replay(n, edges, upto):
    pos = np.arange(n + 1)
    occ = np.arange(n + 1)
    for k in range(upto):
        _apply(pos, occ, edges[k], n)
    return pos[1:].copy()


@nb.njit(cache=True)
def _bijection_violations(n, edges):
    pos = np.arange(n + 1)
    occ = np.arange(n + 1)
    seen = np.zeros(n + 1, np.int64)
    bad = 0
    for k in range(edges.size + 1):
        if k > 0:
            _apply(pos, occ, edges[k - 1], n)
        for i in range(1, n + 1):
            p = pos[i]
            if p < 1 or p > n or occ[p] != i or seen[p] == k + 1:
                bad += 1
                break
            seen[p] = k + 1
    return bad


@nb.njit(cache=True)
def _moves(n, edges):
    # each real swap moves two particles; returns (event index, particle, new site)
    m = 0
    for e in edges:
        if 0 < e < n:
            m += 1
    ev = np.empty(2 * m, np.int64)
    who = np.empty(2 * m, np.int64)
    where = np.empty(2 * m, np.int64)
    occ = np.arange(n + 1)
    j = 0
    for k in range(edges.size):
        e = edges[k]
        if 0 < e < n:
            a = occ[e]
            b = occ[e + 1]
            occ[e] = b
            occ[e + 1] = a
            ev[j] = k
            who[j] = a
            where[j] = e + 1
            ev[j + 1] = k
            who[j + 1] = b
            where[j + 1] = e
            j += 2
    return ev, who, where


@dataclass(frozen=True, eq=False)
class PermutationTrajectory:
    """Swap log of one interchange run on P_n, including no-op self-loop firings."""

    n: int
    horizon: float
    times: np.ndarray
    edges: np.ndarray
    edge_rate: float = 0.5

    def positions_at(self, t: float) -> np.ndarray:
        """``pos[i-1] = Int_t(i)``."""
        if not 0 <= t <= self.horizon:
            raise OutOfRangeError("time outside the simulated horizon")
        upto = int(np.searchsorted(self.times, t, side="right"))
        return _replay(self.n, self.edges, upto)

    def occupants_at(self, t: float) -> np.ndarray:
        """``occ[v-1]`` = label of the particle sitting at vertex v."""
        pos = self.positions_at(t)
        occ = np.empty(self.n, dtype=np.int64)
        occ[pos - 1] = np.arange(1, self.n + 1)
        return occ

    def bijection_violations(self) -> int:
        """Number of event times at which i -> Int_t(i) fails to be a bijection (exact replay)."""
        return int(_bijection_violations(self.n, self.edges))

    def event_counts(self) -> np.ndarray:
        return np.bincount(self.edges, minlength=self.n + 1)

    def particle_paths(self) -> dict[int, CadlagPath]:
        """Micro-time position paths of every particle (only real moves recorded)."""
        ev, who, where = _moves(self.n, self.edges)
        order = np.argsort(who, kind="stable")
        who, ev, where = who[order], ev[order], where[order]
        bounds = np.searchsorted(who, np.arange(1, self.n + 2))
        out = {}
        for i in range(1, self.n + 1):
            s, e = bounds[i - 1], bounds[i]
            out[i] = CadlagPath(i, self.times[ev[s:e]], where[s:e], self.horizon)
        return out

    def particle_path(self, i: int) -> CadlagPath:
        if not 1 <= i <= self.n:
            raise InvalidParameterError(f"particle {i} not in 1..{self.n}")
        return self.particle_paths()[i]


def simulate_interchange(config: PathGraphConfig, key: StreamKey) -> PermutationTrajectory:
    """Full-graph run: one keyed Poisson clock per edge (stream slot = edge id), superposed."""
    n, H = int(config.n), float(config.horizon_micro)
    streams = [poisson_events(config.edge_rate, (0.0, H), key.child(stream=e)) for e in range(n + 1)]
    times, edges = merge_streams(streams)
    return PermutationTrajectory(n, H, times, edges, config.edge_rate)


def rescaled_trajectory(traj: PermutationTrajectory, i: int, T: float | None = None) -> CadlagPath:
    """``T_i(t) = Int_{n^2 t}(i) / n`` on the macro window [0, T]."""
    n2 = float(traj.n) ** 2
    if T is None:
        T = traj.horizon / n2
    if T * n2 > traj.horizon * (1 + 1e-12):
        raise OutOfRangeError(f"micro horizon {traj.horizon} < n^2 T = {T * n2}")
    micro = traj.particle_path(i)
    return _rescale(micro, traj.n, T)


def _rescale(micro: CadlagPath, n: int, T: float) -> CadlagPath:
    n2 = float(n) ** 2
    k = np.searchsorted(micro.times, T * n2, side="right")
    return CadlagPath(micro.initial_value / n, micro.times[:k] / n2, micro.values[:k] / n, T)


def rescaled_trajectories(traj: PermutationTrajectory, T: float | None = None) -> list[CadlagPath]:
    n2 = float(traj.n) ** 2
    T = traj.horizon / n2 if T is None else T
    if T * n2 > traj.horizon * (1 + 1e-12):
        raise OutOfRangeError(f"micro horizon {traj.horizon} < n^2 T = {T * n2}")
    paths = traj.particle_paths()
    return [_rescale(paths[i], traj.n, T) for i in range(1, traj.n + 1)]


def empirical_marginal(trajs: Sequence[CadlagPath], t: float) -> PointMeasure:
    """``(1/n) sum_i delta_{T_i(t)}``."""
    vals = np.array([p.value_at(t) for p in trajs], dtype=float)
    return PointMeasure.from_samples(vals)


# ---------------------------------------------------------------- covering maps


def fold_lattice(x, n: int):
    """Covering map Z -> {1..n}: reduce mod 2n into {1..2n}, then reflect the upper half."""
    if int(n) < 1:
        raise InvalidParameterError("n must be at least 1")
    y = np.mod(np.asarray(x, dtype=np.int64) - 1, 2 * n) + 1
    out = np.where(y <= n, y, 2 * n + 1 - y)
    return int(out) if out.ndim == 0 else out


def fold_real(x):
    """Covering map R -> [0, 1]: representative in (0, 2], reflected above 1."""
    y = np.mod(np.asarray(x, dtype=float), 2.0)
    y = np.where(y == 0.0, 2.0, y)
    out = np.where(y <= 1.0, y, 2.0 - y)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- lattice (Z) interchange


@nb.njit(cache=True)
def _relevant_edges(pos, out):
    # sorted distinct edge ids touching any tracked position
    m = 0
    for p in pos:
        for e in (p - 1, p):
            dup = False
            for q in range(m):
                if out[q] == e:
                    dup = True
                    break
            if not dup:
                out[m] = e
                m += 1
    for a in range(1, m):
        v = out[a]
        b = a - 1
        while b >= 0 and out[b] > v:
            out[b + 1] = out[b]
            b -= 1
        out[b + 1] = v
    return m


@nb.njit(cache=True)
def _fire(pos, e):
    for k in range(pos.size):
        if pos[k] == e:
            pos[k] = e + 1
        elif pos[k] == e + 1:
            pos[k] = e


@nb.njit(cache=True)
def _tracked(rng, start, T, edge_rate):
    k = start.size
    pos = start.copy()
    rel = np.empty(2 * k, np.int64)
    cap = 256
    times = np.empty(cap)
    states = np.empty((cap, k), np.int64)
    m = 0
    t = 0.0
    while True:
        r = _relevant_edges(pos, rel)
        t += rng.standard_exponential() / (r * edge_rate)
        if t > T:
            break
        e = rel[int(rng.random() * r)]
        _fire(pos, e)
        if m == cap:
            cap *= 2
            nt = np.empty(cap)
            ns = np.empty((cap, k), np.int64)
            nt[:m] = times[:m]
            ns[:m] = states[:m]
            times = nt
            states = ns
        times[m] = t
        states[m] = pos
        m += 1
    return times[:m], states[:m]


def tracked_lattice_interchange(
    particles: Iterable[int], T_micro: float, key: StreamKey, edge_rate: float = 0.5
) -> dict[int, CadlagPath]:
    """Interchange on Z restricted to the tracked labels.

    Only edges touching a tracked particle can move one, and by memorylessness
    the competing clocks of those edges can be redrawn after every event.
    Returns the path of every tracked particle, keyed by its starting site.
    """
    start = np.array(sorted(set(int(p) for p in particles)), dtype=np.int64)
    if start.size == 0:
        return {}
    times, states = _tracked(as_generator(key), start, float(T_micro), float(edge_rate))
    out = {}
    for col, s in enumerate(start.tolist()):
        out[s] = CadlagPath(s, times, states[:, col], T_micro).compressed()
    return out


def project_to_path_graph(path: CadlagPath, n: int) -> CadlagPath:
    """Image of a Z-valued path under ``fold_lattice``."""
    return path.map_values(lambda v: np.asarray(fold_lattice(np.asarray(v, dtype=np.int64), n), dtype=float)).compressed()


# ---------------------------------------------------------------- fast samplers


@nb.njit(cache=True)
def _snapshots(rng, n, counts):
    pos = np.arange(n + 1)
    occ = np.arange(n + 1)
    out = np.empty((counts.size, n), np.int64)
    w = n + 1
    for s in range(counts.size):
        for _ in range(counts[s]):
            e = int(rng.random() * w)
            if 0 < e < n:
                a = occ[e]
                b = occ[e + 1]
                occ[e] = b
                occ[e + 1] = a
                pos[a] = e + 1
                pos[b] = e
        out[s] = pos[1:]
    return out


def sample_positions(n: int, times_micro: Sequence[float], key: StreamKey, edge_rate: float = 0.5) -> np.ndarray:
    """Exact draws of ``Int_t(.)`` at increasing micro times, without keeping the swap log.

    The superposition of the n+1 edge clocks is a rate (n+1)*edge_rate clock
    whose marks are uniform edges, so the state at each time is obtained by
    applying a Poisson number of uniformly chosen swaps.
    Returns an array ``out[k, i-1] = Int_{times[k]}(i)``.
    """
    times = np.asarray(times_micro, dtype=float)
    if times.size and (times[0] < 0 or np.any(np.diff(times) < 0)):
        raise InvalidParameterError("times must be nonnegative and nondecreasing")
    rng = as_generator(key)
    gaps = np.diff(np.concatenate(([0.0], times)))
    counts = rng.poisson((n + 1) * edge_rate * gaps).astype(np.int64)
    return _snapshots(rng, int(n), counts)


@nb.njit(cache=True)
def _srw_skeleton(rng, start, T, rate):
    cap = int(rate * T + 6.0 * np.sqrt(rate * T + 1.0) + 16)
    times = np.empty(cap)
    vals = np.empty(cap, np.int64)
    m = 0
    t = 0.0
    x = start
    while True:
        t += rng.standard_exponential() / rate
        if t > T:
            break
        x += 1 if rng.random() < 0.5 else -1
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


def single_particle_skeleton(i: int, n: int, T_macro: float, key: StreamKey, edge_rate: float = 0.5):
    """Interval starts and values of one rescaled trajectory ``T_i`` on [0, T_macro].

    A lone tracked particle on Z sees exactly two edges, so this is the
    one-particle case of :func:`tracked_lattice_interchange` written without the
    general bookkeeping; the covering map turns it into a P_n trajectory.
    """
    n2 = float(n) ** 2
    times, vals = _srw_skeleton(as_generator(key), int(i), T_macro * n2, 2.0 * edge_rate)
    starts = np.concatenate(([0.0], times / n2))
    values = np.concatenate(([i], fold_lattice(vals, n))) / n if vals.size else np.array([i / n])
    return starts, values
