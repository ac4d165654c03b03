"""Symmetric simple exclusion on P_n, read off the interchange permutation.

A vertex is black at time t iff the label sitting there started on a black
vertex, so the occupancy process is the image of the interchange swap log
under the initial coloring.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numba as nb
import numpy as np

from .interchange import PathGraphConfig, PermutationTrajectory, sample_positions, simulate_interchange
from .reflected import HeatKernelParams, DEFAULT_PARAMS, propagated_cdf, uniform_initial_law, uniform_propagated_cdf
from .parallel import run_blocks
from .rng import InvalidParameterError, StreamKey
from .stats import PointMeasure, cdf_gap_integral


class EmptyOccupancyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class OccupancyConfig:
    """``eta0[v-1] = 1`` iff vertex v starts black."""

    eta0: np.ndarray

    def __post_init__(self):
        eta = np.asarray(self.eta0).astype(np.int8)
        if eta.ndim != 1 or eta.size == 0 or np.any((eta != 0) & (eta != 1)):
            raise InvalidParameterError("eta0 must be a nonempty 0/1 vector")
        if eta.sum() == 0:
            raise EmptyOccupancyError("at least one black particle is required")
        eta.setflags(write=False)
        object.__setattr__(self, "eta0", eta)

    @property
    def n(self) -> int:
        return self.eta0.size

    @property
    def count(self) -> int:
        return int(self.eta0.sum())

    @property
    def black_labels(self) -> np.ndarray:
        return np.flatnonzero(self.eta0) + 1


def discretize_profile(profile: dict, n: int) -> OccupancyConfig:
    """Occupancy of P_n for a macro profile.

    ``{"type": "indicator", "support": [a, b]}`` blackens vertex i iff
    ``a < i/n <= b``; ``{"type": "atoms", "positions": [...]}`` blackens vertex
    ``ceil(x n)`` for each x (clamped to 1..n).
    """
    kind = profile.get("type")
    eta = np.zeros(n, dtype=np.int8)
    if kind == "indicator":
        a, b = (float(v) for v in profile["support"])
        if not 0 <= a < b <= 1:
            raise InvalidParameterError("indicator support must satisfy 0 <= a < b <= 1")
        x = np.arange(1, n + 1) / n
        eta[(x > a) & (x <= b)] = 1
    elif kind == "atoms":
        pos = np.asarray(profile["positions"], dtype=float)
        if pos.size == 0 or np.any(pos < 0) or np.any(pos > 1):
            raise InvalidParameterError("atom positions must be a nonempty list in [0, 1]")
        sites = np.clip(np.ceil(pos * n).astype(np.int64), 1, n)
        eta[sites - 1] = 1
    else:
        raise InvalidParameterError(f"unknown profile type {kind!r}")
    return OccupancyConfig(eta)


def profile_initial_law(profile: dict) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the macro initial law X0 described by a profile."""
    if profile.get("type") == "indicator":
        a, b = (float(v) for v in profile["support"])
        return uniform_initial_law(a, b)
    if profile.get("type") == "atoms":
        pos = np.unique(np.asarray(profile["positions"], dtype=float))
        return pos, np.full(pos.size, 1.0 / pos.size)
    raise InvalidParameterError(f"unknown profile type {profile.get('type')!r}")


@dataclass(frozen=True, eq=False)
class OccupancyTrajectory:
    config: OccupancyConfig
    interchange: PermutationTrajectory
    horizon: float

    @property
    def n(self) -> int:
        return self.config.n

    def eta_at(self, t: float) -> np.ndarray:
        """Occupancy at macro time t."""
        occ = self.interchange.occupants_at(t * self.n**2)
        return self.config.eta0[occ - 1].copy()

    def black_count_per_event(self) -> np.ndarray:
        """Number of black vertices after every logged event (recounted from scratch each time)."""
        return _counts(self.n, self.config.eta0.astype(np.int64), self.interchange.edges)


@nb.njit(cache=True)
def _counts(n, eta0, edges):
    occ = np.arange(n + 1)
    out = np.empty(edges.size, np.int64)
    for k in range(edges.size):
        e = edges[k]
        if 0 < e < n:
            a = occ[e]
            occ[e] = occ[e + 1]
            occ[e + 1] = a
        c = 0
        for v in range(1, n + 1):
            c += eta0[occ[v] - 1]
        out[k] = c
    return out


def simulate_ssep(n: int, eta0: OccupancyConfig, T: float, key: StreamKey, edge_rate: float = 0.5) -> OccupancyTrajectory:
    if eta0.n != n:
        raise InvalidParameterError("occupancy vector length must equal n")
    traj = simulate_interchange(PathGraphConfig(n, edge_rate, T * n**2), key)
    return OccupancyTrajectory(eta0, traj, T)


def empirical_density(eta_t, n: int) -> PointMeasure:
    """Atoms of mass 1/|eta| at i/n for every black vertex i."""
    eta = np.asarray(eta_t)
    if eta.size != n:
        raise InvalidParameterError("occupancy vector length must equal n")
    sites = np.flatnonzero(eta) + 1
    if sites.size == 0:
        raise EmptyOccupancyError("no black particle")
    return PointMeasure(sites / n, np.full(sites.size, 1.0 / sites.size))


def black_particle_marginal(traj: OccupancyTrajectory, t: float) -> PointMeasure:
    """Law of T_J(t) for a uniformly chosen black label J, given the swap log."""
    pos = traj.interchange.positions_at(t * traj.n**2)
    labels = traj.config.black_labels
    return PointMeasure(pos[labels - 1] / traj.n, np.full(labels.size, 1.0 / labels.size))


@dataclass(frozen=True)
class HydroRow:
    n: int
    t: float
    reps: int
    wasserstein: float
    std_error: float


def _density_block(size, key, n, micro, black, edge_rate):
    s1 = np.zeros((micro.size, n))
    s2 = np.zeros((micro.size, n))
    for r in range(size):
        pos = sample_positions(n, micro, key.child(stream=r), edge_rate)
        occ = np.zeros((micro.size, n))
        np.put_along_axis(occ, pos[:, black] - 1, 1.0, axis=1)
        F = np.cumsum(occ, axis=1) / black.size
        s1 += F
        s2 += F * F
    return s1, s2


def mean_density_cdf(
    profile: dict, n: int, times: Sequence[float], reps: int, key: StreamKey, edge_rate: float = 0.5, block: int = 16, workers: int = 1
):
    """MC mean of the CDF of rho_n(t) at the vertices, plus its pointwise standard error.

    Returns arrays of shape ``(len(times), n)``.
    """
    if reps < 1:
        raise InvalidParameterError("reps must be positive")
    cfg = discretize_profile(profile, n)
    micro = np.asarray(times, dtype=float) * n**2
    parts = run_blocks(_density_block, key, reps, block, workers, (n, micro, cfg.black_labels - 1, edge_rate))
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    mean = s1 / reps
    var = np.maximum(s2 / reps - mean**2, 0.0) * reps / max(reps - 1, 1)
    return mean, np.sqrt(var / reps)


def hydrodynamic_check(
    profile: dict,
    n: int,
    times: Sequence[float],
    reps: int,
    key: StreamKey,
    edge_rate: float = 0.5,
    params: HeatKernelParams = DEFAULT_PARAMS,
    workers: int = 1,
) -> list[HydroRow]:
    """W1 between the MC-mean of rho_n(t) and the law of fold_real(X0 + B(t)).

    ``std_error`` is the integral over [0, 1] of the pointwise CDF standard
    error, a first-order bound on the MC fluctuation of the distance.
    """
    mean, se = mean_density_cdf(profile, n, times, reps, key, edge_rate, workers=workers)
    nodes, weights = profile_initial_law(profile)
    grid = np.arange(1, n + 1) / n
    rows = []
    for k, t in enumerate(times):
        Fk = mean[k]

        def step(x, Fk=Fk):
            idx = np.searchsorted(grid, x, side="right")
            return np.where(idx == 0, 0.0, Fk[np.maximum(idx - 1, 0)])

        if profile.get("type") == "indicator" and t > 0:
            ref = uniform_propagated_cdf(*(float(v) for v in profile["support"]), float(t), params)
        else:
            ref = propagated_cdf(nodes, weights, float(t), params)
        w1 = cdf_gap_integral(step, ref, grid)
        rows.append(HydroRow(n, float(t), reps, w1, float(np.sum(se[k]) / n)))
    return rows
