"""Measures on [0, 1], distances between them, and the hypothesis tests used by the experiments."""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass
from typing import Callable

import numba as nb
import numpy as np
from scipy import optimize, sparse, special
from scipy.spatial import distance

from .rng import InvalidParameterError, StreamKey, as_generator

WEIGHT_TOL = 1e-12


class InvalidCdfError(ValueError):
    pass


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PointMeasure:
    """Finitely many weighted atoms; locations sorted and distinct."""

    locations: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=float).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if loc.shape != w.shape or loc.size == 0:
            raise InvalidParameterError("need matching, nonempty locations and weights")
        if np.any(w <= 0):
            raise InvalidParameterError("weights must be positive")
        if abs(w.sum() - 1.0) > WEIGHT_TOL * max(1, loc.size):
            raise InvalidParameterError(f"weights sum to {w.sum()!r}, not 1")
        order = np.argsort(loc, kind="stable")
        loc, w = loc[order], w[order]
        if np.any(np.diff(loc) == 0):
            uniq, inv = np.unique(loc, return_inverse=True)
            w = np.bincount(inv, weights=w)
            loc = uniq
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_samples(cls, samples) -> "PointMeasure":
        loc, counts = np.unique(np.asarray(samples, dtype=float), return_counts=True)
        return cls(loc, counts / counts.sum())

    @classmethod
    def dirac(cls, x: float) -> "PointMeasure":
        return cls([x], [1.0])

    @classmethod
    def lattice_uniform(cls, n: int) -> "PointMeasure":
        return cls(np.arange(1, n + 1) / n, np.full(n, 1.0 / n))

    def cdf(self, x):
        cw = np.cumsum(self.weights)
        idx = np.searchsorted(self.locations, np.asarray(x, dtype=float), side="right")
        return np.where(idx == 0, 0.0, cw[np.maximum(idx - 1, 0)])

    def mean(self) -> float:
        return float(self.locations @ self.weights)

    def equals(self, other: "PointMeasure", tol: float = 0.0) -> bool:
        return (
            self.locations.shape == other.locations.shape
            and np.array_equal(self.locations, other.locations)
            and np.allclose(self.weights, other.weights, rtol=0, atol=tol)
        )


def uniform_cdf(x):
    return np.clip(np.asarray(x, dtype=float), 0.0, 1.0)


def _check_cdf(cdf: Callable) -> None:
    probe = np.linspace(0.0, 1.0, 1025)
    vals = np.asarray(cdf(probe), dtype=float)
    if abs(vals[0]) > 1e-9 or abs(vals[-1] - 1.0) > 1e-9:
        raise InvalidCdfError("reference cdf must map 0 to 0 and 1 to 1")
    if np.any(np.diff(vals) < -1e-12) or np.any(vals < -1e-12) or np.any(vals > 1 + 1e-12):
        raise InvalidCdfError("reference cdf must be nondecreasing with values in [0, 1]")


def ks_distance(empirical: PointMeasure, reference_cdf: Callable) -> float:
    """Sup distance between the atomic CDF and a continuous reference CDF.

    For a continuous reference the supremum is attained at an atom, either at
    the atom itself or just to its left.
    """
    _check_cdf(reference_cdf)
    x = empirical.locations
    g = np.asarray(reference_cdf(x), dtype=float)
    right = np.cumsum(empirical.weights)
    left = right - empirical.weights
    return float(min(1.0, max(np.max(np.abs(right - g)), np.max(np.abs(left - g)))))


def wasserstein1(a: PointMeasure, b: PointMeasure) -> float:
    """``int |F_a - F_b| dx``, exact over the merged breakpoints."""
    pts = np.union1d(a.locations, b.locations)
    if pts.size < 2:
        return 0.0
    diff = np.abs(a.cdf(pts[:-1]) - b.cdf(pts[:-1]))
    return float(np.sum(diff * np.diff(pts)))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)


def wasserstein1_to_cdf(a: PointMeasure, cdf: Callable, mesh: int = 4096) -> float:
    """``int_0^1 |F_a - G| dx`` for a smooth reference CDF ``G``.

    Breakpoints are the atoms plus a uniform mesh; each piece is integrated
    with 6-point Gauss-Legendre (``F_a`` is constant on every piece).
    """
    return cdf_gap_integral(a.cdf, cdf, a.locations, mesh)


def cdf_gap_integral(f_step: Callable, cdf: Callable, atoms, mesh: int = 4096) -> float:
    """``int_0^1 |f_step - cdf| dx`` for a step function jumping only at ``atoms``."""
    pts = np.union1d(np.clip(atoms, 0, 1), np.linspace(0.0, 1.0, mesh + 1))
    lo, hi = pts[:-1], pts[1:]
    mid, half = (lo + hi) / 2, (hi - lo) / 2
    x = mid[:, None] + half[:, None] * _GL_X[None, :]
    step = f_step(lo)[:, None]
    g = np.asarray(cdf(x.ravel()), dtype=float).reshape(x.shape)
    return float(np.sum(np.sum(np.abs(step - g) * _GL_W[None, :], axis=1) * half))


# ---------------------------------------------------------------- 2-d transport on a grid


def cic_deposit(points: np.ndarray, m: int, weights: np.ndarray | None = None) -> np.ndarray:
    """Bilinear (cloud-in-cell) deposit of points in [0,1]^2 onto the (m+1)^2 node grid."""
    p = np.clip(np.asarray(points, dtype=float), 0.0, 1.0)
    w = np.full(p.shape[0], 1.0 / p.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    s = p * m
    i = np.minimum(np.floor(s).astype(np.int64), m - 1)
    f = s - i
    grid = np.zeros((m + 1) * (m + 1))
    for dx in (0, 1):
        wx = f[:, 0] if dx else 1 - f[:, 0]
        for dy in (0, 1):
            wy = f[:, 1] if dy else 1 - f[:, 1]
            idx = (i[:, 0] + dx) * (m + 1) + (i[:, 1] + dy)
            grid += np.bincount(idx, weights=w * wx * wy, minlength=grid.size)
    return grid.reshape(m + 1, m + 1)


def cic_smoothing_cost(points: np.ndarray, m: int, weights: np.ndarray | None = None) -> float:
    """Transport cost (l1 ground metric) of the deposit itself: sum over coordinates of 2 f (1 - f) h."""
    p = np.clip(np.asarray(points, dtype=float), 0.0, 1.0)
    w = np.full(p.shape[0], 1.0 / p.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    s = p * m
    f = s - np.minimum(np.floor(s), m - 1)
    return float(np.sum(w[:, None] * 2 * f * (1 - f)) / m)


def density_deposit(density: Callable, m: int, order: int = 4) -> tuple[np.ndarray, float]:
    """CIC deposit of an absolutely continuous law on [0,1]^2 and its smoothing cost.

    ``density(x, y)`` is evaluated at tensor Gauss-Legendre nodes of every cell
    and the deposited mass is renormalized to 1.
    """
    gx, gw = np.polynomial.legendre.leggauss(order)
    u = (gx + 1) / 2
    h = 1.0 / m
    cells = np.arange(m)
    x = ((cells[:, None] + u[None, :]) * h).ravel()
    wq = np.tile(gw / 2 * h, m)
    X, Y = np.meshgrid(x, x, indexing="ij")
    mass = np.asarray(density(X, Y), dtype=float) * np.outer(wq, wq)
    total = mass.sum()
    mass = mass / total
    pts = np.column_stack([X.ravel(), Y.ravel()])
    return cic_deposit(pts, m, mass.ravel()), cic_smoothing_cost(pts, m, mass.ravel())


def _grid_incidence(m: int):
    side = m + 1
    idx = np.arange(side * side).reshape(side, side)
    tails = np.concatenate([idx[:-1, :].ravel(), idx[:, :-1].ravel()])
    heads = np.concatenate([idx[1:, :].ravel(), idx[:, 1:].ravel()])
    e = tails.size
    rows = np.concatenate([tails, heads, heads, tails])
    cols = np.concatenate([np.arange(e), np.arange(e), np.arange(e, 2 * e), np.arange(e, 2 * e)])
    vals = np.concatenate([-np.ones(e), np.ones(e), -np.ones(e), np.ones(e)])
    return sparse.csr_matrix((vals, (rows, cols)), shape=(side * side, 2 * e))


def grid_wasserstein1(a: np.ndarray, b: np.ndarray) -> float:
    """Exact W1 (l1 ground metric) between two measures on the same (m+1)^2 grid of [0,1]^2.

    On the grid graph the shortest-path distance equals the l1 distance, so W1
    is a min-cost flow: ship ``a - b`` along grid edges at cost h per unit.
    """
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise GridMismatchError("deposits must share one square grid")
    m = a.shape[0] - 1
    a = a / a.sum()
    b = b / b.sum()
    A = _grid_incidence(m)
    cost = np.full(A.shape[1], 1.0 / m)
    res = optimize.linprog(cost, A_eq=A, b_eq=(b - a).ravel(), bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


@dataclass(frozen=True)
class PairDistance:
    lower: float
    upper: float
    grid: int


def pair_wasserstein1(points: np.ndarray, ref_deposit: np.ndarray, ref_smoothing: float) -> PairDistance:
    """Bracket W1 between an empirical law on [0,1]^2 and a deposited reference.

    The deposit map is a W1 contraction, so the grid value is a lower bound;
    adding both deposit costs gives an upper bound.
    """
    m = ref_deposit.shape[0] - 1
    dep = cic_deposit(points, m)
    lower = grid_wasserstein1(dep, ref_deposit)
    return PairDistance(lower, lower + cic_smoothing_cost(points, m) + ref_smoothing, m)


# ---------------------------------------------------------------- two-sample energy test


@dataclass(frozen=True)
class TwoSampleResult:
    statistic: float
    p_value: float
    permutations: int


def _pairwise_block(X, rows):
    return distance.cdist(X[rows], X)


def two_sample_joint_test(
    pairs_xy: np.ndarray,
    pairs_xz: np.ndarray,
    key: StreamKey,
    permutations: int = 199,
    block: int = 1024,
) -> TwoSampleResult:
    """Energy-distance test of equal joint laws with a permutation p-value.

    Each row is one sample of the concatenated grid values, e.g.
    ``(X(t_1), ..., X(t_k), Y(t_1), ..., Y(t_k))``.  All permuted statistics are
    accumulated in one pass over row blocks of the pooled distance matrix.
    """
    A = np.asarray(pairs_xy, dtype=float)
    B = np.asarray(pairs_xz, dtype=float)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise GridMismatchError("both samples need the same grid (same number of columns)")
    if A.shape[0] != B.shape[0]:
        raise GridMismatchError("sample sizes must be equal")
    na, nb = A.shape[0], B.shape[0]
    X = np.vstack([A, B])
    N = na + nb
    rng = as_generator(key)
    labels = np.zeros((N, permutations + 1), dtype=bool)
    labels[:na, 0] = True
    for p in range(1, permutations + 1):
        labels[rng.permutation(N)[:na], p] = True
    W = np.where(labels, 1.0 / na, -1.0 / nb)
    quad = np.zeros(permutations + 1)
    for s in range(0, N, block):
        rows = np.arange(s, min(N, s + block))
        quad += np.sum(W[rows] * (_pairwise_block(X, rows) @ W), axis=0)
    stats_ = -quad
    obs = stats_[0]
    p = (1 + np.count_nonzero(stats_[1:] >= obs - 1e-12 * abs(obs))) / (1 + permutations)
    return TwoSampleResult(float(obs), float(p), permutations)


@dataclass(frozen=True)
class DependenceResult:
    dcor: float
    statistic: float
    p_value: float


@nb.njit(cache=True)
def _dist(u, v):
    s = 0.0
    for k in range(u.size):
        s += (u[k] - v[k]) ** 2
    return math.sqrt(s)


@nb.njit(cache=True)
def _dcov_sums(x, y):
    n = x.shape[0]
    ra = np.zeros(n)
    rb = np.zeros(n)
    for i in range(n):
        for j in range(i + 1, n):
            a = _dist(x[i], x[j])
            b = _dist(y[i], y[j])
            ra[i] += a
            ra[j] += a
            rb[i] += b
            rb[j] += b
    ra /= n
    rb /= n
    ga = ra.mean()
    gb = rb.mean()
    sab = 0.0
    saa = 0.0
    sbb = 0.0
    for i in range(n):
        # diagonal terms: a_ii = b_ii = 0
        A = -2.0 * ra[i] + ga
        B = -2.0 * rb[i] + gb
        sab += A * B
        saa += A * A
        sbb += B * B
        for j in range(i + 1, n):
            A = _dist(x[i], x[j]) - ra[i] - ra[j] + ga
            B = _dist(y[i], y[j]) - rb[i] - rb[j] + gb
            sab += 2.0 * A * B
            saa += 2.0 * A * A
            sbb += 2.0 * B * B
    return sab / n**2, saa / n**2, sbb / n**2, ga * gb


def distance_covariance_test(x, y) -> DependenceResult:
    """Asymptotic distance-covariance test of independence between paired samples.

    The statistic ``N dCov^2 / (mean|x-x'| mean|y-y'|)`` converges under
    independence to a quadratic form with mean 1; comparing it with a chi-square(1)
    tail is conservative for p-values below about 0.2.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x = x.reshape(x.shape[0], -1)
    y = y.reshape(y.shape[0], -1)
    if x.shape[0] != y.shape[0] or x.shape[0] < 2:
        raise GridMismatchError("paired samples of equal size (at least 2) are required")
    vxy, vxx, vyy, s2 = _dcov_sums(np.ascontiguousarray(x), np.ascontiguousarray(y))
    dcor = math.sqrt(max(vxy, 0.0) / math.sqrt(vxx * vyy)) if vxx > 0 and vyy > 0 else 0.0
    stat = x.shape[0] * vxy / s2 if s2 > 0 else 0.0
    return DependenceResult(dcor, float(stat), float(special.chdtrc(1, max(stat, 0.0))))


# ---------------------------------------------------------------- trend test


@dataclass(frozen=True)
class TrendResult:
    statistic: int
    p_value: float
    increasing: bool


def mann_kendall(values, alpha: float = 0.05) -> TrendResult:
    """One-sided Mann-Kendall test for an increasing trend.

    The null law of S is enumerated exactly over permutations for up to 8
    points; beyond that the usual normal approximation with continuity
    correction is used (ties ignored).
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < 2:
        raise InvalidParameterError("need at least two values")

    def score(v):
        return int(sum(np.sign(v[j] - v[i]) for i in range(n) for j in range(i + 1, n)))

    s = score(x)
    if n <= 8:
        null = np.array([score(np.asarray(p)) for p in itertools.permutations(range(n))])
        p = float(np.mean(null >= s))
    else:
        var = n * (n - 1) * (2 * n + 5) / 18
        z = (s - 1) / math.sqrt(var) if s > 0 else 0.0
        p = float(0.5 * math.erfc(z / math.sqrt(2)))
    return TrendResult(s, p, p < alpha)


# ---------------------------------------------------------------- verdicts


@dataclass(frozen=True)
class Verdict:
    test: str
    statistic: float
    bound: float
    std_error: float
    passed: bool
    detail: str = ""

    def to_json(self) -> dict:
        d = asdict(self)
        d["pass"] = bool(d.pop("passed"))
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Verdict":
        return cls(d["test"], d["statistic"], d["bound"], d["std_error"], bool(d["pass"]), d.get("detail", ""))


def bound_verdict(test: str, estimate: float, std_error: float, bound: float, detail: str = "") -> Verdict:
    """Pass iff ``estimate - 3 std_error <= bound``."""
    return Verdict(test, float(estimate), float(bound), float(std_error), bool(estimate - 3 * std_error <= bound), detail)
