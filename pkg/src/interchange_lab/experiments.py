"""Monte Carlo experiments that check the quantitative statements about the interchange process.

Every experiment returns plain row dataclasses (written to CSV by the CLI)
and has a companion ``*_verdicts`` function turning rows into pass/fail
verdicts with the 3-standard-error allowance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numba as nb
import numpy as np

from .coupling import ConcentrationRow, _fold, _triple
from .interchange import _fire, _relevant_edges, _srw_skeleton, fold_lattice, sample_positions
from .parallel import run_blocks
from .paths import _window_range
from .reflected import transition_density
from .rng import InvalidParameterError, StreamKey
from .ssep import HydroRow, hydrodynamic_check
from .stats import (
    PairDistance,
    Verdict,
    bound_verdict,
    density_deposit,
    distance_covariance_test,
    mann_kendall,
    pair_wasserstein1,
    two_sample_joint_test,
)
from .walks import expected_visits_continuous, sample_displacement, visit_counts

# ---------------------------------------------------------------- tightness


@nb.njit(cache=True)
def _tightness_block(rng, n, T, deltas, reps, rate):
    out = np.empty((reps, deltas.size))
    n2 = float(n) * n
    for r in range(reps):
        i = int(rng.random() * n) + 1
        times, vals = _srw_skeleton(rng, i, T * n2, rate)
        m = times.size + 1
        starts = np.empty(m)
        v = np.empty(m)
        starts[0] = 0.0
        v[0] = i / n
        for k in range(times.size):
            starts[k + 1] = times[k] / n2
            v[k + 1] = _fold(vals[k], n) / n
        for d in range(deltas.size):
            out[r, d] = _window_range(starts, v, min(deltas[d], T))
    return out


def _tightness_job(size, key, n, T, deltas, rate):
    return _tightness_block(key.generator(), n, T, deltas, size, rate)


@dataclass(frozen=True)
class TightnessRow:
    n: int
    T: float
    delta: float
    reps: int
    frequency: float
    std_error: float
    bound: float
    empirical_constant: float


def tightness_bound(n: int, T: float, delta: float, constant: float = 1e3) -> float:
    return constant * T * (math.sqrt(delta) + 1.0 / (math.sqrt(delta) * n * n))


def tightness_experiment(
    n: int, T: float, deltas: Sequence[float], reps: int, key: StreamKey, edge_rate: float = 0.5, workers: int = 1, block: int = 1000
) -> list[TightnessRow]:
    """Frequency of ``{oscillation of T_I over some delta-window of [0, T] > delta**(1/8)}``.

    One particle with a uniformly random label I is tracked per replicate; a
    lone particle is a rate-1 walk on Z pushed through the covering map.
    """
    deltas = np.asarray(deltas, dtype=float)
    if deltas.size == 0 or np.any(deltas <= 0) or np.any(deltas > 1):
        raise InvalidParameterError("deltas must lie in (0, 1]")
    if reps < 1:
        raise InvalidParameterError("reps must be positive")
    osc = np.vstack(run_blocks(_tightness_job, key, reps, block, workers, (int(n), float(T), deltas, 2.0 * edge_rate)))
    rows = []
    for d, delta in enumerate(deltas):
        hits = osc[:, d] > delta ** 0.125
        p = float(hits.mean())
        scale = T * (math.sqrt(delta) + 1.0 / (math.sqrt(delta) * n * n))
        rows.append(TightnessRow(n, T, float(delta), reps, p, math.sqrt(p * (1 - p) / reps), tightness_bound(n, T, delta), p / scale))
    return rows


def tightness_verdicts(rows: Sequence[TightnessRow]) -> list[Verdict]:
    return [
        bound_verdict(f"tightness n={r.n} delta={r.delta:g}", r.frequency, r.std_error, r.bound, f"empirical constant {r.empirical_constant:.3g}")
        for r in rows
    ]


# ---------------------------------------------------------------- pair marginals against reflected BM


@dataclass(frozen=True)
class MarginalRow:
    n: int
    t: float
    samples: int
    lower: float
    upper: float
    grid: int


def _pair_points_job(size, key, n, t, edge_rate):
    label = np.arange(1, n + 1) / n
    out = np.empty((size * n, 2))
    for r in range(size):
        pos = sample_positions(n, [n * n * t], key.child(stream=r), edge_rate)[0]
        out[r * n : (r + 1) * n, 0] = label
        out[r * n : (r + 1) * n, 1] = pos / n
    return out


@lru_cache(maxsize=8)
def reference_pair_deposit(t: float, m: int):
    """Deposit of the law of (U, X_t): U uniform, X reflected BM from U."""
    return density_deposit(lambda x, y: transition_density(x, y, t), m)


def pair_marginal_points(n: int, t: float, samples: int, key: StreamKey, edge_rate: float = 0.5, workers: int = 1) -> np.ndarray:
    """Samples of (T_I(0), T_I(t)).

    Every replicate contributes all n labels, which is the same as drawing I
    uniformly and keeps the first coordinate exactly uniform on the lattice.
    """
    reps = max(1, math.ceil(samples / n))
    return np.vstack(run_blocks(_pair_points_job, key, reps, 4, workers, (int(n), float(t), edge_rate)))


def marginal_experiment(
    ns: Sequence[int], t: float, samples: int, key: StreamKey, grid: int = 128, edge_rate: float = 0.5, workers: int = 1
) -> list[MarginalRow]:
    ref, ref_cost = reference_pair_deposit(float(t), int(grid))
    rows = []
    for n in ns:
        pts = pair_marginal_points(n, t, samples, key.child(experiment=f"{key.experiment}/n={n}"), edge_rate, workers)
        d: PairDistance = pair_wasserstein1(pts, ref, ref_cost)
        rows.append(MarginalRow(int(n), float(t), pts.shape[0], d.lower, d.upper, d.grid))
    return rows


def marginal_verdicts(rows: Sequence[MarginalRow], threshold: float = 0.05) -> list[Verdict]:
    out = []
    for a, b in zip(rows, rows[1:]):
        out.append(Verdict(f"pair W1 decreases n={a.n}->{b.n}", b.lower, a.lower, 0.0, b.lower < a.lower))
    last = rows[-1]
    out.append(Verdict(f"pair W1 upper bound n={last.n}", last.upper, threshold, 0.0, last.upper < threshold, f"grid estimate {last.lower:.4g}"))
    return out


# ---------------------------------------------------------------- two-sample independence criterion


@nb.njit(cache=True)
def _pair_grid(rng, i, j, grid, rate, n):
    # two tracked labels of the interchange on P_n (one if i == j), read at the grid times;
    # edges 0 and n are the end loops and never move anyone
    k = 1 if i == j else 2
    pos = np.empty(k, np.int64)
    pos[0] = i
    if k == 2:
        pos[1] = j
    rel = np.empty(2 * k, np.int64)
    out = np.empty((2, grid.size), np.int64)
    t = 0.0
    g = 0
    while g < grid.size:
        r = _relevant_edges(pos, rel)
        t += rng.standard_exponential() / (r * rate)
        while g < grid.size and grid[g] < t:
            out[0, g] = pos[0]
            out[1, g] = pos[k - 1]
            g += 1
        if g == grid.size:
            break
        e = rel[int(rng.random() * r)]
        if 0 < e < n:
            _fire(pos, e)
    return out


def _joint_job(size, key, n, grid_micro, rate):
    rng = key.generator()
    labels = rng.integers(1, n + 1, size=(size, 2))
    out = np.empty((size, 2 * grid_micro.size))
    for r in range(size):
        z = _pair_grid(rng, int(labels[r, 0]), int(labels[r, 1]), grid_micro, rate, n)
        out[r] = z.ravel() / n
    return out


def _walk_grid(rng, starts, grid_micro, jump_rate, n):
    dt = np.diff(np.concatenate(([0.0], grid_micro)))
    steps = rng.poisson(jump_rate * dt, size=(starts.size, dt.size))
    disp = np.cumsum(2 * rng.binomial(steps, 0.5) - steps, axis=1)
    return fold_lattice(starts[:, None] + disp, n) / n


def _independent_job(size, key, n, grid_micro, jump_rate):
    rng = key.generator()
    labels = rng.integers(1, n + 1, size=(size, 2))
    x = _walk_grid(rng, labels[:, 0], grid_micro, jump_rate, n)
    z = _walk_grid(rng, labels[:, 1], grid_micro, jump_rate, n)
    return np.hstack([x, z])


def joint_pairs(n: int, grid: Sequence[float], N: int, key: StreamKey, edge_rate: float = 0.5, workers: int = 1) -> np.ndarray:
    """Rows ``(T_I(grid), T_J(grid))`` for I, J iid uniform labels of one interchange run on P_n.

    Only the two tracked labels are simulated: the pair is itself a Markov
    chain whose clocks are the P_n edges touching either particle.
    """
    g = np.asarray(grid, dtype=float) * n * n
    return np.vstack(run_blocks(_joint_job, key, N, 1000, workers, (int(n), g, edge_rate)))


def independent_pairs(n: int, grid: Sequence[float], N: int, key: StreamKey, edge_rate: float = 0.5, workers: int = 1) -> np.ndarray:
    """Rows ``(T_I(grid), T'_J(grid))`` with T' from an independent run (exact single-particle draws)."""
    g = np.asarray(grid, dtype=float) * n * n
    return np.vstack(run_blocks(_independent_job, key, N, 1000, workers, (int(n), g, 2.0 * edge_rate)))


@dataclass(frozen=True)
class IndependenceRow:
    case: str
    n: int
    samples: int
    statistic: float
    p_value: float


def independence_experiment(n: int, grid: Sequence[float], N: int, key: StreamKey, permutations: int = 199, workers: int = 1) -> list[IndependenceRow]:
    """Energy test of (T_I, T_J) against (T_I, T'_J), plus a synthetic power case (X, X) against (X, X')."""
    a = joint_pairs(n, grid, N, key.child(experiment=f"{key.experiment}/joint"), workers=workers)
    b = independent_pairs(n, grid, N, key.child(experiment=f"{key.experiment}/independent"), workers=workers)
    res = two_sample_joint_test(a, b, key.child(family="misc"), permutations)
    rows = [IndependenceRow("interchange", n, N, res.statistic, res.p_value)]
    k = len(grid)
    x = independent_pairs(n, grid, N, key.child(experiment=f"{key.experiment}/power"), workers=workers)
    same = np.hstack([x[:, :k], x[:, :k]])
    pw = two_sample_joint_test(same, x, key.child(family="misc", stream=1), permutations)
    rows.append(IndependenceRow("power", n, N, pw.statistic, pw.p_value))
    return rows


def independence_verdicts(rows: Sequence[IndependenceRow], level: float = 0.01) -> list[Verdict]:
    out = []
    for r in rows:
        if r.case == "power":
            out.append(Verdict("synthetic alternative rejected", r.p_value, level, 0.0, r.p_value < level))
        else:
            out.append(Verdict(f"interchange pairs not rejected n={r.n}", r.p_value, level, 0.0, r.p_value >= level))
    return out


# ---------------------------------------------------------------- walk moments and visits


@dataclass(frozen=True)
class MomentRow:
    t: float
    reps: int
    estimate: float
    std_error: float
    exact: float


def fourth_moment_experiment(ts: Sequence[float], reps: int, key: StreamKey) -> list[MomentRow]:
    """MC of E[(S(t) - S(0))^4] for the rate-1 walk against 3 t^2 + t."""
    rows = []
    for t in ts:
        d = sample_displacement(1.0, t, reps, key.child(experiment=f"{key.experiment}/t={t!r}")).astype(float) ** 4
        rows.append(MomentRow(float(t), reps, float(d.mean()), float(d.std(ddof=1) / math.sqrt(reps)), 3 * t * t + t))
    return rows


def fourth_moment_verdicts(rows: Sequence[MomentRow]) -> list[Verdict]:
    return [
        Verdict(f"fourth moment t={r.t:g}", r.estimate, r.exact, r.std_error, abs(r.estimate - r.exact) <= 4 * r.std_error)
        for r in rows
    ]


@dataclass(frozen=True)
class VisitRow:
    T: float
    reps: int
    mean_visits: float
    std_error: float
    bound: float
    per_sqrt_T: float
    exact: float


def visits_experiment(Ts: Sequence[float], reps: int, key: StreamKey, workers: int = 1) -> list[VisitRow]:
    """Visits to 0 of the rate-2 walk from 0 (edges firing at rate 1)."""
    rows = []
    for T in Ts:
        v = visit_counts(0, 2.0, T, reps, key.child(experiment=f"{key.experiment}/T={T!r}"), workers=workers)
        m = float(v.mean())
        rows.append(VisitRow(float(T), reps, m, float(v.std(ddof=1) / math.sqrt(reps)), 3 * math.sqrt(T), m / math.sqrt(T), expected_visits_continuous(0, [0], 2.0, T)))
    return rows


def visits_verdicts(rows: Sequence[VisitRow], band: float = 0.2) -> list[Verdict]:
    out = [bound_verdict(f"visits T={r.T:g}", r.mean_visits, r.std_error, r.bound) for r in rows]
    ratios = np.array([r.per_sqrt_T for r in rows])
    centre = float(np.mean(ratios))
    spread = float(np.max(np.abs(ratios / centre - 1)))
    out.append(Verdict("visits / sqrt(T) stable", spread, band, 0.0, spread <= band, f"ratios {np.round(ratios, 4).tolist()}"))
    return out


# ---------------------------------------------------------------- excursion counts and the coupled difference


@dataclass(frozen=True)
class ExcursionRow:
    T: float
    reps: int
    gap: int
    mean_J: float
    se_J: float
    mean_occupied: float
    se_occupied: float
    mean_sq_diff: float
    se_sq_diff: float
    mean_diff: float
    se_diff: float


def _excursion_job(size, key, i, j, T, rate):
    out = np.empty((size, 3))
    for r in range(size):
        k = key.child(stream=r)
        g1 = k.child(family="primary").generator()
        g2 = k.child(family="auxiliary").generator()
        _, vals, tau, tau_plus = _triple(g1, g2, i, j, T, rate)
        occupied = float(np.sum(tau_plus - tau[: tau_plus.size]))
        if tau.size > tau_plus.size:
            occupied += T - tau[-1]
        diff = float(vals[-1, 2] - vals[-1, 1]) if vals.shape[0] else 0.0
        out[r] = (tau_plus.size + 1, occupied, diff)
    return out


def excursion_experiment(Ts: Sequence[float], reps: int, key: StreamKey, gap: int = 2, edge_rate: float = 0.5, workers: int = 1) -> list[ExcursionRow]:
    """J, occupied time of the critical set and S3(T) - S2(T) for particles started ``gap`` apart (micro T)."""
    rows = []
    for T in Ts:
        sub = key.child(experiment=f"{key.experiment}/gap={gap}/T={T!r}")
        a = np.vstack(run_blocks(_excursion_job, sub, reps, 1000, workers, (0, int(gap), float(T), edge_rate)))
        se = a.std(axis=0, ddof=1) / math.sqrt(reps)
        sq = a[:, 2] ** 2
        rows.append(
            ExcursionRow(
                float(T), reps, int(gap), float(a[:, 0].mean()), float(se[0]), float(a[:, 1].mean()), float(se[1]),
                float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(reps)), float(a[:, 2].mean()), float(se[2]),
            )
        )
    return rows


def returns_verdicts(rows: Sequence[ExcursionRow]) -> list[Verdict]:
    out = []
    for r in rows:
        out.append(bound_verdict(f"E[J] T={r.T:g}", r.mean_J, r.se_J, 10 * math.sqrt(r.T)))
        out.append(bound_verdict(f"occupied time T={r.T:g}", r.mean_occupied, r.se_occupied, 10 * math.sqrt(r.T)))
    return out


def second_moment_verdicts(rows: Sequence[ExcursionRow], constant: float = 110.0) -> list[Verdict]:
    out = []
    for r in rows:
        s = math.sqrt(r.T)
        out.append(bound_verdict(f"E[(S3-S2)^2]/sqrt(T) T={r.T:g} gap={r.gap}", r.mean_sq_diff / s, r.se_sq_diff / s, constant))
        out.append(Verdict(f"E[S3-S2] = 0 T={r.T:g} gap={r.gap}", r.mean_diff, 0.0, r.se_diff, abs(r.mean_diff) <= 4 * r.se_diff + 1e-12))
    return out


def _s1_s3_job(size, key, i, j, T, fractions, rate):
    out = np.empty((size, 2 * fractions.size))
    ts = fractions * T
    for r in range(size):
        k = key.child(stream=r)
        g1 = k.child(family="primary").generator()
        g2 = k.child(family="auxiliary").generator()
        times, vals, _, _ = _triple(g1, g2, i, j, T, rate)
        idx = np.searchsorted(times, ts, side="right")
        out[r, : fractions.size] = np.concatenate(([i], vals[:, 0]))[idx]
        out[r, fractions.size :] = np.concatenate(([j], vals[:, 2]))[idx]
    return out


@dataclass(frozen=True)
class CrossRow:
    fraction: float
    correlation: float
    band: float


def s1_s3_samples(i: int, j: int, T: float, N: int, key: StreamKey, fractions=(0.25, 0.5, 1.0), edge_rate: float = 0.5, workers: int = 1) -> np.ndarray:
    """Rows ``(S1(f T) for f in fractions, S3(f T) for f in fractions)`` of independent triples (micro T)."""
    fr = np.asarray(fractions, dtype=float)
    return np.vstack(run_blocks(_s1_s3_job, key, N, 1000, workers, (int(i), int(j), float(T), fr, edge_rate)))


def s1_s3_independence(i: int, j: int, T: float, N: int, key: StreamKey, fractions=(0.25, 0.5, 1.0), edge_rate: float = 0.5, workers: int = 1):
    """Sample correlations of S1 and S3 at each fraction of T plus a distance-covariance test on the vectors."""
    a = s1_s3_samples(i, j, T, N, key, fractions, edge_rate, workers)
    k = len(fractions)
    rows = [CrossRow(float(f), float(np.corrcoef(a[:, c], a[:, k + c])[0, 1]), 4 / math.sqrt(N)) for c, f in enumerate(fractions)]
    return rows, distance_covariance_test(a[:, :k], a[:, k:])


def s1_s3_verdicts(rows: Sequence[CrossRow], dep, level: float = 1e-3) -> list[Verdict]:
    out = [Verdict(f"corr(S1, S3) at {r.fraction:g} T", r.correlation, r.band, r.band / 4, abs(r.correlation) <= r.band) for r in rows]
    out.append(Verdict("distance covariance S1 vs S3 (p-value)", dep.p_value, level, 0.0, dep.p_value > level, f"dcor={dep.dcor:.4g}"))
    return out


# ---------------------------------------------------------------- concentration trend


def concentration_verdicts(rows: Sequence[ConcentrationRow], alpha: float = 0.05) -> list[Verdict]:
    """Per pair scheme: Mann-Kendall on p_hat sqrt(n / T) over n, plus a step-wise check.

    With three values of n the exact Mann-Kendall p-value is at least 1/6, so
    the trend test alone cannot reject; the step check additionally requires
    every increase between consecutive n to stay below three combined
    standard errors.
    """
    out = []
    schemes = {}
    for r in rows:
        i, j = (int(v) for v in r.pair.split("-"))
        schemes.setdefault("adjacent" if abs(i - j) == 1 else "separated", []).append(r)
    for name, rs in schemes.items():
        rs = sorted(rs, key=lambda r: r.n)
        vals = [r.scaled for r in rs]
        ses = [r.std_error * math.sqrt(r.n / r.T) for r in rs]
        mk = mann_kendall(vals, alpha)
        out.append(Verdict(f"no increasing trend ({name} pairs)", float(mk.statistic), alpha, 0.0, not mk.increasing, f"p={mk.p_value:.3g} max={max(vals):.4g}"))
        steps = [(b - a) - 3 * math.hypot(sa, sb) for a, b, sa, sb in zip(vals, vals[1:], ses, ses[1:])]
        worst = max(steps) if steps else -1.0
        out.append(Verdict(f"no significant step increase ({name} pairs)", worst, 0.0, 0.0, worst <= 0.0, f"scaled {np.round(vals, 4).tolist()}"))
    return out


# ---------------------------------------------------------------- hydrodynamics


def hydrodynamic_experiment(
    profile: dict, ns: Sequence[int], times: Sequence[float], reps: int, key: StreamKey, edge_rate: float = 0.5, workers: int = 1
) -> list[HydroRow]:
    """Hydrodynamic distances for several n; ``reps`` is the count at the largest n.

    Smaller systems get ``reps * max(ns) / n`` replicates, which keeps the
    cost per system roughly proportional to n^2 instead of n^3.
    """
    top = max(ns)
    rows = []
    for n in ns:
        r = math.ceil(reps * top / n)
        rows += hydrodynamic_check(profile, n, times, r, key.child(experiment=f"{key.experiment}/n={n}"), edge_rate, workers=workers)
    return rows


def decreasing_verdicts(name: str, values: Sequence[float], ses: Sequence[float], labels: Sequence) -> list[Verdict]:
    """Consecutive decrease, allowing three combined standard errors."""
    out = []
    for k in range(len(values) - 1):
        a, b = values[k], values[k + 1]
        se = math.hypot(ses[k], ses[k + 1])
        out.append(Verdict(f"{name} {labels[k]}->{labels[k + 1]}", b, a, se, b - 3 * se < a, "strict" if b < a else "within noise"))
    return out


def hydrodynamic_verdicts(rows: Sequence[HydroRow], threshold: float = 0.05) -> list[Verdict]:
    out = []
    for t in sorted({r.t for r in rows}):
        rs = sorted((r for r in rows if r.t == t), key=lambda r: r.n)
        out += decreasing_verdicts(f"hydrodynamic W1 decreases t={t:g} n", [r.wasserstein for r in rs], [r.std_error for r in rs], [r.n for r in rs])
        last = rs[-1]
        out.append(bound_verdict(f"hydrodynamic W1 t={t:g} n={last.n}", last.wasserstein, last.std_error, threshold))
    return out
