import math

import numpy as np
import pytest

from interchange_lab import experiments as ex
from interchange_lab.coupling import ConcentrationRow
from interchange_lab.interchange import PathGraphConfig, rescaled_trajectory, simulate_interchange
from interchange_lab.paths import oscillation_modulus
from interchange_lab.rng import InvalidParameterError, StreamKey
from interchange_lab.ssep import HydroRow
from interchange_lab.walks import expected_visits_continuous


def test_tightness_bound_formula():
    assert ex.tightness_bound(32, 1.0, 0.25) == pytest.approx(1e3 * (0.5 + 2 / 1024))


def test_tightness_fast_matches_full_engine(key):
    # oscillation exceedance of a random label: numba skeleton route vs full P_n engine + exact modulus
    n, T, delta, N = 6, 1.0, 1 / 16, 4000
    fast = ex.tightness_experiment(n, T, [delta], N, key.child(experiment="fast"))[0].frequency
    rng = np.random.default_rng(4)
    hits = 0
    for r in range(N):
        traj = simulate_interchange(PathGraphConfig(n, 0.5, T * n * n), key.child(experiment="full", replicate=r))
        path = rescaled_trajectory(traj, int(rng.integers(1, n + 1)), T)
        hits += oscillation_modulus(path, T, delta) > delta**0.125
    full = hits / N
    pooled = (fast + full) / 2
    assert abs(fast - full) <= 4 * math.sqrt(2 * pooled * (1 - pooled) / N)


def test_tightness_validation(key):
    with pytest.raises(InvalidParameterError):
        ex.tightness_experiment(8, 1.0, [0.0], 10, key)
    with pytest.raises(InvalidParameterError):
        ex.tightness_experiment(8, 1.0, [0.1], 0, key)
    rows = ex.tightness_experiment(8, 1.0, [2.0**-4, 2.0**-8], 500, key)
    assert all(0 <= r.frequency <= 1 for r in rows)
    assert all(v.passed for v in ex.tightness_verdicts(rows))


def test_pair_grid_matches_full_engine(key):
    # two-label sampler on P_n vs. the full swap log, joint law at two grid times
    from scipy.stats import chi2_contingency

    n, grid, N = 4, np.array([0.5, 2.0]), 6000
    fast = ex.joint_pairs(n, grid / (n * n), N, key.child(experiment="fast"))
    rng = np.random.default_rng(8)
    full = np.empty_like(fast)
    for r in range(N):
        traj = simulate_interchange(PathGraphConfig(n, 0.5, 2.0), key.child(experiment="full", replicate=r))
        i, j = rng.integers(1, n + 1, size=2)
        full[r] = [traj.positions_at(t)[i - 1] / n for t in grid] + [traj.positions_at(t)[j - 1] / n for t in grid]
    code = lambda a: np.ravel_multi_index(np.rint(a * n).astype(int).T - 1, (n,) * 4)
    table = np.vstack([np.bincount(code(fast), minlength=n**4), np.bincount(code(full), minlength=n**4)])
    rare = table.sum(0) < 10
    table = np.column_stack([table[:, ~rare], table[:, rare].sum(1)])
    assert chi2_contingency(table).pvalue > 0.001
    # distinct labels never share a vertex
    distinct = fast[:, 0] != fast[:, 2]
    assert np.all(fast[:, 1] != fast[:, 3]) or np.any(~distinct)


def test_independence_small(key):
    rows = ex.independence_experiment(16, [0.0, 0.5], 600, key, permutations=49)
    assert [r.case for r in rows] == ["interchange", "power"]
    assert all(0 < r.p_value <= 1 for r in rows)


def test_marginal_experiment_small(key):
    rows = ex.marginal_experiment([8, 32], 0.1, 2000, key, grid=16)
    assert [r.n for r in rows] == [8, 32]
    assert all(0 <= r.lower <= r.upper for r in rows)
    assert rows[0].samples == 2000


def test_marginal_verdict_logic():
    rows = [ex.MarginalRow(64, 0.1, 10, 0.02, 0.03, 8), ex.MarginalRow(256, 0.1, 10, 0.01, 0.04, 8)]
    v = ex.marginal_verdicts(rows)
    assert [x.passed for x in v] == [True, True]
    rows[1] = ex.MarginalRow(256, 0.1, 10, 0.03, 0.06, 8)
    assert [x.passed for x in ex.marginal_verdicts(rows)] == [False, False]


def test_fourth_moment(key):
    rows = ex.fourth_moment_experiment([0.5, 2.0], 10**5, key)
    assert [r.exact for r in rows] == [3 * 0.25 + 0.5, 3 * 4 + 2]
    assert all(v.passed for v in ex.fourth_moment_verdicts(rows))


def test_visits_rows_use_exact_oracle(key):
    rows = ex.visits_experiment([1.0, 4.0], 20000, key)
    for r in rows:
        assert r.exact == expected_visits_continuous(0, [0], 2.0, r.T)
        assert abs(r.mean_visits - r.exact) <= 4 * r.std_error
        assert r.bound == 3 * math.sqrt(r.T)


def test_excursion_experiment_small(key):
    rows = ex.excursion_experiment([1.0, 4.0], 2000, key, gap=2)
    assert all(r.mean_J >= 1 for r in rows)
    assert all(v.passed for v in ex.returns_verdicts(rows))
    assert all(v.passed for v in ex.second_moment_verdicts(rows))


def _crow(n, pair, p, reps=10000):
    return ConcentrationRow(n, 1.0, reps, pair, p, math.sqrt(p * (1 - p) / reps), p * math.sqrt(n))


def test_concentration_verdicts_detect_growth():
    flat = [_crow(64, "1-2", 0.1), _crow(256, "1-2", 0.04), _crow(1024, "1-2", 0.01)]
    assert all(v.passed for v in ex.concentration_verdicts(flat))
    growing = [_crow(64, "1-2", 0.01), _crow(256, "1-2", 0.04), _crow(1024, "1-2", 0.1)]
    v = ex.concentration_verdicts(growing)
    assert not all(x.passed for x in v)


def test_decreasing_verdicts():
    v = ex.decreasing_verdicts("w", [0.1, 0.05, 0.051], [0.001, 0.001, 0.001], [1, 2, 3])
    assert [x.passed for x in v] == [True, True]
    assert [x.detail for x in v] == ["strict", "within noise"]
    assert not ex.decreasing_verdicts("w", [0.1, 0.2], [0.001, 0.001], [1, 2])[0].passed


def test_hydrodynamic_verdicts_grouping():
    rows = [HydroRow(n, t, 10, w, 0.0001) for t in (0.1, 1.0) for n, w in ((64, 0.01), (256, 0.005))]
    v = ex.hydrodynamic_verdicts(rows)
    assert len(v) == 4 and all(x.passed for x in v)


def test_hydrodynamic_experiment_reps_scaling(key):
    rows = ex.hydrodynamic_experiment({"type": "indicator", "support": [0.0, 0.5]}, [8, 16], [0.1], 3, key)
    assert [(r.n, r.reps) for r in rows] == [(8, 6), (16, 3)]


def test_s1_s3_verdict_shape(key):
    rows, dep = ex.s1_s3_independence(0, 2, 4.0, 1000, key)
    v = ex.s1_s3_verdicts(rows, dep)
    assert len(v) == 4
