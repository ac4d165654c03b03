import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from interchange_lab.paths import (
    CadlagPath,
    OutOfRangeError,
    PathError,
    oscillation_modulus,
    sup_distance,
)


def jump_path(v0, jumps, horizon):
    times = [t for t, _ in jumps]
    vals = [v for _, v in jumps]
    return CadlagPath(v0, np.array(times, float), np.array(vals, float), horizon)


def test_value_at_examples():
    assert CadlagPath.constant(3.0, 5.0).value_at(2.7) == 3.0
    p = jump_path(2, [(1.0, 5)], 2.0)
    assert p.value_at(1.0) == 5.0
    assert p.value_at(0.999) == 2.0
    assert p.left_limit(1.0) == 2.0
    with pytest.raises(OutOfRangeError):
        p.value_at(2.5)
    with pytest.raises(OutOfRangeError):
        p.value_at(-0.1)


def test_sup_distance_examples():
    a = jump_path(0, [(1.0, 2)], 2.0)
    assert sup_distance(a, a) == 0.0
    assert sup_distance(CadlagPath.constant(0, 2.0), CadlagPath.constant(1, 2.0)) == 1.0
    assert sup_distance(a, CadlagPath.constant(0, 2.0), 2.0) == 2.0
    with pytest.raises(PathError):
        sup_distance(a, CadlagPath.constant(0, 3.0))


def test_oscillation_examples():
    const = CadlagPath.constant(1.0, 1.0)
    for d in (0.01, 0.5, 1.0):
        assert oscillation_modulus(const, 1.0, d) == 0.0
    assert oscillation_modulus(jump_path(0, [(0.5, 1)], 1.0), 1.0, 0.1) == 1.0
    stairs = jump_path(0, [(0.3, 1), (0.6, 2), (0.9, 3)], 1.0)
    assert oscillation_modulus(stairs, 1.0, 0.35) == 2.0
    with pytest.raises(PathError):
        oscillation_modulus(stairs, 1.0, 0.0)


def brute_modulus(path, T, delta):
    """Max |f(t) - f(s)| over 0 <= t - s <= delta, by checking every pair of constancy intervals."""
    starts, vals = path.skeleton(T)
    ends = np.append(starts[1:], T)
    best = 0.0
    for i in range(len(starts)):
        for j in range(i + 1, len(starts)):
            # t - s ranges over (starts[j] - ends[i], ...), so the pair is reachable iff that gap is < delta
            if starts[j] - ends[i] < delta:
                best = max(best, abs(vals[j] - vals[i]))
    return best


def _fix(gaps_steps):
    gaps, steps, v0 = gaps_steps
    steps = steps[: len(gaps)]
    t = np.cumsum(gaps)
    return jump_path(v0, list(zip(t.tolist(), (v0 + np.cumsum(steps)).tolist())), float(t[-1] if len(t) else 0) + 0.5)


path_strategy = st.tuples(
    st.lists(st.integers(1, 16).map(lambda k: k / 16), min_size=0, max_size=12),
    st.lists(st.sampled_from([-2, -1, 1, 3]), min_size=12, max_size=12),
    st.integers(-3, 3),
).map(_fix)


@settings(max_examples=200)
@given(path_strategy, st.integers(1, 96).map(lambda k: k / 32))
def test_modulus_matches_brute_force(p, delta):
    T = p.horizon
    assert oscillation_modulus(p, T, delta) == brute_modulus(p, T, min(delta, T))


@given(path_strategy, st.floats(0.005, 2.0), st.floats(0.005, 2.0))
def test_modulus_monotone_in_delta_and_T(p, d1, d2):
    lo, hi = sorted((d1, d2))
    T = p.horizon
    assert oscillation_modulus(p, T, lo) <= oscillation_modulus(p, T, hi)
    assert oscillation_modulus(p, T / 2, lo) <= oscillation_modulus(p, T, lo)


@given(path_strategy)
def test_modulus_full_window_is_range(p):
    T = p.horizon
    _, vals = p.skeleton(T)
    assert oscillation_modulus(p, T, T) == vals.max() - vals.min()


@given(path_strategy, path_strategy, path_strategy)
def test_sup_distance_is_metric(a, b, c):
    H = max(a.horizon, b.horizon, c.horizon)
    a, b, c = (CadlagPath(p.initial_value, p.times, p.values, H) for p in (a, b, c))
    assert sup_distance(a, b) == sup_distance(b, a)
    assert sup_distance(a, c) <= sup_distance(a, b) + sup_distance(b, c) + 1e-12
    assert sup_distance(a, a) == 0.0


@given(path_strategy)
def test_csv_round_trip(tmp_path_factory, p):
    f = tmp_path_factory.mktemp("csv") / "p.csv"
    p.to_csv(f)
    q = CadlagPath.from_csv(f, p.horizon)
    assert q.initial_value == p.initial_value
    assert np.array_equal(q.times, p.times) and np.array_equal(q.values, p.values)


def test_path_validation():
    with pytest.raises(PathError):
        CadlagPath(0, np.array([0.5, 0.2]), np.array([1.0, 2.0]), 1.0)
    with pytest.raises(PathError):
        CadlagPath(0, np.array([2.0]), np.array([1.0]), 1.0)


def test_rescale_restrict_compress():
    p = jump_path(1, [(1.0, 1), (2.0, 3)], 4.0)
    assert p.compressed().n_jumps == 1
    q = p.rescale_time(2.0)
    assert q.horizon == 2.0 and q.value_at(1.0) == 3.0
    r = p.restrict(1.5)
    assert r.horizon == 1.5 and r.n_jumps == 1
