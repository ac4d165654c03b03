import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from conftest import chi2_pvalue
from interchange_lab.rng import (
    EventStream,
    InvalidParameterError,
    InvalidWindowError,
    StreamKey,
    block_keys,
    default_seed,
    exponential_sample,
    merge_streams,
    poisson_events,
    thin_stream,
)


@pytest.mark.parametrize("rate,mean,tol", [(1.0, 1.0, 0.01), (2.0, 0.5, 0.005)])
def test_exponential_mean(key, rate, mean, tol):
    x = exponential_sample(rate, key.child(experiment=f"exp{rate}"), size=10**6)
    assert np.all(x > 0)
    assert abs(x.mean() - mean) < tol


@pytest.mark.parametrize("rate", [0.0, -1.0, np.inf])
def test_exponential_rejects_bad_rate(key, rate):
    with pytest.raises(InvalidParameterError):
        exponential_sample(rate, key)


def test_poisson_rate_zero_is_empty(key):
    assert poisson_events(0.0, (0.0, 5.0), key).count == 0


def test_poisson_bad_window(key):
    with pytest.raises(InvalidWindowError):
        poisson_events(1.0, (2.0, 1.0), key)


def test_poisson_mean_count(key):
    rng = key.generator()
    counts = np.array([poisson_events(1.0, (0.0, 10.0), rng).count for _ in range(10**5)])
    assert abs(counts.mean() - 10) < 0.1


def test_poisson_counts_law(key):
    rng = key.generator()
    counts = np.array([poisson_events(0.5, (0.0, 4.0), rng).count for _ in range(20000)])
    kmax = counts.max() + 1
    obs = np.bincount(counts, minlength=kmax + 1)
    probs = stats.poisson.pmf(np.arange(kmax + 1), 2.0)
    probs[-1] += stats.poisson.sf(kmax, 2.0)
    assert chi2_pvalue(obs, probs) > 0.01


def test_poisson_events_inside_window(key):
    s = poisson_events(3.0, (1.5, 7.0), key)
    assert np.all(s.times >= 1.5) and np.all(s.times < 7.0)
    assert np.all(np.diff(s.times) > 0)


def test_thin_extremes(key):
    s = poisson_events(2.0, (0.0, 10.0), key)
    kept = thin_stream(s, 1.0, key.child(stream=1))
    assert np.array_equal(kept.times, s.times)
    assert thin_stream(s, 0.0, key.child(stream=2)).count == 0
    with pytest.raises(InvalidParameterError):
        thin_stream(s, 1.5, key)


def test_thin_mean_count(key):
    rng = key.generator()
    counts = [thin_stream(poisson_events(1.0, (0.0, 100.0), rng), 0.5, rng).count for _ in range(10**4)]
    assert abs(np.mean(counts) - 50) < 1.5


def test_determinism_same_key(key):
    a = poisson_events(1.0, (0.0, 50.0), key.child(stream=3))
    b = poisson_events(1.0, (0.0, 50.0), key.child(stream=3))
    assert np.array_equal(a.times, b.times)


def test_disjoint_labels_uncorrelated(key):
    a = exponential_sample(1.0, key.child(stream=0), size=20000)
    b = exponential_sample(1.0, key.child(stream=1), size=20000)
    r = np.corrcoef(a, b)[0, 1]
    assert abs(r) < 3 / np.sqrt(a.size)


def test_superposition_is_poisson(key):
    rng = key.generator()
    counts = []
    for _ in range(20000):
        t, _ = merge_streams([poisson_events(0.7, (0.0, 2.0), rng), poisson_events(1.3, (0.0, 2.0), rng)])
        counts.append(t.size)
    counts = np.array(counts)
    kmax = counts.max() + 1
    probs = stats.poisson.pmf(np.arange(kmax + 1), 4.0)
    probs[-1] += stats.poisson.sf(kmax, 4.0)
    assert chi2_pvalue(np.bincount(counts, minlength=kmax + 1), probs) > 0.01


def test_merge_ties_ordered_by_label_then_index():
    a = EventStream(1.0, 0.0, 5.0, np.array([1.0, 2.0]), label=("b",))
    b = EventStream(1.0, 0.0, 5.0, np.array([1.0, 3.0]), label=("a",))
    times, source = merge_streams([a, b])
    assert times.tolist() == [1.0, 1.0, 2.0, 3.0]
    assert source.tolist() == [1, 0, 0, 1]


def test_event_stream_validation():
    with pytest.raises(InvalidParameterError):
        EventStream(1.0, 0.0, 1.0, np.array([0.5, 0.2]))
    with pytest.raises(InvalidWindowError):
        EventStream(1.0, 0.0, 1.0, np.array([1.0]))


def test_default_seed_env(monkeypatch):
    monkeypatch.setenv("INTERCHANGE_LAB_SEED", "99")
    assert default_seed() == 99
    monkeypatch.delenv("INTERCHANGE_LAB_SEED")
    assert isinstance(default_seed(), int)


@given(reps=st.integers(1, 5000), block=st.integers(1, 700))
def test_block_keys_partition(reps, block):
    blocks = list(block_keys(StreamKey(1, "b"), reps, block))
    starts = [s for s, _, _ in blocks]
    sizes = [n for _, n, _ in blocks]
    assert sum(sizes) == reps
    assert starts == list(np.cumsum([0] + sizes[:-1]))
    assert len({k.generator().integers(2**62) for _, _, k in blocks}) == len(blocks)


@settings(max_examples=30)
@given(seed=st.integers(0, 2**63), label=st.text(max_size=8))
def test_key_generators_reproducible(seed, label):
    k = StreamKey(seed, label, replicate=3, stream=7)
    assert np.array_equal(k.generator().random(4), k.generator().random(4))
    assert not np.array_equal(k.generator().random(4), k.child(stream=8).generator().random(4))
