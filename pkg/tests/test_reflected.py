import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from conftest import chi2_pvalue
from interchange_lab.paths import OutOfRangeError
from interchange_lab.reflected import (
    DEFAULT_PARAMS,
    HeatKernelParams,
    density_table_csv,
    propagated_cdf,
    sample_reflected_grid,
    sample_reflected_path,
    stationary_cdf,
    transition_cdf,
    transition_density,
    uniform_initial_law,
)
from interchange_lab.rng import InvalidParameterError

GL_X, GL_W = np.polynomial.legendre.leggauss(400)
NODES, WEIGHTS = (GL_X + 1) / 2, GL_W / 2


def integrate01(f):
    return float(np.sum(f(NODES) * WEIGHTS))


@pytest.mark.parametrize("x", [0.0, 0.3, 1.0])
@pytest.mark.parametrize("t", [0.01, 0.1, 1.0])
def test_normalization(x, t):
    assert abs(integrate01(lambda y: transition_density(x, y, t)) - 1) < 1e-8


@pytest.mark.parametrize("y", [0.0, 0.45, 1.0])
@pytest.mark.parametrize("t", [0.01, 0.1, 1.0])
def test_uniform_is_stationary(y, t):
    assert abs(integrate01(lambda x: transition_density(x, y, t)) - 1) < 1e-8


@settings(max_examples=200)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.002, 5.0))
def test_symmetry_and_positivity(x, y, t):
    a, b = transition_density(x, y, t), transition_density(y, x, t)
    assert abs(a - b) <= 1e-10 * max(1.0, a)
    assert a > 0


def test_peak_value_small_time():
    assert abs(transition_density(0.5, 0.5, 0.01) - 1 / math.sqrt(2 * math.pi * 0.01)) < 1e-3


def test_image_series_oracle():
    # direct image sum at K = 50, independent of the switch logic
    def images(x, y, t, K=50):
        k = np.arange(-K, K + 1)
        return np.sum(stats.norm.pdf(y - x + 2 * k, scale=math.sqrt(t)) + stats.norm.pdf(y + x + 2 * k, scale=math.sqrt(t)))

    for x, y, t in [(0.5, 0.5, 0.01), (0.1, 0.9, 0.05), (0.2, 0.3, 0.5), (0.0, 1.0, 2.0)]:
        assert transition_density(x, y, t) == pytest.approx(images(x, y, t), rel=1e-9)


def test_switch_is_continuous():
    x, y = np.meshgrid(np.linspace(0, 1, 7), np.linspace(0, 1, 7))
    lo = HeatKernelParams(K=20, switch_time=0.1001)
    hi = HeatKernelParams(K=20, switch_time=0.0999)
    assert np.allclose(transition_density(x, y, 0.1, lo), transition_density(x, y, 0.1, hi), atol=1e-9)


def test_chapman_kolmogorov():
    grid = np.linspace(0, 1, 5)
    for x in grid:
        for y in grid:
            lhs = integrate01(lambda z: transition_density(x, z, 0.05) * transition_density(z, y, 0.05))
            assert abs(lhs - transition_density(x, y, 0.1)) < 1e-6


@pytest.mark.parametrize("t", [0.02, 0.3])
def test_cdf_integrates_density(t):
    for x in (0.0, 0.4, 1.0):
        for y in (0.1, 0.5, 0.95):
            val, _ = integrate.quad(lambda z: transition_density(x, z, t), 0, y, epsabs=1e-12)
            assert transition_cdf(x, y, t) == pytest.approx(val, abs=1e-9)


def test_bad_times_and_params():
    with pytest.raises(InvalidParameterError):
        transition_density(0.5, 0.5, 0.0)
    with pytest.raises(InvalidParameterError):
        HeatKernelParams(K=1, switch_time=0.1)
    assert max(DEFAULT_PARAMS.tail_bounds()) < 1e-10


def test_stationary_cdf():
    assert stationary_cdf(0.0) == 0.0 and stationary_cdf(1.0) == 1.0 and stationary_cdf(0.25) == 0.25
    with pytest.raises(OutOfRangeError):
        stationary_cdf(1.2)


def test_propagated_uniform_stays_uniform():
    nodes, w = uniform_initial_law(0.0, 1.0)
    y = np.linspace(0, 1, 11)
    for t in (0.01, 1.0):
        assert np.allclose(propagated_cdf(nodes, w, t)(y), y, atol=1e-9)


def transition_cdf_uniform_half(y, t):
    # independent route: adaptive quadrature of 2 * P_x(X_t <= y) over x in [0, 1/2]
    return np.array([2 * integrate.quad(lambda x: transition_cdf(x, v, t), 0, 0.5, epsabs=1e-12)[0] for v in np.atleast_1d(y)])


def test_propagated_relaxes_to_uniform():
    nodes, w = uniform_initial_law(0.0, 0.5)
    y = np.linspace(0, 1, 11)
    # at t = 0 the quadrature law is atomic; its CDF is a staircase within one node gap of 2y
    assert np.allclose(propagated_cdf(nodes, w, 0.0)(y), np.minimum(2 * y, 1), atol=0.01)
    assert np.allclose(propagated_cdf(nodes, w, 0.05)(y), transition_cdf_uniform_half(y, 0.05), atol=1e-8)
    assert np.allclose(propagated_cdf(nodes, w, 8.0)(y), y, atol=1e-9)


def test_sampler_uniform_stationary(key):
    s = sample_reflected_grid("uniform", [0.1, 0.5, 2.0], 10**5, key)
    for c in range(s.shape[1]):
        assert stats.kstest(s[:, c], "uniform").pvalue > 0.001


@pytest.mark.parametrize("x0,t", [(0.5, 0.01), (0.1, 0.05), (0.9, 0.7)])
def test_sampler_matches_density(key, x0, t):
    s = sample_reflected_grid(x0, [t], 10**5, key)[:, 1]
    edges = np.linspace(0, 1, 51)
    probs = np.diff(transition_cdf(x0, edges, t))
    assert chi2_pvalue(np.histogram(s, edges)[0], probs) > 0.001


def test_sampler_grid_validation(key):
    with pytest.raises(InvalidParameterError):
        sample_reflected_grid("uniform", [0.5, 0.2], 10, key)
    only = sample_reflected_grid(0.3, [], 4, key)
    assert only.shape == (4, 1) and np.all(only == 0.3)
    paths = sample_reflected_path(0.3, [], key, size=2)
    assert paths[0].horizon == 0.0 and paths[0].value_at(0.0) == 0.3


def test_sample_paths(key):
    paths = sample_reflected_path("uniform", [0.25, 0.5], key, size=3)
    assert len(paths) == 3 and all(p.horizon == 0.5 and p.n_jumps == 2 for p in paths)


def test_density_table(tmp_path):
    f = tmp_path / "d.csv"
    density_table_csv(f, [0.5], [0.5], [0.01])
    lines = f.read_text().splitlines()
    assert lines[0] == "x,y,t,density"
    assert float(lines[1].split(",")[3]) == pytest.approx(transition_density(0.5, 0.5, 0.01))


@pytest.mark.parametrize("a,b", [(0.0, 0.5), (0.2, 0.9), (0.0, 1.0)])
@pytest.mark.parametrize("t", [0.003, 0.01, 0.09, 0.11, 1.0])
def test_uniform_closed_form_matches_quadrature(a, b, t):
    from interchange_lab.reflected import uniform_propagated_cdf

    nodes, w = uniform_initial_law(a, b, order=256)
    y = np.linspace(0, 1, 41)
    assert np.allclose(uniform_propagated_cdf(a, b, t)(y), propagated_cdf(nodes, w, t)(y), atol=1e-9)
