"""Brownian motion on [0, 1] reflected at both ends: heat kernel, sampler, stationary law."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from .interchange import fold_real
from .paths import CadlagPath, OutOfRangeError
from .rng import InvalidParameterError, StreamKey, as_generator

TAIL_TOL = 1e-10


@dataclass(frozen=True)
class HeatKernelParams:
    """Truncation of the two kernel series.

    Below ``switch_time`` the Gaussian image sum over |k| <= K is used, above
    it the cosine series with K modes.  Construction fails unless the omitted
    tail of whichever series is in use is below 1e-10 for every t, which only
    needs checking at the switch time (the image tail grows with t, the cosine
    tail shrinks).
    """

    K: int = 20
    switch_time: float = 0.1

    def __post_init__(self):
        if self.K < 1:
            raise InvalidParameterError("K must be at least 1")
        if not self.switch_time > 0:
            raise InvalidParameterError("switch_time must be positive")
        img, cos = self.tail_bounds()
        if max(img, cos) >= TAIL_TOL:
            raise InvalidParameterError(f"series tails {img:.2e}, {cos:.2e} exceed {TAIL_TOL}")

    def tail_bounds(self) -> tuple[float, float]:
        t = self.switch_time
        # |k| > K: both image families sit at distance >= 2|k| - 2 from [0, 1]
        k = np.arange(self.K + 1, self.K + 400)
        phi = np.exp(-((2 * k - 2.0) ** 2) / (2 * t)) / math.sqrt(2 * math.pi * t)
        img = float(4 * phi.sum())
        cos = float(np.sum(2 * np.exp(-(k**2) * math.pi**2 * t / 2)))
        return img, cos


DEFAULT_PARAMS = HeatKernelParams()


def _prep(x, y, t):
    t = float(t)
    if not t > 0:
        raise InvalidParameterError("t must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return x, y, t


def transition_density(x, y, t: float, params: HeatKernelParams = DEFAULT_PARAMS):
    """``p_t(x, y)``; broadcasts over x and y."""
    x, y, t = _prep(x, y, t)
    x, y = np.broadcast_arrays(x, y)
    if t < params.switch_time:
        out = np.zeros(x.shape)
        c = 1.0 / math.sqrt(2 * math.pi * t)
        for k in range(-params.K, params.K + 1):
            out += np.exp(-((y - x + 2 * k) ** 2) / (2 * t)) + np.exp(-((y + x + 2 * k) ** 2) / (2 * t))
        out *= c
    else:
        out = np.ones(x.shape)
        for k in range(1, params.K + 1):
            out += 2 * np.cos(k * np.pi * x) * np.cos(k * np.pi * y) * math.exp(-(k**2) * math.pi**2 * t / 2)
    return out if out.ndim else float(out)


def transition_cdf(x, y, t: float, params: HeatKernelParams = DEFAULT_PARAMS):
    """``P_x(X_t <= y)``; broadcasts over x and y."""
    x, y, t = _prep(x, y, t)
    x, y = np.broadcast_arrays(x, y)
    if t < params.switch_time:
        s = math.sqrt(t)
        out = np.zeros(x.shape)
        for k in range(-params.K, params.K + 1):
            out += (
                special.ndtr((y - x + 2 * k) / s)
                - special.ndtr((-x + 2 * k) / s)
                + special.ndtr((y + x + 2 * k) / s)
                - special.ndtr((x + 2 * k) / s)
            )
    else:
        out = y.copy()
        for k in range(1, params.K + 1):
            out += 2 * np.cos(k * np.pi * x) * np.sin(k * np.pi * y) / (k * np.pi) * math.exp(-(k**2) * math.pi**2 * t / 2)
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


def propagated_cdf(nodes, weights, t: float, params: HeatKernelParams = DEFAULT_PARAMS) -> Callable:
    """CDF of ``fold_real(X0 + B(t))`` for the discrete initial law sum_k weights[k] delta_{nodes[k]}."""
    nodes = np.asarray(nodes, dtype=float)
    weights = np.asarray(weights, dtype=float)

    def cdf(y):
        y = np.asarray(y, dtype=float)
        if t == 0:
            return np.sum(weights * (nodes <= y[..., None]), axis=-1)
        return transition_cdf(nodes, y[..., None], t, params) @ weights

    return cdf


def _phi_antiderivative(z):
    # d/dz [z Phi(z) + phi(z)] = Phi(z)
    return z * special.ndtr(z) + np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)


def uniform_propagated_cdf(a: float, b: float, t: float, params: HeatKernelParams = DEFAULT_PARAMS) -> Callable:
    """CDF of ``fold_real(X0 + B(t))`` for X0 ~ Uniform[a, b], averaging the kernel CDF in closed form."""
    if not 0 <= a < b <= 1:
        raise InvalidParameterError("need 0 <= a < b <= 1")
    if not t > 0:
        raise InvalidParameterError("t must be positive")
    L = b - a

    def cdf(y):
        y = np.asarray(y, dtype=float)
        if t < params.switch_time:
            s = math.sqrt(t)
            G = _phi_antiderivative
            out = np.zeros(y.shape)
            for k in range(-params.K, params.K + 1):
                c = 2.0 * k
                # int_a^b Phi((c + y - x)/s) - Phi((c - x)/s) + Phi((c + y + x)/s) - Phi((c + x)/s) dx
                out += G((c + y - a) / s) - G((c + y - b) / s)
                out -= G((c - a) / s) - G((c - b) / s)
                out += G((c + y + b) / s) - G((c + y + a) / s)
                out -= G((c + b) / s) - G((c + a) / s)
            out *= s / L
        else:
            out = y.copy()
            for k in range(1, params.K + 1):
                kp = k * np.pi
                avg = (math.sin(kp * b) - math.sin(kp * a)) / (kp * L)
                out = out + 2 * avg * np.sin(kp * y) / kp * math.exp(-(k**2) * math.pi**2 * t / 2)
        return np.clip(out, 0.0, 1.0)

    return cdf


def uniform_initial_law(a: float, b: float, order: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights representing Uniform[a, b] (for propagated_cdf)."""
    if not 0 <= a < b <= 1:
        raise InvalidParameterError("need 0 <= a < b <= 1")
    gx, gw = np.polynomial.legendre.leggauss(order)
    return (a + b) / 2 + (b - a) / 2 * gx, gw / 2


def stationary_cdf(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x > 1):
        raise OutOfRangeError("x must lie in [0, 1]")
    return x.copy() if x.ndim else float(x)


def _initial(x0_law, rng, size):
    if x0_law == "uniform":
        return rng.random(size)
    if callable(x0_law):
        return np.asarray(x0_law(rng, size), dtype=float)
    x0 = float(x0_law)
    if not 0 <= x0 <= 1:
        raise OutOfRangeError("initial point must lie in [0, 1]")
    return np.full(size, x0)


def sample_reflected_grid(x0_law, grid, size: int, key: StreamKey) -> np.ndarray:
    """Exact values at ``(0, *grid)``: Gaussian increments of free BM, then ``fold_real``.

    ``x0_law`` is ``"uniform"``, a point in [0, 1], or ``f(rng, size)``.
    Returns shape ``(size, 1 + len(grid))``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or (grid.size and (grid[0] < 0 or np.any(np.diff(grid) <= 0))):
        raise InvalidParameterError("grid must be nonnegative and strictly increasing")
    rng = as_generator(key)
    x0 = _initial(x0_law, rng, size)
    if grid.size == 0:
        return x0[:, None]
    dt = np.diff(np.concatenate(([0.0], grid)))
    free = x0[:, None] + np.cumsum(rng.standard_normal((size, grid.size)) * np.sqrt(dt), axis=1)
    return np.column_stack([x0, fold_real(free)])


def sample_reflected_path(x0_law, grid, key: StreamKey, size: int = 1) -> list[CadlagPath]:
    """Grid samples wrapped as step paths jumping at the grid times (horizon = last grid time)."""
    grid = np.asarray(grid, dtype=float)
    vals = sample_reflected_grid(x0_law, grid, size, key)
    horizon = float(grid[-1]) if grid.size else 0.0
    pos = grid > 0
    out = []
    for row in vals:
        v = row[1:]
        x0 = v[~pos][-1] if np.any(~pos) else row[0]
        out.append(CadlagPath(x0, grid[pos], v[pos], horizon))
    return out


def density_table_csv(path, xs, ys, ts, params: HeatKernelParams = DEFAULT_PARAMS) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "t", "density"])
        for t in ts:
            for x in xs:
                for y in ys:
                    w.writerow([repr(float(x)), repr(float(y)), repr(float(t)), repr(transition_density(x, y, t, params))])
