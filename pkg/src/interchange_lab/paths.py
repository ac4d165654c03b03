"""Piecewise-constant right-continuous (cadlag) trajectories."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numba as nb
import numpy as np


class OutOfRangeError(ValueError):
    pass


class PathError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CadlagPath:
    """Right-continuous step function on ``[0, horizon]``.

    ``times[k]`` is the k-th jump time and ``values[k]`` the value taken from
    that time on.  A jump may keep the value unchanged; such no-op records are
    used to log events (e.g. self-loop firings) that do not move a particle.
    """

    initial_value: float
    times: np.ndarray
    values: np.ndarray
    horizon: float

    def __post_init__(self):
        times = np.ascontiguousarray(self.times, dtype=float)
        values = np.ascontiguousarray(self.values, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "initial_value", float(self.initial_value))
        object.__setattr__(self, "horizon", float(self.horizon))
        if times.shape != values.shape or times.ndim != 1:
            raise PathError("times and values must be 1-d arrays of equal length")
        if self.horizon < 0:
            raise PathError("horizon must be nonnegative")
        if times.size:
            if times[0] <= 0 or np.any(np.diff(times) <= 0):
                raise PathError("jump times must be positive and strictly increasing")
            if times[-1] > self.horizon:
                raise PathError("jump after the horizon")
        times.setflags(write=False)
        values.setflags(write=False)

    @classmethod
    def constant(cls, value: float, horizon: float) -> "CadlagPath":
        return cls(value, np.empty(0), np.empty(0), horizon)

    @property
    def n_jumps(self) -> int:
        return self.times.size

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.horizon):
            raise OutOfRangeError(f"time outside [0, {self.horizon}]")
        return t

    def _levels(self) -> np.ndarray:
        return np.concatenate(([self.initial_value], self.values))

    def value_at(self, t):
        t = self._check(t)
        out = self._levels()[np.searchsorted(self.times, t, side="right")]
        return out if out.ndim else float(out)

    def left_limit(self, t):
        t = self._check(t)
        out = self._levels()[np.searchsorted(self.times, t, side="left")]
        return out if out.ndim else float(out)

    def skeleton(self, T: float | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Interval start times (0 first) and the value on each interval, up to ``T``."""
        T = self.horizon if T is None else T
        k = np.searchsorted(self.times, T, side="right")
        starts = np.concatenate(([0.0], self.times[:k]))
        vals = np.concatenate(([self.initial_value], self.values[:k]))
        return starts, vals

    def compressed(self) -> "CadlagPath":
        """Drop jump records that leave the value unchanged."""
        prev = np.concatenate(([self.initial_value], self.values[:-1]))
        keep = self.values != prev
        return CadlagPath(self.initial_value, self.times[keep], self.values[keep], self.horizon)

    def map_values(self, f) -> "CadlagPath":
        return CadlagPath(f(np.asarray(self.initial_value)), self.times, f(self.values), self.horizon)

    def rescale_time(self, factor: float) -> "CadlagPath":
        """New path ``s -> self(factor * s)`` on ``[0, horizon / factor]``."""
        return CadlagPath(self.initial_value, self.times / factor, self.values, self.horizon / factor)

    def restrict(self, T: float) -> "CadlagPath":
        if T > self.horizon:
            raise OutOfRangeError("cannot restrict beyond the horizon")
        k = np.searchsorted(self.times, T, side="right")
        return CadlagPath(self.initial_value, self.times[:k], self.values[:k], T)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "value"])
            w.writerow([repr(0.0), repr(self.initial_value)])
            for t, v in zip(self.times.tolist(), self.values.tolist()):
                w.writerow([repr(t), repr(v)])

    @classmethod
    def from_csv(cls, path, horizon: float | None = None) -> "CadlagPath":
        rows = list(csv.reader(Path(path).open()))
        if not rows or rows[0] != ["time", "value"]:
            raise PathError("expected a time,value header")
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
        if data.size == 0 or data[0, 0] != 0.0:
            raise PathError("first row must be (0, initial_value)")
        times, values = data[1:, 0], data[1:, 1]
        if horizon is None:
            horizon = float(times[-1]) if times.size else 0.0
        return cls(data[0, 1], times, values, horizon)


def value_at(path: CadlagPath, t):
    return path.value_at(t)


def sup_distance(a: CadlagPath, b: CadlagPath, T: float | None = None) -> float:
    """Exact ``sup_{0<=t<=T} |a(t) - b(t)|``."""
    if a.horizon != b.horizon:
        raise PathError(f"horizons differ: {a.horizon} vs {b.horizon}")
    T = a.horizon if T is None else float(T)
    if not 0 <= T <= a.horizon:
        raise OutOfRangeError("T outside the common horizon")
    ta = a.times[a.times <= T]
    tb = b.times[b.times <= T]
    grid = np.union1d(np.union1d(ta, tb), [0.0])
    return float(np.max(np.abs(a.value_at(grid) - b.value_at(grid))))


@nb.njit(cache=True)
def _window_range(starts, vals, delta):
    # max over j of range(vals[i_min(j)..j]) where interval i may pair with j iff
    # starts[i+1] > starts[j] - delta (the s in interval i can come within delta of t)
    m = starts.size
    qmax = np.empty(m, np.int64)
    qmin = np.empty(m, np.int64)
    hmax = 0
    tmax = 0
    hmin = 0
    tmin = 0
    k = 0
    best = 0.0
    for j in range(m):
        while tmax > hmax and vals[qmax[tmax - 1]] <= vals[j]:
            tmax -= 1
        qmax[tmax] = j
        tmax += 1
        while tmin > hmin and vals[qmin[tmin - 1]] >= vals[j]:
            tmin -= 1
        qmin[tmin] = j
        tmin += 1
        lim = starts[j] - delta
        while k < j and starts[k] <= lim:
            k += 1
        i_min = k - 1 if k > 0 else 0
        while qmax[hmax] < i_min:
            hmax += 1
        while qmin[hmin] < i_min:
            hmin += 1
        r = vals[qmax[hmax]] - vals[qmin[hmin]]
        if r > best:
            best = r
    return best


def oscillation_modulus(path: CadlagPath, T: float, delta: float) -> float:
    """``sup { |f(t) - f(s)| : s, t in [0, T], |t - s| <= delta }``, exact."""
    if not delta > 0:
        raise PathError("delta must be positive")
    if not 0 <= T <= path.horizon:
        raise OutOfRangeError("T outside [0, horizon]")
    if T == 0:
        return 0.0
    starts, vals = path.skeleton(T)
    return float(_window_range(starts, vals, min(float(delta), float(T))))


def oscillation_modulus_arrays(starts: np.ndarray, vals: np.ndarray, delta: float) -> float:
    """Same as :func:`oscillation_modulus` on a raw (interval starts, values) skeleton."""
    return float(_window_range(np.ascontiguousarray(starts, float), np.ascontiguousarray(vals, float), float(delta)))
