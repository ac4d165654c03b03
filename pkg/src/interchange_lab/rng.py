"""Keyed, reproducible random streams.

Every stream is identified by a :class:`StreamKey`.  The key's fields are
serialized canonically and hashed (BLAKE2b, 128-bit digest) together with
``SEED_SCHEME_VERSION``; the digest is the key of a Philox4x64 counter-based
generator.  Two consequences:

* the same ``(master_seed, label, version)`` always yields the same draws,
  independent of process, thread count or call order;
* streams for different replicates / edges / families never share state, so
  replicate-level work can be farmed out to any number of workers.

The default master seed can be supplied through the environment variable
``INTERCHANGE_LAB_SEED``.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

SEED_SCHEME_VERSION = 1
SEED_ENV_VAR = "INTERCHANGE_LAB_SEED"
DEFAULT_SEED = 20160101

FAMILIES = ("primary", "auxiliary", "misc")


class InvalidParameterError(ValueError):
    pass


class InvalidWindowError(ValueError):
    pass


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or raw.strip() == "":
        return DEFAULT_SEED
    try:
        return int(raw, 0)
    except ValueError as exc:
        raise InvalidParameterError(f"{SEED_ENV_VAR}={raw!r} is not an integer") from exc


@dataclass(frozen=True)
class StreamKey:
    """Label of an independent random stream.

    ``stream`` is a free integer slot, used for edge ids in per-edge Poisson
    clocks and for sub-streams of a replicate; -1 means "unused".
    """

    master_seed: int
    experiment: str = "default"
    replicate: int = 0
    stream: int = -1
    family: str = "primary"

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise InvalidParameterError("master_seed must fit in 64 unsigned bits")
        if self.family not in FAMILIES:
            raise InvalidParameterError(f"unknown stream family {self.family!r}")

    def child(self, **changes) -> "StreamKey":
        return replace(self, **changes)

    def canonical(self) -> bytes:
        return (
            f"v{SEED_SCHEME_VERSION}|{int(self.master_seed)}|{self.experiment}|"
            f"{int(self.replicate)}|{int(self.stream)}|{self.family}"
        ).encode()

    def entropy(self) -> int:
        digest = hashlib.blake2b(self.canonical(), digest_size=16).digest()
        return int.from_bytes(digest, "little")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.entropy()))

    def sort_label(self) -> tuple:
        return (self.experiment, self.replicate, self.family, self.stream)


def as_generator(key: StreamKey | np.random.Generator) -> np.random.Generator:
    if isinstance(key, np.random.Generator):
        return key
    return key.generator()


@dataclass(frozen=True)
class EventStream:
    """Firing times of one Poisson clock on the window ``[t0, t1)``."""

    rate: float
    t0: float
    t1: float
    times: np.ndarray
    label: tuple = ()

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", times)
        if times.ndim != 1:
            raise InvalidParameterError("event times must be one-dimensional")
        if times.size:
            if np.any(np.diff(times) <= 0):
                raise InvalidParameterError("event times must be strictly increasing")
            if times[0] < self.t0 or times[-1] >= self.t1:
                raise InvalidWindowError("event times fall outside the declared window")
        if self.rate == 0 and times.size:
            raise InvalidParameterError("a rate-0 stream cannot carry events")

    def __len__(self) -> int:
        return self.times.size

    @property
    def count(self) -> int:
        return self.times.size


def exponential_sample(rate: float, key: StreamKey | np.random.Generator, size=None):
    """Waiting time(s) of a rate-``rate`` exponential clock."""
    if not rate > 0 or not np.isfinite(rate):
        raise InvalidParameterError(f"exponential rate must be positive, got {rate}")
    rng = as_generator(key)
    return rng.standard_exponential(size) / rate


def _strictly_increasing(times: np.ndarray) -> np.ndarray:
    # a zero gap (probability ~2**-53 per draw) would create a tie inside one stream
    bad = np.nonzero(np.diff(times) <= 0)[0]
    for k in bad:
        if times[k + 1] <= times[k]:
            times[k + 1] = np.nextafter(times[k], np.inf)
    return times


def poisson_events(
    rate: float, window: Sequence[float], key: StreamKey | np.random.Generator
) -> EventStream:
    """Homogeneous Poisson stream on ``[t0, t1)`` built from cumulative exponential gaps."""
    t0, t1 = float(window[0]), float(window[1])
    if t0 > t1:
        raise InvalidWindowError(f"window start {t0} exceeds end {t1}")
    if rate < 0 or not np.isfinite(rate):
        raise InvalidParameterError(f"Poisson rate must be nonnegative, got {rate}")
    label = key.sort_label() if isinstance(key, StreamKey) else ()
    if rate == 0 or t0 == t1:
        return EventStream(rate, t0, t1, np.empty(0), label)
    rng = as_generator(key)
    mean = rate * (t1 - t0)
    chunk = int(mean + 6.0 * np.sqrt(mean) + 16)
    pieces = []
    last = t0
    while True:
        gaps = rng.standard_exponential(chunk) / rate
        times = last + np.cumsum(gaps)
        if times[-1] >= t1:
            pieces.append(times[times < t1])
            break
        pieces.append(times)
        last = times[-1]
    times = _strictly_increasing(np.concatenate(pieces))
    return EventStream(rate, t0, t1, times, label)


def thin_stream(
    events: EventStream, keep_probability: float, key: StreamKey | np.random.Generator
) -> EventStream:
    """Independent thinning: keep each event with probability ``keep_probability``."""
    p = float(keep_probability)
    if not 0.0 <= p <= 1.0:
        raise InvalidParameterError(f"keep probability must lie in [0, 1], got {p}")
    rng = as_generator(key)
    keep = rng.random(events.count) < p
    return EventStream(events.rate * p, events.t0, events.t1, events.times[keep], events.label)


def merge_streams(streams: Sequence[EventStream]) -> tuple[np.ndarray, np.ndarray]:
    """Superpose streams.

    Returns ``(times, source)`` where ``source[k]`` is the index (into
    ``streams``) of the stream that produced event ``k``.  Exact ties are
    ordered by stream label, then by position within the stream.
    """
    if not streams:
        return np.empty(0), np.empty(0, dtype=np.int64)
    times = np.concatenate([s.times for s in streams])
    source = np.concatenate([np.full(s.count, k, dtype=np.int64) for k, s in enumerate(streams)])
    within = np.concatenate([np.arange(s.count) for s in streams])
    ranks = np.empty(len(streams), dtype=np.int64)
    ranks[sorted(range(len(streams)), key=lambda k: streams[k].label)] = np.arange(len(streams))
    order = np.lexsort((within, ranks[source], times))
    return times[order], source[order]


def block_keys(key: StreamKey, reps: int, block: int):
    """Yield ``(start, size, key)`` for fixed-size replicate blocks.

    Block boundaries depend only on ``reps`` and ``block``, never on the number
    of workers, so blockwise results concatenate to the same arrays however the
    blocks are scheduled.
    """
    for b, start in enumerate(range(0, reps, block)):
        yield start, min(block, reps - start), key.child(replicate=b)
