"""Stationary Poisson point process sampling with reproducible substreams.

Every random draw in a campaign comes from a counter-based Philox stream
keyed by (master_seed, stream_id), so replications are independent, any
single replication can be regenerated in isolation, and results do not
depend on scheduling or thread count.

Stream ids encode the replication and a role:

    stream = replication * 16 + role

Roles 0..15 separate the independent channels of one replication (process
points, MC query points, nested draws for difference-operator estimates).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Window

# role channels within one replication
ROLE_POINTS = 0
ROLE_QUERY = 1
ROLE_CHAOS = 2
ROLE_SCAN = 3
ROLE_CHAOS_QUERY = 4

N_ROLES = 16

# expected counts at or above 2^31 do not fit the sampling layout
MAX_MEAN = 2.0 ** 31


class IntensityOverflowError(ValueError):
    """lambda * Vol(window) is too large to sample."""


@dataclass(frozen=True, eq=False)
class RngStream:
    """A (master_seed, stream_id) pair naming one Philox substream."""

    master_seed: int
    stream: int

    def generator(self) -> np.random.Generator:
        key = np.array([self.master_seed, self.stream], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def derive_stream(master_seed: int, replication: int, role: int) -> RngStream:
    """Name the substream for (replication, role) under a master seed."""
    if not 0 <= role < N_ROLES:
        raise ValueError(f"role must be in [0, {N_ROLES}), got {role}")
    if replication < 0:
        raise ValueError(f"replication must be >= 0, got {replication}")
    if not 0 <= master_seed < 2 ** 64:
        raise ValueError("master_seed must fit in an unsigned 64-bit integer")
    return RngStream(master_seed, replication * N_ROLES + role)


@dataclass(frozen=True, eq=False)
class PointSample:
    """A realization of the process restricted to `window`."""

    points: np.ndarray  # (n, d)
    window: Window
    intensity: float

    @property
    def n(self) -> int:
        return self.points.shape[0]


def sample_poisson(intensity: float, window: Window, rng: np.random.Generator) -> PointSample:
    """Sample a homogeneous Poisson process of the given intensity on `window`.

    The count is Poisson(intensity * volume) and locations are iid uniform.
    Raises IntensityOverflowError when the expected count reaches 2^31.
    """
    if not intensity > 0.0:
        raise ValueError(f"intensity must be > 0, got {intensity}")
    mean = intensity * window.volume()
    if not mean < MAX_MEAN:
        raise IntensityOverflowError(
            f"expected count {mean:.3e} exceeds the 2^31 sampling limit")
    n = int(rng.poisson(mean))
    pts = rng.uniform(window.lo, window.hi, size=(n, window.dim))
    return PointSample(pts, window, float(intensity))
