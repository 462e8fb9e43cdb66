"""Reynolds boids on a torus with spike-driven heading kicks."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .. import kernels
from .parallel import map_chunks, partition

# keeps clamped magnitudes strictly inside the bound despite rounding
_SHRINK = 1.0 - 4 * np.finfo(np.float64).eps


@dataclass(frozen=True)
class BoidParams:
    r_neighbor: float = 25.0
    r_sep: float = 8.0
    w_coh: float = 0.01
    w_sep: float = 1.0
    w_ali: float = 0.05
    max_speed: float = 2.0
    max_force: float = 0.05
    spike_gain: float = 0.3

    def validate(self) -> "BoidParams":
        if self.r_neighbor <= 0 or self.r_sep <= 0:
            raise ValueError("boid radii must be > 0")
        if self.max_speed <= 0 or self.max_force <= 0:
            raise ValueError("max_speed and max_force must be > 0")
        return self

    def with_params(self, params: dict) -> "BoidParams":
        keep = {k: v for k, v in params.items() if k in self.__dataclass_fields__}
        return replace(self, **keep).validate()


@dataclass(eq=False)
class Boids:
    px: np.ndarray
    py: np.ndarray
    vx: np.ndarray
    vy: np.ndarray
    width: float
    height: float

    @property
    def n(self) -> int:
        return self.px.shape[0]

    @classmethod
    def spawn(cls, n: int, width: float, height: float, max_speed: float,
              rng: np.random.Generator) -> "Boids":
        ang = rng.uniform(0, 2 * math.pi, n)
        spd = rng.uniform(0.25, 1.0, n) * max_speed
        return cls(rng.uniform(0, width, n), rng.uniform(0, height, n),
                   spd * np.cos(ang), spd * np.sin(ang), float(width), float(height))


def _clamp(vx, vy, limit):
    mag = np.hypot(vx, vy)
    over = mag > limit
    if over.any():
        f = np.ones_like(mag)
        f[over] = (limit / mag[over]) * _SHRINK
        vx = vx * f
        vy = vy * f
    return vx, vy


def cohort_kicks(n_boids: int, spiking_channels, n_channels: int, gain: float) -> np.ndarray:
    """Heading rotation per boid from the channels that spiked.

    Channel ``c`` drives cohort ``c mod k`` and boid ``b`` belongs to cohort
    ``b mod k`` with ``k = min(n_channels, n_boids)``.
    """
    k = max(1, min(n_channels, n_boids))
    hits = np.bincount(np.asarray(spiking_channels, dtype=np.int64) % k, minlength=k)
    return gain * hits[np.arange(n_boids) % k]


def steering(boids: Boids, params: BoidParams, method: str = "naive",
             workers: int = 1, pool=None):
    """Raw (unclamped) steering vectors for every boid."""
    fn = kernels.boid_steer_naive if method == "naive" else kernels.boid_steer_grid
    if method not in ("naive", "grid"):
        raise ValueError(f"unknown neighbour method {method!r}")

    def run(lo_hi):
        lo, hi = lo_hi
        return fn(boids.px, boids.py, boids.vx, boids.vy, boids.width, boids.height,
                  params.r_neighbor, params.r_sep, params.w_coh, params.w_sep,
                  params.w_ali, lo, hi)

    parts = map_chunks(run, partition(boids.n, workers), pool)
    return (np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))


def step_boids(boids: Boids, params: BoidParams, spiking_channels=(), n_channels: int = 131,
               method: str = "naive", workers: int = 1, pool=None) -> Boids:
    """One Reynolds update. Returns a new :class:`Boids`."""
    params.validate()
    vx, vy = boids.vx, boids.vy
    if len(spiking_channels):
        rot = cohort_kicks(boids.n, spiking_channels, n_channels, params.spike_gain)
        c, s = np.cos(rot), np.sin(rot)
        vx, vy = c * vx - s * vy, s * vx + c * vy
    cur = Boids(boids.px, boids.py, vx, vy, boids.width, boids.height)
    sx, sy = steering(cur, params, method, workers, pool)
    sx, sy = _clamp(sx, sy, params.max_force)
    vx, vy = _clamp(vx + sx, vy + sy, params.max_speed)
    px = np.mod(boids.px + vx, boids.width)
    py = np.mod(boids.py + vy, boids.height)
    px[px >= boids.width] = 0.0
    py[py >= boids.height] = 0.0
    return Boids(px, py, vx, vy, boids.width, boids.height)
