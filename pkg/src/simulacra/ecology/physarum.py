"""Multi-species physarum (sense, rotate, move, deposit) over coupled trail fields."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .. import kernels
from .parallel import map_chunks, partition

MAX_SPECIES = 4
_SPECIES_SHIFT = 40


@dataclass(frozen=True)
class PhysarumSpecies:
    sensor_angle: float = math.radians(22.5)
    sensor_offset: float = 9.0
    step_size: float = 1.0
    rotation_angle: float = math.radians(45.0)
    deposit: float = 5.0
    count: int = 250_000
    decay: float = 0.9

    def validate(self) -> "PhysarumSpecies":
        if self.sensor_offset < 1:
            raise ValueError("sensor_offset must be >= 1")
        if not 0 < self.sensor_angle < math.pi:
            raise ValueError("sensor_angle must lie in (0, pi)")
        if self.count < 0:
            raise ValueError("species count must be >= 0")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must lie in (0, 1]")
        return self

    def with_params(self, params: dict) -> "PhysarumSpecies":
        keep = {k: v for k, v in params.items() if k in _MODULATED}
        return replace(self, **keep).validate()


_MODULATED = ("sensor_angle", "sensor_offset", "step_size", "rotation_angle", "deposit")


@dataclass(eq=False)
class PhysarumAgents:
    """Agents stored contiguously per species; ``offsets[s]:offsets[s+1]``.

    ``ids`` are the stable entity keys of the counter-based RNG, so agents
    can be reordered (see :func:`sort_spatially`) without changing results.
    """
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    offsets: np.ndarray
    ids: np.ndarray

    @property
    def species(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.offsets) - 1), np.diff(self.offsets))

    def slice(self, s: int) -> slice:
        return slice(int(self.offsets[s]), int(self.offsets[s + 1]))

    @classmethod
    def spawn(cls, counts, width: int, height: int, rng: np.random.Generator):
        n = int(sum(counts))
        offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        ids = np.concatenate([(np.uint64(s) << np.uint64(_SPECIES_SHIFT))
                              + np.arange(c, dtype=np.uint64)
                              for s, c in enumerate(counts)] or [np.zeros(0, np.uint64)])
        return cls(rng.uniform(0, width, n), rng.uniform(0, height, n),
                   rng.uniform(0, 2 * math.pi, n), offsets, ids.astype(np.uint64))

    def by_id(self) -> "PhysarumAgents":
        """Copy with agents in canonical id order (for comparisons and digests)."""
        o = np.argsort(self.ids, kind="stable")
        return PhysarumAgents(self.x[o], self.y[o], self.heading[o], self.offsets.copy(),
                              self.ids[o])


def sort_spatially(agents: PhysarumAgents, width: int) -> None:
    """Reorder each species block by occupied cell to improve memory locality."""
    for s in range(len(agents.offsets) - 1):
        sl = agents.slice(s)
        key = np.floor(agents.y[sl]).astype(np.int64) * width + np.floor(agents.x[sl]).astype(np.int64)
        o = np.argsort(key, kind="stable")
        for arr in (agents.x, agents.y, agents.heading, agents.ids):
            arr[sl] = arr[sl][o]


def default_coupling(n_species: int, own: float = 1.0, other: float = 0.25) -> np.ndarray:
    c = np.full((n_species, n_species), other)
    np.fill_diagonal(c, own)
    return c


def step_physarum(agents: PhysarumAgents, fields: np.ndarray, species, coupling,
                  seed: int, step: int, workers: int = 1, pool=None,
                  counts: np.ndarray | None = None) -> np.ndarray:
    """Move every agent one step and return per-species deposit counts.

    Agents read the fields and never write them; each chunk of agents counts
    its deposits into a private integer buffer and the buffers are summed,
    so results do not depend on how agents are split across workers.
    Returns an integer array shaped like ``fields`` (``counts`` if given,
    zeroed first).
    """
    n_species = len(species)
    if n_species > MAX_SPECIES:
        raise ValueError(f"at most {MAX_SPECIES} species")
    if fields.shape[0] != n_species:
        raise ValueError("need one trail field per species")
    coupling = np.ascontiguousarray(coupling, dtype=np.float64)
    height, width = fields.shape[1:]
    if counts is None:
        counts = np.zeros(fields.shape, dtype=np.int32)
    else:
        counts.fill(0)
    for s, sp in enumerate(species):
        sl = agents.slice(s)
        n = sl.stop - sl.start
        if n == 0:
            continue
        weights = np.ascontiguousarray(coupling[s])
        chunks = partition(n, workers)
        single = len(chunks) == 1

        def run(lo_hi, s=s, sp=sp, sl=sl, weights=weights, single=single):
            lo, hi = lo_hi
            a, b = sl.start + lo, sl.start + hi
            buf = counts[s] if single else np.zeros((height, width), dtype=counts.dtype)
            kernels.physarum_agents(agents.x[a:b], agents.y[a:b], agents.heading[a:b],
                                    agents.ids[a:b], fields, weights,
                                    sp.sensor_angle, sp.sensor_offset, sp.step_size,
                                    sp.rotation_angle, seed, step, buf)
            return buf

        bufs = map_chunks(run, chunks, pool)
        if not single:
            for buf in bufs:
                counts[s] += buf
    return counts


def deposit_and_diffuse(fields: np.ndarray, counts: np.ndarray, species,
                        out: np.ndarray | None = None, scratch: np.ndarray | None = None):
    """Add deposits then diffuse and decay every species field; returns new fields."""
    if out is None:
        out = np.empty_like(fields)
    for s, sp in enumerate(species):
        kernels.deposit_diffuse_decay(fields[s], counts[s], sp.deposit, sp.decay,
                                      out=out[s], scratch=scratch)
    return out
