"""Throughput benchmarks for the agent kernels, with CSV output.

Physarum is timed on a fixed field so only the agent count varies; the agent
phase (sense, turn, move, count deposits) and the field phase (deposit,
diffuse, decay) are timed separately because the field phase does not depend
on the number of agents. Boids are timed for the naive all-pairs search and
the uniform grid.
"""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .ecology.boids import BoidParams, Boids, _clamp
from .ecology.physarum import PhysarumAgents, PhysarumSpecies

PHYSARUM_COUNTS = (10_000, 100_000, 1_000_000)
BOIDS_COUNTS = (1_000, 5_000, 10_000)
# boids per unit area for the grid runs, so cell occupancy stays comparable
BOID_DENSITY = 1.0 / 64.0

FIELDS = ("model", "backend", "count", "field", "repeats", "step_s", "agent_phase_s",
          "field_phase_s", "agents_per_s")


@dataclass
class BenchRow:
    model: str
    backend: str
    count: int
    field: int
    repeats: int
    step_s: float
    agent_phase_s: float
    field_phase_s: float
    agents_per_s: float


def _best(fn, repeats: int) -> float:
    best = math.inf
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def bench_physarum(count: int, field_size: int = 1024, repeats: int = 3,
                   backend: str | None = None, seed: int = 0) -> BenchRow:
    k = kernels.get_backend(backend)
    sp = PhysarumSpecies(count=count)
    rng = np.random.default_rng(seed)
    agents = PhysarumAgents.spawn([count], field_size, field_size, rng)
    fields = rng.random((1, field_size, field_size)).astype(np.float32)
    nxt = np.empty_like(fields)
    counts = np.zeros(fields.shape, dtype=np.int32)
    scratch = np.empty((field_size, field_size))
    weights = np.ones(1)
    state = {"step": 0}

    def agent_phase():
        counts.fill(0)
        k.physarum_agents(agents.x, agents.y, agents.heading, agents.ids, fields, weights,
                          sp.sensor_angle, sp.sensor_offset, sp.step_size, sp.rotation_angle,
                          seed, state["step"], counts[0])
        state["step"] += 1

    def field_phase():
        k.deposit_diffuse_decay(fields[0], counts[0], sp.deposit, sp.decay, out=nxt[0],
                                scratch=scratch)

    agent_phase()  # compile / warm caches
    field_phase()
    t_agent = _best(agent_phase, repeats)
    t_field = _best(field_phase, repeats)
    return BenchRow("physarum", k.NAME, count, field_size, repeats, t_agent + t_field,
                    t_agent, t_field, count / t_agent)


def _boids_world(count: int) -> float:
    return math.sqrt(count / BOID_DENSITY)


def bench_boids(count: int, method: str = "naive", repeats: int = 3,
                backend: str | None = None, seed: int = 0,
                world: float | None = None) -> BenchRow:
    """``world`` defaults to a side length that keeps density at ``BOID_DENSITY``."""
    k = kernels.get_backend(backend)
    p = BoidParams()
    world = _boids_world(count) if world is None else float(world)
    b = Boids.spawn(count, world, world, p.max_speed, np.random.default_rng(seed))
    steer = k.boid_steer_naive if method == "naive" else k.boid_steer_grid

    def agent_phase():
        sx, sy = steer(b.px, b.py, b.vx, b.vy, b.width, b.height, p.r_neighbor, p.r_sep,
                       p.w_coh, p.w_sep, p.w_ali, 0, count)
        sx, sy = _clamp(sx, sy, p.max_force)
        vx, vy = _clamp(b.vx + sx, b.vy + sy, p.max_speed)
        return np.mod(b.px + vx, world), np.mod(b.py + vy, world)

    agent_phase()
    t = _best(agent_phase, repeats)
    return BenchRow(f"boids_{method}", k.NAME, count, int(round(world)), repeats, t, t, 0.0,
                    count / t)


def run_bench(backends=("numba",), physarum_counts=PHYSARUM_COUNTS, boids_counts=BOIDS_COUNTS,
              field_size: int = 1024, repeats: int = 3, boids_methods=("naive", "grid"),
              progress=None) -> list[BenchRow]:
    rows = []
    for name in backends:
        for n in physarum_counts:
            rows.append(bench_physarum(n, field_size, repeats, name))
            if progress:
                progress(rows[-1])
        for method in boids_methods:
            for n in boids_counts:
                rows.append(bench_boids(n, method, repeats, name))
                if progress:
                    progress(rows[-1])
    return rows


def to_csv(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        d = asdict(r)
        for key in ("step_s", "agent_phase_s", "field_phase_s"):
            d[key] = f"{d[key]:.6g}"
        d["agents_per_s"] = f"{d['agents_per_s']:.6g}"
        w.writerow(d)
    return buf.getvalue()


@dataclass
class Witness:
    name: str
    ratio: float
    low: float
    high: float

    @property
    def passed(self) -> bool:
        return self.low <= self.ratio <= self.high

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: time(2N)/time(N) = {self.ratio:.3f}, " \
               f"allowed [{self.low}, {self.high}]"


def physarum_witness(n: int = 100_000, field_size: int = 1024, repeats: int = 25,
                     backend: str | None = None) -> Witness:
    """Agent-phase time ratio when the agent count doubles on a fixed field."""
    a = bench_physarum(n, field_size, repeats, backend)
    b = bench_physarum(2 * n, field_size, repeats, backend)
    return Witness("physarum_linear", b.agent_phase_s / a.agent_phase_s, 1.5, 2.5)


def boids_witness(n: int = 1_000, repeats: int = 25, backend: str | None = None) -> Witness:
    """Naive neighbour search time ratio when the flock doubles in a fixed world.

    Holding the world fixed keeps the fraction of pairs that are neighbours
    constant, so every pair costs the same in both runs.
    """
    world = _boids_world(n)
    a = bench_boids(n, "naive", repeats, backend, world=world)
    b = bench_boids(2 * n, "naive", repeats, backend, world=world)
    return Witness("boids_naive_quadratic", b.step_s / a.step_s, 3.0, 5.0)
