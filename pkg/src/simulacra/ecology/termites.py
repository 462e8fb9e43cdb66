"""Termite stigmergy: one agent per neuron channel.

Agents wander with heading noise, steer toward the strongest of three trail
probes and deposit when the sensed trail is strong, at a small background
probability, or unconditionally when their neuron spikes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import kernels

NONE, SPIKE, TRAIL, RANDOM = 0, 1, 2, 3
REASONS = {SPIKE: "spike", TRAIL: "trail", RANDOM: "random"}


@dataclass(frozen=True)
class TermiteParams:
    sigma: float = 0.3
    probe_angle: float = math.pi / 4
    probe_dist: float = 3.0
    turn: float = math.pi / 8
    step_size: float = 1.0
    theta_dep: float = 1.0
    p0: float = 0.005
    d_base: float = 10.0
    decay: float = 0.95


@dataclass(eq=False)
class TermiteAgents:
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def neuron_id(self) -> np.ndarray:
        return np.arange(self.n)

    @classmethod
    def spawn(cls, n_channels: int, width: int, height: int, rng: np.random.Generator):
        return cls(rng.uniform(0, width, n_channels), rng.uniform(0, height, n_channels),
                   rng.uniform(0, 2 * math.pi, n_channels))


class DepositLog:
    """Columnar log of termite deposits: (row, agent, reason).

    ``keep`` limits which reasons are stored; every reason is still counted
    in ``totals``. A full replay with trail deposits kept can run to tens of
    millions of entries, so callers that only audit spikes keep ``(SPIKE,)``.
    """

    def __init__(self, keep=(SPIKE, TRAIL, RANDOM)):
        self.keep = tuple(keep)
        self._keep = np.zeros(4, dtype=bool)
        self._keep[list(self.keep)] = True
        self._totals = np.zeros(4, dtype=np.int64)
        self.rows: list[np.ndarray] = []
        self.agents: list[np.ndarray] = []
        self.reasons: list[np.ndarray] = []

    @property
    def totals(self) -> dict[int, int]:
        return {SPIKE: int(self._totals[SPIKE]), TRAIL: int(self._totals[TRAIL]),
                RANDOM: int(self._totals[RANDOM])}

    def extend(self, row: int, flags: np.ndarray) -> None:
        tally = np.bincount(flags, minlength=4)
        if tally[0] == flags.shape[0]:
            return
        self._totals += tally
        hit = np.flatnonzero(self._keep[flags])
        if not hit.size:
            return
        self.rows.append(np.full(hit.size, row, dtype=np.int64))
        self.agents.append(hit.astype(np.int32))
        self.reasons.append(flags[hit].astype(np.int8))

    def arrays(self):
        cat = lambda xs, dt: np.concatenate(xs) if xs else np.zeros(0, dtype=dt)
        return cat(self.rows, np.int64), cat(self.agents, np.int32), cat(self.reasons, np.int8)

    def __len__(self):
        return sum(a.size for a in self.agents)


def step_termites(agents: TermiteAgents, field_values: np.ndarray, spike_row,
                  params: TermiteParams, seed: int, step: int,
                  entity0: int = 0, flags: np.ndarray | None = None,
                  counts: np.ndarray | None = None):
    """Advance all termites one step; returns ``(flags, deposit_counts)``.

    ``field_values`` is only read. The caller adds ``counts * d_base`` to the
    field, which keeps the update bulk-synchronous. ``flags`` and ``counts``
    may be passed in for reuse; both are overwritten.
    """
    spikes = np.ascontiguousarray(spike_row, dtype=np.uint8)
    if spikes.shape[0] != agents.n:
        raise ValueError("need exactly one spike bit per termite agent")
    if flags is None:
        flags = np.zeros(agents.n, dtype=np.int8)
    if counts is None:
        counts = np.zeros(field_values.shape, dtype=np.int32)
    else:
        counts.fill(0)
    kernels.termite_agents(agents.x, agents.y, agents.heading, spikes, field_values,
                           params.sigma, params.probe_angle, params.probe_dist,
                           params.turn, params.step_size, params.theta_dep,
                           params.p0, seed, step, entity0, flags, counts)
    return flags, counts
