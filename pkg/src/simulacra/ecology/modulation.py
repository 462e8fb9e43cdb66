"""Affine parameter modulation by the normalised population rate."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

log = logging.getLogger(__name__)


@dataclass
class ModulationMap:
    """Per-parameter ``(value at r=0, value at r=1)`` pairs.

    A pair may be descending, which inverts the response. Outputs are clamped
    to the pair's range.
    """
    ranges: dict[str, tuple[float, float]] = field(default_factory=dict)
    spike_gain: float = 0.3
    _warned: bool = field(default=False, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {"ranges": {k: list(v) for k, v in self.ranges.items()},
                "spike_gain": self.spike_gain}


def physarum_map() -> ModulationMap:
    return ModulationMap({
        "sensor_angle": (math.radians(15.0), math.radians(30.0)),
        "sensor_offset": (3.0, 15.0),
        "step_size": (0.5, 1.5),
        "rotation_angle": (math.radians(30.0), math.radians(60.0)),
    })


def boids_map() -> ModulationMap:
    return ModulationMap({
        "w_coh": (0.005, 0.02),
        "max_speed": (1.0, 3.0),
    }, spike_gain=0.3)


def modulate(r_norm: float, mapping: ModulationMap) -> dict[str, float]:
    """Interpolate every mapped parameter at ``r_norm`` (clamped into [0, 1])."""
    if not 0.0 <= r_norm <= 1.0 or math.isnan(r_norm):
        if not mapping._warned:
            log.warning("r_norm=%r outside [0, 1]; clamping", r_norm)
            mapping._warned = True
        r_norm = 0.0 if math.isnan(r_norm) else min(1.0, max(0.0, r_norm))
    out = {}
    for name, (lo, hi) in mapping.ranges.items():
        v = lo + (hi - lo) * r_norm
        out[name] = min(max(v, min(lo, hi)), max(lo, hi))
    return out
