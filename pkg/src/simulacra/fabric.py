"""Solenoid strikes from backbone spikes and frames for two 16x16 LED panels."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clock import PlaybackConfig, row_duration
from .dataset import NeuronMeta, RateSeries, SpikeRaster, meta_arrays


@dataclass(frozen=True)
class FabricProfile:
    n_solenoids: int = 27
    refractory_ms: float = 40.0
    velocity_floor: float = 0.3
    led_fps: float = 30.0
    led_decay: float = 0.85
    led_size: int = 16

    def validate(self) -> "FabricProfile":
        if self.n_solenoids < 1:
            raise ValueError("need at least one solenoid")
        if self.refractory_ms < 0:
            raise ValueError("refractory_ms must be >= 0")
        if not 0.0 <= self.velocity_floor <= 1.0:
            raise ValueError("velocity_floor must lie in [0, 1]")
        if self.led_fps <= 0:
            raise ValueError("led_fps must be > 0")
        if not 0.0 <= self.led_decay < 1.0:
            raise ValueError("led_decay must lie in [0, 1)")
        if self.led_size < 1:
            raise ValueError("led_size must be >= 1")
        return self


@dataclass(frozen=True)
class SolenoidStrike:
    solenoid_id: int
    onset: float
    velocity: float
    row: int

    def to_json(self) -> dict:
        return {"id": self.solenoid_id, "onset": self.onset, "velocity": self.velocity,
                "row": self.row}

    def osc(self) -> tuple[str, list]:
        return "/fab/solenoid", [int(self.solenoid_id), float(self.velocity)]


@dataclass
class StrikeReport:
    strikes: list[SolenoidStrike]
    suppressed: int
    total_spikes: int

    @property
    def emitted(self) -> int:
        return len(self.strikes)


class SolenoidMapper:
    """Stateful per-row strike generator with a per-solenoid refractory gate."""

    def __init__(self, backbone: list[int], profile: FabricProfile = FabricProfile()):
        profile.validate()
        if len(backbone) != profile.n_solenoids:
            raise ValueError(f"need exactly {profile.n_solenoids} backbone neurons, "
                             f"got {len(backbone)}")
        if len(set(backbone)) != len(backbone):
            raise ValueError("backbone channels must be distinct")
        self.backbone = np.asarray(backbone, dtype=np.int64)
        self.profile = profile
        self._last = np.full(len(backbone), -np.inf)
        self.suppressed = 0
        self.total_spikes = 0

    def velocity(self, r_norm: float) -> float:
        f = self.profile.velocity_floor
        return f + (1.0 - f) * min(max(float(r_norm), 0.0), 1.0)

    def on_row(self, row: int, spike_row, r_norm: float, t_ms: float) -> list[SolenoidStrike]:
        fired = np.flatnonzero(np.asarray(spike_row)[self.backbone])
        out = []
        for sid in fired.tolist():
            self.total_spikes += 1
            if t_ms - self._last[sid] < self.profile.refractory_ms:
                self.suppressed += 1
                continue
            self._last[sid] = t_ms
            out.append(SolenoidStrike(sid, t_ms, self.velocity(r_norm), row))
        return out


def strikes_from_spikes(raster: SpikeRaster, backbone: list[int], rate: RateSeries,
                        config: PlaybackConfig = PlaybackConfig(),
                        profile: FabricProfile = FabricProfile()) -> StrikeReport:
    """All strikes of one playback pass, sorted by onset then solenoid id.

    ``backbone`` lists channel ids in rank order; rank ``i`` drives solenoid ``i``.
    """
    mapper = SolenoidMapper(backbone, profile)
    start, end = config.bounds(raster.n_rows)
    row_ms = row_duration(config, raster.dt_ms)
    sub = raster.spikes[start:end][:, mapper.backbone]
    rows, _ = np.nonzero(sub)
    strikes = []
    for row in np.unique(rows).tolist():
        r = start + row
        strikes.extend(mapper.on_row(r, raster.spikes[r], rate.norm[r], row * row_ms))
    return StrikeReport(strikes, mapper.suppressed, mapper.total_spikes)


# ------------------------------------------------------------------- LEDs
@dataclass(frozen=True)
class LedFrame:
    matrix_id: int
    index: int
    t: float
    pixels: np.ndarray  # (size, size, 3) uint8, row-major by y

    def payload(self) -> bytes:
        return self.pixels.tobytes()

    def osc(self) -> tuple[str, list]:
        return f"/fab/led/{self.matrix_id}", [self.payload()]


def led_cells(meta: list[NeuronMeta], size: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Panel cell ``(cx, cy)`` for every channel: floor of ``size * coordinate``."""
    _, x, y, _ = meta_arrays(meta)
    cx = np.clip(np.floor(size * x).astype(np.int64), 0, size - 1)
    cy = np.clip(np.floor(size * y).astype(np.int64), 0, size - 1)
    return cx, cy


class LedRenderer:
    """Brightness state for both panels.

    Panel 0 shows every channel, panel 1 only the backbone with its green
    component scaled by the agent-cluster intensity under each cell.
    """

    def __init__(self, meta: list[NeuronMeta], profile: FabricProfile = FabricProfile()):
        self.profile = profile.validate()
        n = profile.led_size
        self.cx, self.cy = led_cells(meta, n)
        self.is_backbone = meta_arrays(meta)[3]
        self.level = np.zeros((2, n, n))
        self.index = 0
        self._cluster_src = None
        self._green = None

    def frame_time(self, k: int) -> float:
        return k * 1000.0 / self.profile.led_fps

    def render(self, fired_channels, cluster: np.ndarray | None = None) -> tuple[LedFrame, LedFrame]:
        """Advance one frame: decay, light channels that fired since the last frame."""
        n = self.profile.led_size
        level = self.level
        level *= self.profile.led_decay
        fired = np.asarray(fired_channels, dtype=np.int64)
        if fired.size:
            level[0, self.cy[fired], self.cx[fired]] = 1.0
            bb = fired[self.is_backbone[fired]]
            level[1, self.cy[bb], self.cx[bb]] = 1.0
        v = np.rint(255.0 * level).astype(np.uint8)
        p0 = np.repeat(v[0, :, :, None], 3, axis=2)
        p1 = np.empty((n, n, 3), dtype=np.uint8)
        p1[:, :, 0] = v[1]
        p1[:, :, 2] = v[1]
        if cluster is None:
            p1[:, :, 1] = v[1]
        else:
            if cluster is not self._cluster_src:
                self._cluster_src = cluster
                self._green = np.clip(_resample(np.asarray(cluster, dtype=np.float64), n),
                                      0.0, 1.0)
            p1[:, :, 1] = np.rint(255.0 * level[1] * self._green)
        t = self.frame_time(self.index)
        out = (LedFrame(0, self.index, t, p0), LedFrame(1, self.index, t, p1))
        self.index += 1
        return out


def _resample(grid: np.ndarray, n: int) -> np.ndarray:
    """Nearest-cell sampling of a square intensity grid onto ``n x n``."""
    if grid.shape == (n, n):
        return grid
    h, w = grid.shape
    iy = (np.arange(n) * h) // n
    ix = (np.arange(n) * w) // n
    return grid[np.ix_(iy, ix)]


def led_frames(raster: SpikeRaster, meta: list[NeuronMeta],
               config: PlaybackConfig = PlaybackConfig(),
               profile: FabricProfile = FabricProfile(), cluster_at=None):
    """Yield frame pairs at a fixed cadence over the dilated playback window.

    Frame ``k`` at time ``t_k`` shows the spikes of rows whose onset lies in
    ``(t_{k-1}, t_k]`` (frame 0 takes the row at t = 0). Frames continue until
    every row has been shown, so the last frame may fall just past the final
    row onset. ``cluster_at(t_ms)`` returns the cluster-intensity grid to use
    for that frame.
    """
    renderer = LedRenderer(meta, profile)
    start, end = config.bounds(raster.n_rows)
    row_ms = row_duration(config, raster.dt_ms)
    total = (end - start) * row_ms
    row = start
    while True:
        t = renderer.frame_time(renderer.index)
        if t >= total and row >= end:
            return
        first = row
        while row < end and (row - start) * row_ms <= t:
            row += 1
        fired = np.flatnonzero(raster.spikes[first:row].any(axis=0)) if row > first else ()
        yield renderer.render(fired, None if cluster_at is None else cluster_at(t))


def _lit(pixels: np.ndarray) -> int:
    return int(np.count_nonzero(pixels[:, :, 0] | pixels[:, :, 1] | pixels[:, :, 2]))


def frame_index_entry(pair: tuple[LedFrame, LedFrame]) -> dict:
    a, b = pair
    return {"frame": a.index, "t_ms": a.t,
            "lit": [_lit(a.pixels), _lit(b.pixels)],
            "sha1": hashlib.sha1(a.payload() + b.payload()).hexdigest()}


def frame_index_line(pair: tuple[LedFrame, LedFrame]) -> str:
    """``frame_index_entry`` serialized as compact JSON without the json module."""
    e = frame_index_entry(pair)
    return (f'{{"frame":{e["frame"]},"t_ms":{e["t_ms"]!r},"lit":[{e["lit"][0]},{e["lit"][1]}],'
            f'"sha1":"{e["sha1"]}"}}')


def write_led_ppm(path, pair: tuple[LedFrame, LedFrame], scale: int = 8) -> Path:
    """Both panels side by side, each cell blown up to ``scale`` pixels."""
    from .ecology.field import write_ppm

    img = np.concatenate([pair[0].pixels, np.zeros((pair[0].pixels.shape[0], 1, 3), np.uint8),
                          pair[1].pixels], axis=1)
    img = np.repeat(np.repeat(img, scale, axis=0), scale, axis=1)
    return write_ppm(path, img)


def strikes_jsonl(strikes, fh) -> int:
    for s in strikes:
        fh.write(json.dumps(s.to_json(), separators=(",", ":")) + "\n")
    return len(strikes)
