"""The coupled ecology: termites every row, physarum and boids every few rows."""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import kernels
from ..rng import derive_seed, generator
from . import boids as _boids
from . import physarum as _phys
from .field import composite_rgb, to_u8, write_pgm, write_ppm
from .modulation import ModulationMap, boids_map, modulate, physarum_map
from .parallel import make_pool
from .termites import DepositLog, TermiteAgents, TermiteParams, step_termites

CHECKPOINT_MAGIC = b"SNECO1"


def _default_species():
    return [_phys.PhysarumSpecies() for _ in range(4)]


@dataclass
class EcologyConfig:
    field_size: int = 1024
    species: list = field(default_factory=_default_species)
    coupling_own: float = 1.0
    coupling_other: float = 0.25
    coupling: list | None = None
    physarum_map: ModulationMap = field(default_factory=physarum_map)
    termite: TermiteParams = field(default_factory=TermiteParams)
    termite_field: int = 128
    boids: _boids.BoidParams = field(default_factory=_boids.BoidParams)
    n_boids: int = 5000
    boids_world: float = 1024.0
    boids_method: str = "grid"
    boids_map: ModulationMap = field(default_factory=boids_map)
    step_every: int = 10
    field_dtype: str = "float32"
    sort_every: int = 16
    log_reasons: tuple = (1, 2, 3)

    def coupling_matrix(self) -> np.ndarray:
        if self.coupling is not None:
            c = np.asarray(self.coupling, dtype=np.float64)
            if c.shape != (len(self.species),) * 2:
                raise ValueError("coupling must be a species x species matrix")
            return c
        return _phys.default_coupling(len(self.species), self.coupling_own, self.coupling_other)


class Ecology:
    """Owns all agent state and trail fields for one run."""

    def __init__(self, config: EcologyConfig, n_channels: int, seed: int, workers: int = 1):
        if len(config.species) > _phys.MAX_SPECIES:
            raise ValueError(f"at most {_phys.MAX_SPECIES} physarum species")
        for sp in config.species:
            sp.validate()
        config.boids.validate()
        if config.step_every < 1:
            raise ValueError("step_every must be >= 1")
        self.config = config
        self.n_channels = n_channels
        self.seed = int(seed)
        self.workers = int(workers)
        self._pool = make_pool(self.workers)
        self.coupling = config.coupling_matrix()

        tf = config.termite_field
        self.termite_field = np.zeros((tf, tf))
        self._termite_next = np.empty_like(self.termite_field)
        self._termite_counts = np.zeros((tf, tf), dtype=np.int32)
        self._termite_flags = np.zeros(n_channels, dtype=np.int8)
        self._termite_scratch = np.empty((tf, tf))
        self.termites = TermiteAgents.spawn(n_channels, tf, tf, generator(seed, "spawn", "termites"))
        self.deposit_log = DepositLog(config.log_reasons)

        fs = config.field_size
        self.fields = np.zeros((len(config.species), fs, fs), dtype=np.dtype(config.field_dtype))
        self._fields_next = np.empty_like(self.fields)
        self._counts = np.zeros(self.fields.shape, dtype=np.int32)
        self._scratch = np.empty((fs, fs))
        self.physarum = _phys.PhysarumAgents.spawn(
            [sp.count for sp in config.species], fs, fs, generator(seed, "spawn", "physarum"))
        self.flock = _boids.Boids.spawn(config.n_boids, config.boids_world, config.boids_world,
                                        config.boids.max_speed, generator(seed, "spawn", "boids"))

        self._termite_seed = derive_seed(seed, "termites")
        self._physarum_seed = derive_seed(seed, "physarum")
        self.tick_count = 0
        self.eco_steps = 0
        self._pending_spikes: list[np.ndarray] = []
        self.current_species = list(config.species)
        self.current_boids = config.boids

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    # ------------------------------------------------------------------ step
    def step_termites(self, spike_row, row: int | None = None) -> np.ndarray:
        p = self.config.termite
        flags, counts = step_termites(self.termites, self.termite_field, spike_row, p,
                                      self._termite_seed, self.tick_count,
                                      flags=self._termite_flags, counts=self._termite_counts)
        nxt = kernels.deposit_diffuse_decay(self.termite_field, counts, p.d_base, p.decay,
                                            out=self._termite_next,
                                            scratch=self._termite_scratch)
        self._termite_next = self.termite_field
        self.termite_field = nxt
        self.deposit_log.extend(self.tick_count if row is None else row, flags)
        return flags

    def step_physarum_boids(self, r_norm: float, spiking_channels) -> None:
        cfg = self.config
        mod = modulate(r_norm, cfg.physarum_map)
        self.current_species = [sp.with_params(mod) for sp in cfg.species]
        if self.physarum.x.size:
            if cfg.sort_every and self.eco_steps % cfg.sort_every == 0:
                _phys.sort_spatially(self.physarum, cfg.field_size)
            _phys.step_physarum(self.physarum, self.fields, self.current_species,
                                self.coupling, self._physarum_seed, self.eco_steps,
                                self.workers, self._pool, counts=self._counts)
        else:
            self._counts.fill(0)
        nxt = _phys.deposit_and_diffuse(self.fields, self._counts, self.current_species,
                                        out=self._fields_next, scratch=self._scratch)
        self._fields_next = self.fields
        self.fields = nxt

        bmod = modulate(r_norm, cfg.boids_map)
        bp = cfg.boids.with_params(bmod)
        bp = bp.with_params({"spike_gain": cfg.boids_map.spike_gain})
        self.current_boids = bp
        if self.flock.n:
            self.flock = _boids.step_boids(self.flock, bp, spiking_channels, self.n_channels,
                                           cfg.boids_method, self.workers, self._pool)
        self.eco_steps += 1

    def tick(self, spike_row, r_norm: float, row: int | None = None) -> None:
        """Advance one raster row."""
        spike_row = np.asarray(spike_row, dtype=np.uint8)
        self.step_termites(spike_row, row)
        fired = np.flatnonzero(spike_row)
        if fired.size:
            self._pending_spikes.append(fired)
        if self.tick_count % self.config.step_every == 0:
            spikes = np.concatenate(self._pending_spikes) if self._pending_spikes else \
                np.zeros(0, dtype=np.int64)
            self._pending_spikes = []
            self.step_physarum_boids(r_norm, spikes)
        self.tick_count += 1

    # -------------------------------------------------------------- outputs
    def composite(self) -> np.ndarray:
        """Sum of per-species fields each scaled to unit max."""
        out = np.zeros(self.fields.shape[1:])
        for f in self.fields:
            top = f.max()
            if top > 0:
                out += f / top
        return out

    def cluster_intensity(self, grid: int = 16) -> np.ndarray:
        """Composite field block-averaged onto ``grid x grid`` cells, scaled to [0, 1]."""
        _, h, w = self.fields.shape
        ys = np.linspace(0, h, grid + 1).astype(np.int64)
        xs = np.linspace(0, w, grid + 1).astype(np.int64)
        sums, tops = kernels.block_sums(self.fields, ys, xs)
        area = np.outer(np.diff(ys), np.diff(xs)).astype(np.float64)
        live = tops > 0
        blocks = (sums[live] / tops[live, None, None]).sum(axis=0) / area if live.any() \
            else np.zeros((grid, grid))
        top = blocks.max()
        return blocks / top if top > 0 else np.zeros_like(blocks)

    def dump_frames(self, outdir, tag: str) -> list[Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = [write_ppm(outdir / f"composite_{tag}.ppm", composite_rgb(self.fields))]
        for s, f in enumerate(self.fields):
            paths.append(write_pgm(outdir / f"species{s}_{tag}.pgm", to_u8(f)))
        paths.append(write_pgm(outdir / f"termites_{tag}.pgm", to_u8(self.termite_field)))
        return paths

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {
            "termite_x": self.termites.x, "termite_y": self.termites.y,
            "termite_heading": self.termites.heading, "termite_field": self.termite_field,
            "physarum_x": self.physarum.x, "physarum_y": self.physarum.y,
            "physarum_heading": self.physarum.heading, "physarum_offsets": self.physarum.offsets,
            "physarum_ids": self.physarum.ids,
            "fields": self.fields,
            "boid_px": self.flock.px, "boid_py": self.flock.py,
            "boid_vx": self.flock.vx, "boid_vy": self.flock.vy,
        }

    def digest(self) -> str:
        h = hashlib.sha256()
        for name, arr in self.state_arrays().items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    # ---------------------------------------------------------- checkpoints
    def save_checkpoint(self, path) -> Path:
        return save_checkpoint(path, self.state_arrays(),
                               {"tick": self.tick_count, "eco_steps": self.eco_steps,
                                "seed": self.seed})

    def load_checkpoint(self, path) -> None:
        arrays, counters = load_checkpoint(path)
        self.termites = TermiteAgents(arrays["termite_x"], arrays["termite_y"],
                                      arrays["termite_heading"])
        self.termite_field = arrays["termite_field"]
        self._termite_next = np.empty_like(self.termite_field)
        self.physarum = _phys.PhysarumAgents(arrays["physarum_x"], arrays["physarum_y"],
                                             arrays["physarum_heading"],
                                             arrays["physarum_offsets"],
                                             arrays["physarum_ids"])
        self.fields = arrays["fields"]
        self._fields_next = np.empty_like(self.fields)
        self.flock = _boids.Boids(arrays["boid_px"], arrays["boid_py"], arrays["boid_vx"],
                                  arrays["boid_vy"], self.flock.width, self.flock.height)
        self.tick_count = counters["tick"]
        self.eco_steps = counters["eco_steps"]


# Checkpoint layout (all little-endian):
#   magic "SNECO1", u64 tick, u64 eco_steps, u64 seed, u32 n_arrays, then per array:
#   u16 name_len, name, u8 dtype_len, dtype str (numpy), u8 ndim, u64 dims..., raw bytes
_CK_HEAD = struct.Struct("<QQQI")


def save_checkpoint(path, arrays: dict[str, np.ndarray], counters: dict) -> Path:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(_CK_HEAD.pack(counters["tick"], counters["eco_steps"],
                               counters["seed"] & (2**64 - 1), len(arrays)))
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr)
            dt = arr.dtype.newbyteorder("<")
            nb = name.encode()
            ds = dt.str.encode()
            fh.write(struct.pack("<H", len(nb)) + nb)
            fh.write(struct.pack("<B", len(ds)) + ds)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.astype(dt, copy=False).tobytes())
    return path


def load_checkpoint(path):
    data = Path(path).read_bytes()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise ValueError("not an SNECO1 checkpoint")
    off = len(CHECKPOINT_MAGIC)
    tick, eco, seed, n = _CK_HEAD.unpack_from(data, off)
    off += _CK_HEAD.size
    arrays = {}
    for _ in range(n):
        (ln,) = struct.unpack_from("<H", data, off); off += 2
        name = data[off:off + ln].decode(); off += ln
        (ld,) = struct.unpack_from("<B", data, off); off += 1
        dt = np.dtype(data[off:off + ld].decode()); off += ld
        (nd,) = struct.unpack_from("<B", data, off); off += 1
        shape = struct.unpack_from(f"<{nd}Q", data, off); off += 8 * nd
        size = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        if off + size > len(data):
            raise ValueError(f"truncated checkpoint in array {name!r}")
        arrays[name] = np.frombuffer(data, dtype=dt, count=size // dt.itemsize,
                                     offset=off).reshape(shape).astype(dt.newbyteorder("="))
        off += size
    return arrays, {"tick": tick, "eco_steps": eco, "seed": seed}
