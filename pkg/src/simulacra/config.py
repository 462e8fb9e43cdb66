"""Run configuration: one JSON file, every field defaulted, unknown keys rejected.

Environment variables prefixed ``SN_`` override file values. Nested keys are
joined with double underscores, e.g. ``SN_PLAYBACK__DILATION=10`` or
``SN_ECOLOGY__BOIDS__MAX_SPEED=2.5``. Values are parsed as JSON when possible
and taken as plain strings otherwise.
"""
from __future__ import annotations

import dataclasses
import json
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .clock import PlaybackConfig
from .dataset import BurstSpec
from .ecology import boids as _boids
from .ecology import modulation as _mod
from .ecology.physarum import PhysarumSpecies
from .ecology.termites import SPIKE, TermiteParams
from .ecology.world import EcologyConfig
from .fabric import FabricProfile
from .sonify import SonifyParams

ENV_PREFIX = "SN_"
# variables with the prefix that are not config overrides
RESERVED_ENV = {"SN_DISABLE_JIT"}


class ConfigError(ValueError):
    pass


@dataclass
class SyntheticSection:
    rows: int = 180_000
    channels: int = 131
    background_hz: list = field(default_factory=lambda: [0.5, 3.0])
    n_bursts: int = 5
    burst_multiplier: float = 25.0
    burst_len_ms: float = 200.0
    backbone_k: int = 27
    dt_ms: int = 1
    seed: int | None = None  # falls back to the global seed


@dataclass
class DatasetSection:
    path: str | None = None  # raster file; synthetic data when unset
    format: str | None = None
    meta_path: str | None = None
    synthetic: SyntheticSection = field(default_factory=SyntheticSection)
    rate_window_ms: int = 1000
    theta_hi: float = 0.5
    theta_lo: float = 0.25
    min_burst_ms: float = 50.0
    min_gap_ms: float = 100.0
    backbone_k: int = 27


@dataclass
class PlaybackSection:
    dilation: float = 30.0
    start_row: int = 0
    end_row: int | None = None
    loop: bool = False
    passes: int | None = None
    mode: str = "offline"

    def build(self) -> PlaybackConfig:
        return PlaybackConfig(self.dilation, self.start_row, self.end_row, self.loop,
                              self.passes, self.mode)


def _species_default():
    return [{"count": 1000} for _ in range(4)]


@dataclass
class ModulationSection:
    ranges: dict = field(default_factory=dict)
    spike_gain: float = 0.3


@dataclass
class EcologySection:
    enabled: bool = True
    # replay profile: small enough that a full offline pass stays well under a minute
    field_size: int = 128
    species: list = field(default_factory=_species_default)
    coupling_own: float = 1.0
    coupling_other: float = 0.25
    coupling: list | None = None
    physarum_map: ModulationSection = field(default_factory=lambda: ModulationSection(
        {k: list(v) for k, v in _mod.physarum_map().ranges.items()}))
    termite: dict = field(default_factory=dict)
    termite_field: int = 64
    boids: dict = field(default_factory=dict)
    n_boids: int = 200
    boids_world: float = 128.0
    boids_method: str = "grid"
    boids_map: ModulationSection = field(default_factory=lambda: ModulationSection(
        {k: list(v) for k, v in _mod.boids_map().ranges.items()}))
    step_every: int = 20
    sort_every: int = 16
    workers: int = 1
    log_trail_deposits: bool = False

    def build(self) -> EcologyConfig:
        def check(cls, d, what):
            unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
            if unknown:
                raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")
            return cls(**d)

        species = [check(PhysarumSpecies, dict(s), "ecology.species") for s in self.species]
        return EcologyConfig(
            field_size=self.field_size, species=species, coupling_own=self.coupling_own,
            coupling_other=self.coupling_other, coupling=self.coupling,
            physarum_map=_mod.ModulationMap({k: tuple(v) for k, v in
                                             self.physarum_map.ranges.items()},
                                            self.physarum_map.spike_gain),
            termite=check(TermiteParams, self.termite, "ecology.termite"),
            termite_field=self.termite_field,
            boids=check(_boids.BoidParams, self.boids, "ecology.boids"),
            n_boids=self.n_boids, boids_world=self.boids_world,
            boids_method=self.boids_method,
            boids_map=_mod.ModulationMap({k: tuple(v) for k, v in
                                          self.boids_map.ranges.items()},
                                         self.boids_map.spike_gain),
            step_every=self.step_every, sort_every=self.sort_every,
            log_reasons=(1, 2, 3) if self.log_trail_deposits else (SPIKE,))


@dataclass
class SonifySection:
    params: dict = field(default_factory=dict)

    def build(self) -> SonifyParams:
        names = {f.name for f in dataclasses.fields(SonifyParams)}
        unknown = set(self.params) - names
        if unknown:
            raise ConfigError(f"unknown sonify.params keys: {sorted(unknown)}")
        conv = {k: tuple(v) if isinstance(v, list) else v for k, v in self.params.items()}
        return SonifyParams(**conv)


@dataclass
class FabricSection:
    n_solenoids: int = 27
    refractory_ms: float = 40.0
    velocity_floor: float = 0.3
    led_fps: float = 30.0
    led_decay: float = 0.85
    led_size: int = 16

    def build(self) -> FabricProfile:
        return FabricProfile(**dataclasses.asdict(self))


@dataclass
class WireSection:
    osc_enabled: bool = False
    osc_host: str = "127.0.0.1"
    osc_port: int = 9000
    osc_in_port: int = 9001
    osc_every: int = 1
    mqtt: str = "none"  # none | loopback | simulated
    latency_ms: float = 0.0
    jitter_ms: float = 0.0
    loss_p: float = 0.0


@dataclass
class OutputSection:
    dir: str = "out"
    dump_every: int = 0
    digest_every: int = 1000
    led_ppm_every: int = 0


@dataclass
class RunConfig:
    seed: int = 0
    dataset: DatasetSection = field(default_factory=DatasetSection)
    playback: PlaybackSection = field(default_factory=PlaybackSection)
    ecology: EcologySection = field(default_factory=EcologySection)
    sonify: SonifySection = field(default_factory=SonifySection)
    fabric: FabricSection = field(default_factory=FabricSection)
    wire: WireSection = field(default_factory=WireSection)
    output: OutputSection = field(default_factory=OutputSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def validate(self) -> "RunConfig":
        """Build every component once so bad values surface before a run starts."""
        try:
            self.playback.build()
            eco = self.ecology.build()
            for sp in eco.species:
                sp.validate()
            eco.boids.validate()
            self.sonify.build().validate()
            self.fabric.build().validate()
            syn = self.dataset.synthetic
            BurstSpec(syn.n_bursts, syn.burst_multiplier, int(syn.burst_len_ms), syn.backbone_k)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if self.dataset.path is None and (self.dataset.synthetic.rows < 1 or
                                          self.dataset.synthetic.channels < 1):
            raise ConfigError("synthetic rows and channels must be >= 1")
        if self.ecology.boids_method not in ("naive", "grid"):
            raise ConfigError("ecology.boids_method must be 'naive' or 'grid'")
        if self.ecology.workers < 1:
            raise ConfigError("ecology.workers must be >= 1")
        if self.wire.mqtt not in ("none", "loopback", "simulated"):
            raise ConfigError("wire.mqtt must be none, loopback or simulated")
        if self.wire.osc_every < 1:
            raise ConfigError("wire.osc_every must be >= 1")
        for name in ("dump_every", "digest_every", "led_ppm_every"):
            if getattr(self.output, name) < 0:
                raise ConfigError(f"output.{name} must be >= 0")
        return self


def _hints(cls):
    return typing.get_type_hints(cls)


def _coerce(value, hint, path: str):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if dataclasses.is_dataclass(hint):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected an object")
        return from_dict(hint, value, path)
    if origin is typing.Union or (origin is not None and type(None) in args):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], path)
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string")
        return value
    if hint is list or origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list")
        return value
    if hint is dict or origin is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected an object")
        return value
    return value


def from_dict(cls, data: dict, path: str = ""):
    hints = _hints(cls)
    names = [f.name for f in dataclasses.fields(cls)]
    unknown = set(data) - set(names)
    if unknown:
        where = f" in {path}" if path else ""
        raise ConfigError(f"unknown config keys{where}: {sorted(unknown)}")
    kwargs = {}
    for name in names:
        if name in data:
            kwargs[name] = _coerce(data[name], hints[name], f"{path}.{name}" if path else name)
    return cls(**kwargs)


def _parse_env_value(raw: str):
    try:
        return json.loads(raw)
    except ValueError:
        return raw


def apply_env(data: dict, environ=None) -> dict:
    """Merge ``SN_*`` overrides into a raw config dict (returns a new dict)."""
    environ = os.environ if environ is None else environ
    data = json.loads(json.dumps(data))
    for key in sorted(environ):
        if not key.startswith(ENV_PREFIX) or key in RESERVED_ENV:
            continue
        parts = [p.lower() for p in key[len(ENV_PREFIX):].split("__")]
        node = data
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"{key}: {p} is not a section")
        node[parts[-1]] = _parse_env_value(environ[key])
    return data


def load_config(path=None, environ=None, overrides: dict | None = None) -> RunConfig:
    """Read a JSON config (or defaults), apply env then explicit overrides, validate."""
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
    data = apply_env(data, environ)
    for dotted, value in (overrides or {}).items():
        node = data
        parts = dotted.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return from_dict(RunConfig, data).validate()


def save_config(cfg: RunConfig, path) -> Path:
    path = Path(path)
    path.write_text(cfg.to_json() + "\n")
    return path
