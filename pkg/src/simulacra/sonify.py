"""Sound-control events compiled from the population rate and burst ends.

Nothing here renders audio. Each stream (sustained tones, grains, drones,
kick) is an inhomogeneous Poisson process on the dilated timeline whose
density follows the normalized firing rate; burst ends advance a cyclic
chord progression. Events are held column-wise in an :class:`EventLog`
because a full replay produces a few hundred thousand of them.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .clock import PlaybackConfig, row_duration
from .dataset import RateSeries
from .rng import generator

KINDS = ("chord_change", "drone", "sustain", "grain", "kick")
KIND_CODE = {k: i for i, k in enumerate(KINDS)}
OSC_ADDRESS = {"sustain": "/snd/sustain", "grain": "/snd/grain", "drone": "/snd/drone",
               "kick": "/snd/kick", "chord_change": "/snd/chord"}

N_MAIN_CHANNELS = 16
SUB_CHANNELS = (16, 17)

SUSTAIN_RANGE = (0.21, 20.0)
GRANULAR_RANGE = (5.0, 160.0)
GRAIN_MS_RANGE = (6.25, 400.0)
KICK_RANGE = (0.1, 0.83)


def _unit(r):
    r = np.asarray(r, dtype=np.float64)
    if np.any((r < 0) | (r > 1)) or np.any(np.isnan(r)):
        raise ValueError("r_norm must lie in [0, 1]")
    return r


def _out(x, like):
    return float(x) if np.ndim(like) == 0 else x


def sustain_density(r_norm):
    """Sustained-tone events per second; square-root growth with rate."""
    lo, hi = SUSTAIN_RANGE
    r = _unit(r_norm)
    return _out(lo + (hi - lo) * np.sqrt(r), r_norm)


def granular_density(r_norm):
    """Grain events per second; dense at low rate, thinning as rate rises."""
    lo, hi = GRANULAR_RANGE
    r = _unit(r_norm)
    return _out(lo + (hi - lo) * (1.0 - r ** (1.0 / 6.0)), r_norm)


def grain_duration(r_norm, increasing: bool = True):
    """Nominal grain length in ms before quantization.

    ``increasing=False`` selects the opposite reading where grains shorten
    as the rate rises.
    """
    lo, hi = GRAIN_MS_RANGE
    r = _unit(r_norm)
    if not increasing:
        r = 1.0 - r
    return _out(lo + (hi - lo) * r, r_norm)


def kick_density(r_norm):
    """Kick events per second, falling linearly with rate."""
    lo, hi = KICK_RANGE
    r = _unit(r_norm)
    return _out(hi * (1.0 - r) + lo * r, r_norm)


def quantize_grain(duration_ms, root_freq):
    """Snap to the nearest whole number (at least one) of root periods."""
    d = np.asarray(duration_ms, dtype=np.float64)
    if np.any(d <= 0) or not root_freq > 0:
        raise ValueError("duration and root frequency must be > 0")
    period = 1000.0 / root_freq
    n = np.maximum(1.0, np.round(d / period))
    return _out(n * period, duration_ms)


# ---------------------------------------------------------------- harmony
PC_NAMES = ("C", "Db", "D", "Eb", "E", "F", "Gb", "G", "Ab", "A", "Bb", "B")
# C Phrygian: C Db Eb F G Ab Bb
SCALE = (0, 1, 3, 5, 7, 8, 10)
TABLE_BASE_MIDI = 36
TABLE_SIZE = 52


@dataclass(frozen=True)
class Chord:
    name: str
    root: int
    pitch_classes: tuple[int, ...]


DEFAULT_PROGRESSION = (
    Chord("Cm", 0, (0, 3, 7)),
    Chord("Ab", 8, (8, 0, 3)),
    Chord("Db", 1, (1, 5, 8)),
    Chord("Bbm", 10, (10, 1, 5)),
)


@dataclass(frozen=True)
class PitchEntry:
    index: int
    midi: int
    pitch_class: int
    octave: int
    chords: tuple[int, ...]


def build_pitch_table(progression=DEFAULT_PROGRESSION, base_midi: int = TABLE_BASE_MIDI,
                      size: int = TABLE_SIZE) -> tuple[PitchEntry, ...]:
    """Scale tones ascending from ``base_midi``, tagged with the chords containing them."""
    out = []
    octave_off = 0
    while len(out) < size:
        for pc in SCALE:
            midi = base_midi + octave_off + pc
            chords = tuple(k for k, ch in enumerate(progression) if pc in ch.pitch_classes)
            out.append(PitchEntry(len(out), midi, pc, midi // 12 - 1, chords))
            if len(out) == size:
                break
        octave_off += 12
    return tuple(out)


def midi_to_hz(midi: float) -> float:
    return 440.0 * 2.0 ** ((midi - 69) / 12.0)


@dataclass
class HarmonicState:
    progression: tuple[Chord, ...] = DEFAULT_PROGRESSION
    chord_index: int = 0
    pitch_table: tuple[PitchEntry, ...] = field(default=None)
    root_octave: int = 3

    def __post_init__(self):
        self.progression = tuple(self.progression)
        if not self.progression:
            raise ValueError("progression must not be empty")
        if self.pitch_table is None:
            self.pitch_table = build_pitch_table(self.progression)
        if len(self.pitch_table) != TABLE_SIZE:
            raise ValueError(f"pitch table must have {TABLE_SIZE} entries")
        if not 0 <= self.chord_index < len(self.progression):
            raise ValueError("chord_index out of range")

    @property
    def chord(self) -> Chord:
        return self.progression[self.chord_index]

    def advanced(self, steps: int = 1) -> "HarmonicState":
        return replace(self, chord_index=(self.chord_index + steps) % len(self.progression))

    def root_freq(self, chord_index: int | None = None) -> float:
        k = self.chord_index if chord_index is None else chord_index
        root = self.progression[k % len(self.progression)].root
        return midi_to_hz(12 * (self.root_octave + 1) + root)

    def chord_members(self, chord_index: int) -> np.ndarray:
        """Pitch-table indices whose pitch class belongs to the given chord."""
        k = chord_index % len(self.progression)
        return np.array([e.index for e in self.pitch_table if k in e.chords], dtype=np.int64)


# ---------------------------------------------------------------- events
@dataclass(frozen=True)
class ControlEvent:
    kind: str
    onset: float
    pitch: int
    channel: int
    duration: float
    attack: float
    decay: float
    amplitude: float
    half_speed: bool = False
    delay_time: float = 0.0
    articulation: int = 0
    chord: int = 0

    def to_json(self) -> dict:
        return {"kind": self.kind, "onset": self.onset, "pitch": self.pitch,
                "channel": self.channel, "duration": self.duration, "attack": self.attack,
                "decay": self.decay, "amplitude": self.amplitude,
                "half_speed": self.half_speed, "delay_time": self.delay_time,
                "articulation": self.articulation, "chord": self.chord}

    def osc(self) -> tuple[str, list]:
        """OSC address and argument list (ints, floats) for live emission."""
        return OSC_ADDRESS[self.kind], [
            int(self.pitch), int(self.channel), float(self.onset), float(self.duration),
            float(self.attack), float(self.decay), float(self.amplitude),
            int(self.half_speed), float(self.delay_time), int(self.articulation),
            int(self.chord)]


_COLUMNS = (("kind", np.int8), ("onset", np.float64), ("pitch", np.int64),
            ("channel", np.int64), ("duration", np.float64), ("attack", np.float64),
            ("decay", np.float64), ("amplitude", np.float64), ("half_speed", np.bool_),
            ("delay_time", np.float64), ("articulation", np.int64), ("chord", np.int64))


class EventLog:
    """Column store of control events sorted by onset."""

    def __init__(self, columns: dict[str, np.ndarray] | None = None):
        columns = columns or {}
        n = len(columns.get("onset", ()))
        self.columns = {name: np.asarray(columns.get(name, np.zeros(n, dt)), dtype=dt)
                        for name, dt in _COLUMNS}

    def __len__(self) -> int:
        return self.columns["onset"].shape[0]

    def __getattr__(self, name):
        cols = self.__dict__.get("columns")
        if cols is not None and name in cols:
            return cols[name]
        raise AttributeError(name)

    @classmethod
    def concat(cls, parts: list["EventLog"]) -> "EventLog":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls()
        return cls({name: np.concatenate([p.columns[name] for p in parts])
                    for name, _ in _COLUMNS})

    def sorted(self) -> "EventLog":
        c = self.columns
        order = np.lexsort((c["articulation"], c["pitch"], c["channel"], c["kind"], c["onset"]))
        return EventLog({k: v[order] for k, v in c.items()})

    def select(self, mask_or_slice) -> "EventLog":
        return EventLog({k: v[mask_or_slice] for k, v in self.columns.items()})

    def of_kind(self, kind: str) -> "EventLog":
        return self.select(self.columns["kind"] == KIND_CODE[kind])

    def shifted(self, offset_ms: float) -> "EventLog":
        out = EventLog(dict(self.columns))
        out.columns["onset"] = self.columns["onset"] + offset_ms
        return out

    def event(self, i: int) -> ControlEvent:
        c = self.columns
        return ControlEvent(KINDS[c["kind"][i]], float(c["onset"][i]), int(c["pitch"][i]),
                            int(c["channel"][i]), float(c["duration"][i]),
                            float(c["attack"][i]), float(c["decay"][i]),
                            float(c["amplitude"][i]), bool(c["half_speed"][i]),
                            float(c["delay_time"][i]), int(c["articulation"][i]),
                            int(c["chord"][i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self.event(i)

    def json_lines(self):
        c = self.columns
        cols = [c[name].tolist() for name, _ in _COLUMNS]
        for kind, onset, pitch, ch, dur, att, dec, amp, hs, dly, art, chord in zip(*cols):
            yield json.dumps({"kind": KINDS[kind], "onset": onset, "pitch": pitch,
                              "channel": ch, "duration": dur, "attack": att, "decay": dec,
                              "amplitude": amp, "half_speed": hs, "delay_time": dly,
                              "articulation": art, "chord": chord}, separators=(",", ":"))

    def write_jsonl(self, fh) -> int:
        n = 0
        for line in self.json_lines():
            fh.write(line + "\n")
            n += 1
        return n

    def digest(self) -> str:
        h = hashlib.sha256()
        for name, _ in _COLUMNS:
            h.update(np.ascontiguousarray(self.columns[name]).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class SonifyParams:
    sustain_attack_ms: tuple[float, float] = (50.0, 800.0)
    sustain_decay_ms: tuple[float, float] = (200.0, 2000.0)
    sustain_delay_ms: tuple[float, float] = (80.0, 900.0)
    half_speed_p: float = 0.5
    sustain_amplitude: float = 0.8
    grain_amplitude: float = 0.5
    grain_duration_increasing: bool = True
    drone_interval_s: tuple[float, float] = (20.0, 90.0)
    drone_attack_s: tuple[float, float] = (5.0, 15.0)
    drone_hold_s: tuple[float, float] = (10.0, 40.0)
    drone_decay_s: tuple[float, float] = (5.0, 15.0)
    drone_max_octave: int = 3
    drone_amplitude: float = 0.4
    kick_repeat_p: float = 0.15
    kick_repeat_count: tuple[int, int] = (2, 4)
    kick_spacing_ms: float = 250.0
    kick_amplitude: float = 1.0
    kick_duration_ms: float = 180.0

    def validate(self) -> "SonifyParams":
        for name in ("half_speed_p", "kick_repeat_p"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be a probability")
        if self.drone_attack_s[0] < 5.0 or self.drone_decay_s[0] < 5.0:
            raise ValueError("drone attack and decay must be at least 5 s")
        if self.drone_interval_s[0] <= 0:
            raise ValueError("drone interval must be > 0")
        lo, hi = self.kick_repeat_count
        if not 2 <= lo <= hi:
            raise ValueError("kick repeat count range must start at 2")
        return self


def _thin(rng, density_rows: np.ndarray, row_ms: float, lam_max: float):
    """Onsets (ms) of an inhomogeneous Poisson process by thinning.

    A homogeneous process at ``lam_max`` (events/s) is laid over the window
    and each candidate is kept with probability ``density / lam_max`` at the
    row it falls in.
    """
    total_ms = density_rows.shape[0] * row_ms
    n = rng.poisson(lam_max * total_ms / 1000.0)
    t = np.sort(rng.uniform(0.0, total_ms, n))
    rows = np.minimum((t // row_ms).astype(np.int64), density_rows.shape[0] - 1)
    keep = rng.uniform(0.0, lam_max, n) < density_rows[rows]
    return t[keep], rows[keep]


def chord_changes(bursts, start: int, end: int, row_ms: float) -> np.ndarray:
    """Dilated onset (ms) of every burst end inside the playback range."""
    ends = sorted(int(e) for _, e in bursts)
    return np.array([(e - start) * row_ms for e in ends if start <= e <= end], dtype=np.float64)


def _chord_at(onsets: np.ndarray, change_times: np.ndarray, base: int, n_chords: int):
    return (base + np.searchsorted(change_times, onsets, side="right")) % n_chords


def _pick(rng, chord_idx: np.ndarray, members: list[np.ndarray]) -> np.ndarray:
    u = rng.uniform(size=chord_idx.shape[0])
    out = np.empty(chord_idx.shape[0], dtype=np.int64)
    for k, m in enumerate(members):
        sel = chord_idx == k
        out[sel] = m[np.minimum((u[sel] * len(m)).astype(np.int64), len(m) - 1)]
    return out


def _log(kind, onset, **cols) -> EventLog:
    n = onset.shape[0]
    cols = {k: np.broadcast_to(v, (n,)) for k, v in cols.items()}
    return EventLog({"kind": np.full(n, KIND_CODE[kind]), "onset": onset, **cols})


def gen_events(rate: RateSeries, bursts, config: PlaybackConfig = PlaybackConfig(),
               harmonic: HarmonicState | None = None, seed: int = 0,
               params: SonifyParams = SonifyParams(), streams=None) -> EventLog:
    """Every control event of one playback pass, sorted by onset.

    Onsets are ms on the dilated timeline measured from the first played row.
    ``streams`` limits output to a subset of kinds.
    """
    params.validate()
    harmonic = harmonic or HarmonicState()
    want = set(KINDS if streams is None else streams)
    start, end = config.bounds(len(rate.norm))
    r = np.clip(np.asarray(rate.norm[start:end], dtype=np.float64), 0.0, 1.0)
    row_ms = row_duration(config, rate.dt_ms)
    n_chords = len(harmonic.progression)
    base = harmonic.chord_index
    changes = chord_changes(bursts, start, end, row_ms)
    members = [harmonic.chord_members(k) for k in range(n_chords)]
    roots = np.array([harmonic.root_freq(k) for k in range(n_chords)])
    parts = []

    if "chord_change" in want and changes.size:
        new = (base + np.arange(1, changes.size + 1)) % n_chords
        parts.append(_log("chord_change", changes,
                          pitch=np.array([harmonic.progression[k].root for k in new]),
                          chord=new))

    if "sustain" in want:
        rng = generator(seed, "sonify", "sustain")
        t, rows = _thin(rng, sustain_density(r), row_ms, SUSTAIN_RANGE[1])
        n = t.shape[0]
        chord = _chord_at(t, changes, base, n_chords)
        pitch = _pick(rng, chord, members)
        attack = rng.uniform(*params.sustain_attack_ms, n)
        decay = rng.uniform(*params.sustain_decay_ms, n)
        delay = rng.uniform(*params.sustain_delay_ms, n)
        half = rng.uniform(size=n) < params.half_speed_p
        channel = rng.integers(0, N_MAIN_CHANNELS, n)
        stretch = np.where(half, 2.0, 1.0)
        attack, decay = attack * stretch, decay * stretch
        parts.append(_log("sustain", t, pitch=pitch, channel=channel, duration=attack + decay,
                          attack=attack, decay=decay, amplitude=params.sustain_amplitude,
                          half_speed=half, delay_time=delay, chord=chord))

    if "grain" in want:
        rng = generator(seed, "sonify", "grain")
        t, rows = _thin(rng, granular_density(r), row_ms, GRANULAR_RANGE[1])
        n = t.shape[0]
        chord = _chord_at(t, changes, base, n_chords)
        pitch = _pick(rng, chord, members)
        channel = rng.integers(0, N_MAIN_CHANNELS, n)
        rr = r[rows]
        nominal = grain_duration(rr, params.grain_duration_increasing)
        period = 1000.0 / roots[chord]
        dur = np.maximum(1.0, np.round(nominal / period)) * period
        env = 0.5 * dur * np.sqrt(rr)
        parts.append(_log("grain", t, pitch=pitch, channel=channel, duration=dur, attack=env,
                          decay=env, amplitude=params.grain_amplitude, chord=chord))

    total_ms = (end - start) * row_ms
    if "drone" in want:
        rng = generator(seed, "sonify", "drone")
        onsets = []
        t = rng.uniform(*params.drone_interval_s) * 1000.0
        while t < total_ms:
            onsets.append(t)
            t += rng.uniform(*params.drone_interval_s) * 1000.0
        t = np.array(onsets, dtype=np.float64)
        n = t.shape[0]
        chord = _chord_at(t, changes, base, n_chords)
        low = [m[[harmonic.pitch_table[i].octave <= params.drone_max_octave for i in m]]
               for m in members]
        low = [lm if lm.size else m for lm, m in zip(low, members)]
        pitch = _pick(rng, chord, low)
        attack = rng.uniform(*params.drone_attack_s, n) * 1000.0
        hold = rng.uniform(*params.drone_hold_s, n) * 1000.0
        decay = rng.uniform(*params.drone_decay_s, n) * 1000.0
        channel = rng.integers(0, N_MAIN_CHANNELS, n)
        parts.append(_log("drone", t, pitch=pitch, channel=channel,
                          duration=attack + hold + decay, attack=attack, decay=decay,
                          amplitude=params.drone_amplitude, chord=chord))

    if "kick" in want:
        rng = generator(seed, "sonify", "kick")
        t, rows = _thin(rng, kick_density(r), row_ms, KICK_RANGE[1])
        n = t.shape[0]
        pitch = np.where(rng.uniform(size=n) < 0.5, 0, 1)
        channel = rng.integers(SUB_CHANNELS[0], SUB_CHANNELS[1] + 1, n)
        lo, hi = params.kick_repeat_count
        repeat = rng.uniform(size=n) < params.kick_repeat_p
        count = np.where(repeat, rng.integers(lo, hi + 1, n), 1)
        src = np.repeat(np.arange(n), count)
        art = np.arange(src.shape[0]) - np.repeat(np.cumsum(count) - count, count)
        onset = t[src] + art * params.kick_spacing_ms
        keep = onset < total_ms
        src, art, onset = src[keep], art[keep], onset[keep]
        chord = _chord_at(onset, changes, base, n_chords)
        parts.append(_log("kick", onset, pitch=pitch[src], channel=channel[src],
                          duration=params.kick_duration_ms, attack=0.0,
                          decay=params.kick_duration_ms, amplitude=params.kick_amplitude,
                          articulation=art, chord=chord))

    return EventLog.concat(parts).sorted()


class EventCursor:
    """Releases a precompiled log incrementally as the clock advances."""

    def __init__(self, log: EventLog, offset_ms: float = 0.0):
        self.log = log
        self.offset_ms = offset_ms
        self._onsets = log.onset + offset_ms
        self.pos = 0

    def until(self, t_ms: float) -> EventLog:
        """Events with onset (plus offset) strictly before ``t_ms`` not yet released."""
        stop = int(np.searchsorted(self._onsets, t_ms, side="left"))
        stop = max(stop, self.pos)
        out = self.log.select(slice(self.pos, stop))
        self.pos = stop
        return out

    def rest(self) -> EventLog:
        out = self.log.select(slice(self.pos, len(self.log)))
        self.pos = len(self.log)
        return out


def expected_count(density: float, seconds: float) -> tuple[float, float]:
    """Poisson mean and the 3-sigma half-width for a constant density."""
    mean = density * seconds
    return mean, 3.0 * math.sqrt(mean)
