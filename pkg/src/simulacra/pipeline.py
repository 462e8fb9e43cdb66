"""End-to-end replay: dataset, clock, ecology, sound events, actuation, logs.

All log onsets are milliseconds on the global dilated timeline (they keep
increasing across loop passes); row records also carry the pass-relative
``t_sim_ms`` emitted by the clock.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataset as ds
from .clock import PacingStats, row_duration, schedule
from .config import RunConfig
from .ecology.world import Ecology
from .ecology.field import composite_rgb, write_ppm
from .fabric import LedRenderer, SolenoidMapper, frame_index_line, write_led_ppm
from .rng import derive_seed
from .sonify import HarmonicState, gen_events

LOG_FILES = ("rows.jsonl", "events.jsonl", "strikes.jsonl", "led_index.jsonl",
             "ecology.jsonl")


@dataclass
class Inputs:
    raster: ds.SpikeRaster
    meta: list
    rate: ds.RateSeries
    bursts: list
    backbone: list  # channel ids in rank order


def load_inputs(cfg: RunConfig) -> Inputs:
    d = cfg.dataset
    if d.path:
        raster, meta = ds.load_raster(d.path, d.format, d.meta_path)
    else:
        s = d.synthetic
        seed = cfg.seed if s.seed is None else s.seed
        raster, meta = ds.gen_synthetic(
            seed, s.rows, s.channels, tuple(s.background_hz),
            ds.BurstSpec(s.n_bursts, s.burst_multiplier, int(s.burst_len_ms), s.backbone_k),
            s.dt_ms)
    if meta is None:
        meta = ds.default_meta(raster.n_channels)
    rate = ds.population_rate(raster, d.rate_window_ms)
    bursts = ds.detect_bursts(rate, d.theta_hi, d.theta_lo, d.min_burst_ms, d.min_gap_ms)
    k = min(d.backbone_k, raster.n_channels)
    meta = ds.select_backbone(raster, k, meta)
    backbone = ds.backbone_order(raster, meta)
    return Inputs(raster, meta, rate, bursts, backbone)


@dataclass
class RunSummary:
    out_dir: Path
    rows: int = 0
    events: int = 0
    strikes: int = 0
    suppressed: int = 0
    backbone_spikes: int = 0
    led_frames: int = 0
    dumps: int = 0
    bursts: int = 0
    wall_s: float = 0.0
    digests: dict = field(default_factory=dict)
    final_ecology_digest: str | None = None
    deposit_totals: dict = field(default_factory=dict)
    max_late_ms: float | None = None

    def to_json(self) -> dict:
        return {"out_dir": str(self.out_dir), "rows": self.rows, "events": self.events,
                "strikes": self.strikes, "suppressed": self.suppressed,
                "backbone_spikes": self.backbone_spikes, "led_frames": self.led_frames,
                "dumps": self.dumps, "bursts": self.bursts, "wall_s": self.wall_s,
                "digests": self.digests, "final_ecology_digest": self.final_ecology_digest,
                "deposit_totals": self.deposit_totals, "max_late_ms": self.max_late_ms}


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"))


def _file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class _Emitters:
    """Optional live OSC and topic output."""

    def __init__(self, cfg: RunConfig):
        w = cfg.wire
        self.every = w.osc_every
        self.osc = None
        self.transport = None
        if w.osc_enabled:
            from .wire.udp import OscUdpSender
            self.osc = OscUdpSender(w.osc_host, w.osc_port)
        if w.mqtt == "loopback":
            from .wire.transport import LoopbackTransport
            self.transport = LoopbackTransport()
        elif w.mqtt == "simulated":
            from .wire.transport import LatencyModel, SimulatedNetworkTransport
            self.transport = SimulatedNetworkTransport(
                LatencyModel(w.latency_ms, w.jitter_ms, w.loss_p),
                derive_seed(cfg.seed, "wire", "network"))
        self.active = self.osc is not None or self.transport is not None

    def row(self, ev, r_norm: float, t_ms: float) -> None:
        if ev.seq % self.every:
            return
        if self.osc is not None:
            from .wire.osc import OscMessage
            self.osc.send(OscMessage("/sim/row", [int(ev.row)]))
            self.osc.send(OscMessage("/sim/rate", [float(r_norm)]))
        if self.transport is not None:
            from .wire.topics import TopicMessage
            self.transport.publish(TopicMessage.from_json("simulacra/clock/row", ev.to_json()),
                                   t_ms)
            self.transport.publish(TopicMessage.from_json(
                "simulacra/rate", {"row": int(ev.row), "r_norm": float(r_norm)}), t_ms)
            if hasattr(self.transport, "advance"):
                self.transport.advance(t_ms)

    def message(self, address: str, args: list, topic: str | None, payload: dict | None,
                t_ms: float) -> None:
        if self.osc is not None:
            from .wire.osc import OscMessage
            self.osc.send(OscMessage(address, args))
        if self.transport is not None and topic is not None:
            from .wire.topics import TopicMessage
            self.transport.publish(TopicMessage.from_json(topic, payload), t_ms)

    def led(self, pair) -> None:
        if self.osc is not None:
            from .wire.osc import OscMessage
            for fr in pair:
                addr, args = fr.osc()
                self.osc.send(OscMessage(addr, args))

    def close(self) -> None:
        if self.osc is not None:
            self.osc.close()


def _led_frame(leds, eco, cluster, cluster_step, pending_fired, fabric, f_led, emit,
               led_ppm_every, frames_dir, summary):
    if eco is not None and eco.eco_steps != cluster_step:
        cluster = eco.cluster_intensity(fabric.led_size)
        cluster_step = eco.eco_steps
    fired = np.concatenate(pending_fired) if pending_fired else ()
    pair = leds.render(fired, cluster)
    f_led.write(frame_index_line(pair) + "\n")
    summary.led_frames += 1
    if emit.active:
        emit.led(pair)
    if led_ppm_every and (pair[0].index + 1) % led_ppm_every == 0:
        frames_dir.mkdir(exist_ok=True)
        write_led_ppm(frames_dir / f"led_{pair[0].index + 1:07d}.ppm", pair)
    return cluster, cluster_step


def run(cfg: RunConfig, out_dir=None, inputs: Inputs | None = None) -> RunSummary:
    """Run the configured replay and write every log under ``out_dir``."""
    t_start = time.perf_counter()
    out = Path(out_dir if out_dir is not None else cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json() + "\n")
    inputs = inputs or load_inputs(cfg)
    raster, rate = inputs.raster, inputs.rate
    playback = cfg.playback.build()
    start, end = playback.bounds(raster.n_rows)
    row_ms = row_duration(playback, raster.dt_ms)
    pass_ms = (end - start) * row_ms
    spikes = raster.spikes
    r_norm = np.clip(rate.norm, 0.0, 1.0)

    events = gen_events(rate, inputs.bursts, playback, HarmonicState(),
                        derive_seed(cfg.seed, "sonify"), cfg.sonify.build())
    fabric = cfg.fabric.build()
    mapper = SolenoidMapper(inputs.backbone, fabric)
    has_bb = spikes[:, mapper.backbone].any(axis=1)
    leds = LedRenderer(inputs.meta, fabric)
    frame_ms = 1000.0 / fabric.led_fps

    eco = None
    if cfg.ecology.enabled:
        eco = Ecology(cfg.ecology.build(), raster.n_channels, derive_seed(cfg.seed, "ecology"),
                      cfg.ecology.workers)
    emit = _Emitters(cfg)
    stats = PacingStats() if playback.mode == "realtime" else None
    summary = RunSummary(out, bursts=len(inputs.bursts))
    dump_every = cfg.output.dump_every
    digest_every = cfg.output.digest_every
    led_ppm_every = cfg.output.led_ppm_every
    frames_dir = out / "frames"

    files = {name: open(out / name, "w") for name in LOG_FILES}
    f_rows, f_events, f_strikes, f_led, f_eco = (files[n] for n in LOG_FILES)
    try:
        (out / "bursts.json").write_text(_dumps(
            [{"start_row": s, "end_row": e} for s, e in inputs.bursts]) + "\n")
        cluster = None
        cluster_step = -1
        pending_fired: list[np.ndarray] = []
        pass_index = -1
        ev_onsets = np.zeros(0)
        ev_lines = iter(())
        ev_pos = 0
        seq = -1
        for ev in schedule(playback, raster, stats=stats):
            seq = ev.seq
            row = ev.row
            t_ms = seq * row_ms
            if ev.pass_index != pass_index:
                pass_index = ev.pass_index
                shifted = events.shifted(pass_index * pass_ms)
                ev_onsets = shifted.onset
                ev_lines = shifted.json_lines()
                ev_pos = 0
                ev_objs = shifted
            rn = float(r_norm[row])
            f_rows.write(f'{{"seq":{seq},"pass":{ev.pass_index},"row":{row},'
                         f'"t_sim_ms":{ev.t_sim_us / 1000.0!r},"r_norm":{rn!r}}}\n')
            summary.rows += 1
            if emit.active:
                emit.row(ev, rn, t_ms)

            # sound events due before the next row
            stop = int(np.searchsorted(ev_onsets, t_ms + row_ms, side="left"))
            if stop > ev_pos:
                for line in itertools.islice(ev_lines, stop - ev_pos):
                    f_events.write(line + "\n")
                if emit.active:
                    for i in range(ev_pos, stop):
                        e = ev_objs.event(i)
                        addr, args = e.osc()
                        emit.message(addr, args, f"simulacra/snd/{e.kind}", e.to_json(), t_ms)
                summary.events += stop - ev_pos
                ev_pos = stop

            if has_bb[row]:
                for s in mapper.on_row(row, spikes[row], rn, t_ms):
                    f_strikes.write(_dumps(s.to_json()) + "\n")
                    summary.strikes += 1
                    if emit.active:
                        addr, args = s.osc()
                        emit.message(addr, args, "simulacra/fab/solenoid", s.to_json(), t_ms)

            if eco is not None:
                eco.tick(spikes[row], rn, row)
                if digest_every and (seq + 1) % digest_every == 0:
                    d = eco.digest()
                    f_eco.write(_dumps({"seq": seq, "row": row, "tick": eco.tick_count,
                                        "eco_steps": eco.eco_steps, "digest": d}) + "\n")
                if dump_every and (seq + 1) % dump_every == 0:
                    frames_dir.mkdir(exist_ok=True)
                    write_ppm(frames_dir / f"composite_{seq + 1:07d}.ppm",
                              composite_rgb(eco.fields))
                    summary.dumps += 1

            fired = np.flatnonzero(spikes[row])
            if fired.size:
                pending_fired.append(fired)
            # frames whose time falls in [t_ms, t_ms + row_ms) see rows up to this one
            while leds.index * frame_ms < t_ms + row_ms:
                cluster, cluster_step = _led_frame(leds, eco, cluster, cluster_step,
                                                   pending_fired, fabric, f_led, emit,
                                                   led_ppm_every, frames_dir, summary)
                pending_fired = []
        # one closing frame when the last rows fall after the last frame time
        if seq >= 0 and (leds.index - 1) * frame_ms < seq * row_ms:
            _led_frame(leds, eco, cluster, cluster_step, pending_fired, fabric, f_led, emit,
                       led_ppm_every, frames_dir, summary)
    finally:
        for fh in files.values():
            fh.close()
        emit.close()

    summary.suppressed = mapper.suppressed
    summary.backbone_spikes = mapper.total_spikes
    if eco is not None:
        summary.final_ecology_digest = eco.digest()
        summary.deposit_totals = {k: int(v) for k, v in eco.deposit_log.totals.items()}
        spike_rows, spike_agents, _ = eco.deposit_log.arrays()
        np.savez_compressed(out / "spike_deposits.npz", row=spike_rows, agent=spike_agents)
        eco.close()
    if stats is not None:
        summary.max_late_ms = stats.max_late_ms
    summary.digests = {name: _file_digest(out / name) for name in LOG_FILES}
    summary.wall_s = time.perf_counter() - t_start
    (out / "summary.json").write_text(json.dumps(summary.to_json(), indent=2) + "\n")
    return summary
