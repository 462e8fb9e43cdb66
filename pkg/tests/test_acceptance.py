"""One test per acceptance criterion, each printing a single PASS/FAIL line.

Full-replay runs are shared through module fixtures so the suite pays for
each 180,000-row replay once.
"""
import json
import math
import struct
import time

import numpy as np
import pytest

from simulacra import bench, kernels, pipeline
from simulacra import sonify as so
from simulacra.clock import PlaybackConfig
from simulacra.config import load_config
from simulacra.dataset import RateSeries, detect_bursts
from simulacra.ecology.boids import BoidParams, Boids, steering
from simulacra.ecology.physarum import PhysarumSpecies
from simulacra.ecology.termites import SPIKE
from simulacra.ecology.world import Ecology, EcologyConfig
from simulacra.wire.osc import Blob, OscMessage, osc_decode, osc_encode
from simulacra.wire.sync import run_sync_harness
from simulacra.wire.transport import LatencyModel

ROWS = 180_000
ROW_MS = 30.0


def _full_run(out, **overrides):
    cfg = load_config(environ={}, overrides=overrides)
    t0 = time.perf_counter()
    summary = pipeline.run(cfg, out)
    return summary, time.perf_counter() - t0


@pytest.fixture(scope="module")
def full_a(tmp_path_factory):
    out = tmp_path_factory.mktemp("full_a")
    summary, wall = _full_run(out)
    return summary, wall, out


@pytest.fixture(scope="module")
def full_b(tmp_path_factory):
    summary, _ = _full_run(tmp_path_factory.mktemp("full_b"))
    return summary


# --------------------------------------------------------------------- 1
def test_criterion_01_clock_fidelity(full_a, record_criterion):
    summary, wall, out = full_a
    n = 0
    last = None
    with open(out / "rows.jsonl") as fh:
        for line in fh:
            n += 1
            last = line
    last_t = json.loads(last)["t_sim_ms"]
    span_min = (last_t + ROW_MS) / 60_000.0
    ok = n == ROWS and last_t == 5_399_970.0 and abs(span_min - 90.0) <= ROW_MS / 60_000.0 \
        and wall < 60.0
    record_criterion(1, "clock fidelity", ok,
                     f"rows={n} last_t_sim={last_t} ms span={span_min:.4f} min wall={wall:.1f} s")
    assert ok


# --------------------------------------------------------------------- 2
def test_criterion_02_mapping_endpoints(record_criterion):
    want = [(so.sustain_density, 0.21, 20.0), (so.granular_density, 160.0, 5.0),
            (so.grain_duration, 6.25, 400.0), (so.kick_density, 0.83, 0.1)]
    exact = all(fn(0.0) == lo and fn(1.0) == hi for fn, lo, hi in want)
    r = np.sort(np.random.default_rng(2).random(1000))
    mono = [bool(np.all(np.diff(fn(r)) > 0) if hi > lo else np.all(np.diff(fn(r)) < 0))
            for fn, lo, hi in want]
    ok = exact and all(mono)
    record_criterion(2, "mapping endpoints", ok,
                     f"exact={exact} monotone(1000 points)={mono}")
    assert ok


# --------------------------------------------------------------------- 3
def _const_rate(level, rows):
    norm = np.full(rows, float(level))
    return RateSeries(window=1, raw=norm * 1000.0, norm=norm)


def test_criterion_03_stochastic_calibration(record_criterion):
    # 1,000 simulated seconds: 100,000 one-millisecond rows at dilation 10
    cfg = PlaybackConfig(dilation=10.0)
    checks = []
    for level in (0.0, 1.0):
        log = so.gen_events(_const_rate(level, 100_000), [], cfg, seed=11,
                            streams=["sustain", "grain", "kick"])
        for kind, fn in (("sustain", so.sustain_density), ("grain", so.granular_density),
                         ("kick", so.kick_density)):
            sel = log.of_kind(kind)
            if kind == "kick":
                sel = sel.select(sel.articulation == 0)  # repeats are not Poisson draws
            expected = fn(level) * 1000.0
            band = 3.0 * math.sqrt(expected)
            checks.append((kind, level, len(sel), expected, abs(len(sel) - expected) <= band))
    sustain = so.gen_events(_const_rate(1.0, 60_000), [], PlaybackConfig(), seed=12,
                            streams=["sustain"])
    first = sustain.select(slice(0, 10_000))
    half = float(first.half_speed.mean())
    ok = all(c[-1] for c in checks) and len(first) == 10_000 and abs(half - 0.5) <= 0.015
    detail = " ".join(f"{k}@{lv:g}:{n}/{e:g}" for k, lv, n, e, _ in checks)
    record_criterion(3, "stochastic calibration", ok, f"{detail} half_speed={half:.4f}")
    assert ok


# --------------------------------------------------------------------- 4
def test_criterion_04_mass_conservation(record_criterion):
    field = np.random.default_rng(4).random((64, 64))
    t0 = math.fsum(field.ravel())
    expected = t0 * 0.9 ** 100
    errors = {}
    for backend in kernels.available_backends():
        k = kernels.get_backend(backend)
        a, b = field.copy(), np.empty_like(field)
        for _ in range(100):
            k.diffuse_decay(a, 0.9, out=b)
            a, b = b, a
        assert a.dtype == np.float64
        errors[backend] = abs(math.fsum(a.ravel()) - expected) / expected
    ok = all(e <= 1e-6 for e in errors.values())
    record_criterion(4, "mass conservation", ok,
                     " ".join(f"{k}: relative error {e:.3e}" for k, e in errors.items()))
    assert ok


# --------------------------------------------------------------------- 5
def test_criterion_05_spike_override(record_criterion):
    rng = np.random.default_rng(5)
    n_rows, n_ch = 2000, 131
    raster = np.zeros((n_rows, n_ch), np.uint8)
    raster.ravel()[rng.choice(n_rows * n_ch, 10_000, replace=False)] = 1
    cfg = EcologyConfig(field_size=32, species=[PhysarumSpecies(count=200)], n_boids=20,
                        boids_world=64.0, termite_field=64)
    eco = Ecology(cfg, n_ch, seed=5)
    for r in range(n_rows):
        eco.tick(raster[r], 0.5, r)
    rows, agents, reasons = eco.deposit_log.arrays()
    spike = reasons == SPIKE
    logged = set(zip(rows[spike].tolist(), agents[spike].tolist()))
    truth = set(zip(*(a.tolist() for a in np.nonzero(raster))))
    misses = len(truth - logged)
    extra = len(logged - truth)
    ok = len(truth) == 10_000 and misses == 0 and extra == 0 and int(spike.sum()) == 10_000
    record_criterion(5, "spike-override audit", ok,
                     f"spikes={len(truth)} logged={int(spike.sum())} misses={misses}")
    assert ok


# --------------------------------------------------------------------- 6
def test_criterion_06_solenoid_contract(full_a, record_criterion):
    summary, _, out = full_a
    cfg = load_config(environ={})
    inputs = pipeline.load_inputs(cfg)
    bb_spikes = int(inputs.raster.spikes[:, inputs.backbone].sum(dtype=np.int64))
    refractory = cfg.fabric.refractory_ms
    last = {}
    min_gap = math.inf
    emitted = 0
    with open(out / "strikes.jsonl") as fh:
        for line in fh:
            s = json.loads(line)
            emitted += 1
            if s["id"] in last:
                min_gap = min(min_gap, s["onset"] - last[s["id"]])
            last[s["id"]] = s["onset"]
    ok = (min_gap >= refractory and emitted == summary.strikes
          and summary.suppressed + emitted == bb_spikes and sorted(last) == list(range(27)))
    record_criterion(6, "solenoid contract", ok,
                     f"min_gap={min_gap} ms emitted={emitted} suppressed={summary.suppressed} "
                     f"backbone_spikes={bb_spikes} ids={len(last)}")
    assert ok


# --------------------------------------------------------------------- 7
def test_criterion_07_burst_boundaries(record_criterion):
    truth = [(2000, 2600), (8000, 8400), (15000, 16000), (19000, 19300)]
    norm = np.full(25_000, 0.05)
    for s, e in truth:
        norm[s:e] = 1.0
    rate = RateSeries(window=1, raw=norm * 100.0, norm=norm)
    found = detect_bursts(rate)
    bounds = len(found) == len(truth) and all(
        abs(a - s) <= 1 and abs(b - e) <= 1 for (a, b), (s, e) in zip(found, truth))
    log = so.gen_events(rate, found, PlaybackConfig(), seed=7)
    changes = log.of_kind("chord_change")
    want = [e * ROW_MS for _, e in found]
    per_end = all(int(np.sum(changes.onset == t)) == 1 for t in want)
    ok = bounds and per_end and len(changes) == len(found)
    record_criterion(7, "burst boundaries", ok,
                     f"found={found} chord_changes_ms={changes.onset.tolist()}")
    assert ok


# --------------------------------------------------------------------- 8
def _pad(b: bytes) -> bytes:
    return b + b"\0" * (4 - len(b) % 4)


def _reference(address: str, args) -> bytes:
    tags = "," + "".join({int: "i", float: "f", str: "s", bytes: "b"}[type(a)] for a in args)
    body = b""
    for a in args:
        if isinstance(a, int):
            body += struct.pack(">i", a)
        elif isinstance(a, float):
            body += struct.pack(">f", a)
        elif isinstance(a, str):
            body += _pad(a.encode())
        else:
            body += struct.pack(">i", len(a)) + a + b"\0" * (-len(a) % 4)
    return _pad(address.encode()) + _pad(tags.encode()) + body


def _random_args(rng):
    args = []
    for _ in range(rng.integers(0, 7)):
        kind = rng.integers(0, 4)
        if kind == 0:
            args.append(int(rng.integers(-2**31, 2**31)))
        elif kind == 1:
            args.append(float(np.float32(rng.standard_cauchy())))
        elif kind == 2:
            args.append("".join(map(chr, rng.integers(1, 0x2FF, rng.integers(0, 24)))))
        else:
            args.append(rng.bytes(int(rng.integers(0, 40))))
    return args


def test_criterion_08_osc_codec(record_criterion):
    golden = bytes.fromhex("2F73696D2F726F77000000002C6900000000002A")
    golden_ok = (len(golden) == 20 and _reference("/sim/row", [42]) == golden
                 and osc_encode(OscMessage("/sim/row", [42])) == golden)
    rng = np.random.default_rng(8)
    mismatches = misaligned = 0
    for _ in range(10_000):
        addr = "/" + "/".join("".join(map(chr, rng.integers(97, 123, rng.integers(1, 9))))
                              for _ in range(rng.integers(1, 4)))
        args = _random_args(rng)
        wire = [Blob(a) if isinstance(a, bytes) and rng.random() < 0.5 else a for a in args]
        buf = osc_encode(OscMessage(addr, wire))
        misaligned += len(buf) % 4 != 0
        back = osc_decode(buf)
        if buf != _reference(addr, args) or back.address != addr or back.args != args:
            mismatches += 1
    ok = golden_ok and mismatches == 0 and misaligned == 0
    record_criterion(8, "OSC codec", ok,
                     f"golden={golden_ok} fuzz=10000 mismatches={mismatches} "
                     f"misaligned={misaligned}")
    assert ok


# --------------------------------------------------------------------- 9
def test_criterion_09_sync(record_criterion):
    jitter = run_sync_harness(3, LatencyModel(10.0, 10.0), PlaybackConfig(), ROWS, seed=9)
    zero = run_sync_harness(3, LatencyModel(), PlaybackConfig(), ROWS, seed=9)
    ok = (jitter.max_skew_rows <= 1 and jitter.published == ROWS
          and jitter.delivered == 3 * ROWS and zero.max_skew_rows == 0)
    record_criterion(9, "sync harness", ok,
                     f"jitter skew={jitter.max_skew_rows} rows "
                     f"(mean latency {jitter.mean_latency_ms:.2f} ms), "
                     f"zero-latency skew={zero.max_skew_rows}")
    assert ok


# -------------------------------------------------------------------- 10
def test_criterion_10_determinism(full_a, full_b, tmp_path, record_criterion):
    a, _, _ = full_a
    repeat = a.digests == full_b.digests and a.final_ecology_digest == \
        full_b.final_ecology_digest
    by_workers = {}
    for w in (2, 8):
        s, _ = _full_run(tmp_path / f"w{w}", **{"ecology.workers": w})
        by_workers[w] = s.digests == a.digests and s.final_ecology_digest == \
            a.final_ecology_digest
    ok = repeat and all(by_workers.values())
    record_criterion(10, "determinism", ok,
                     f"repeat identical={repeat} workers 1 vs 2/8 identical={by_workers}")
    assert ok


# -------------------------------------------------------------------- 11
def test_criterion_11_complexity_witnesses(record_criterion):
    phys = bench.physarum_witness()
    naive = bench.boids_witness()
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 300))
        world = float(rng.uniform(20.0, 400.0))
        rn = float(rng.uniform(2.0, 60.0))
        b = Boids.spawn(n, world, world * rng.uniform(0.5, 2.0), 2.0, rng)
        p = BoidParams(r_neighbor=rn, r_sep=rn * rng.uniform(0.1, 1.0))
        fa = steering(b, p, "naive")
        fg = steering(b, p, "grid")
        worst = max(worst, float(np.max(np.abs(fa[0] - fg[0]), initial=0.0)),
                    float(np.max(np.abs(fa[1] - fg[1]), initial=0.0)))
    ok = phys.passed and naive.passed and worst <= 1e-9
    record_criterion(11, "complexity witnesses", ok,
                     f"physarum ratio={phys.ratio:.3f} boids ratio={naive.ratio:.3f} "
                     f"grid-naive max diff={worst:.2e}")
    assert ok


# -------------------------------------------------------------------- 12
def test_criterion_12_throughput(record_criterion):
    row = bench.bench_physarum(100_000, 1024, repeats=5)
    steps = 1.0 / row.step_s
    ok = steps >= 30.0
    record_criterion(12, "throughput floor", ok,
                     f"{steps:.1f} steps/s for 100,000 agents on 1024x1024 ({row.backend})")
    assert ok
