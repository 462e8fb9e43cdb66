"""Self-check suite behind ``simulacra verify``.

Each check returns a :class:`CheckResult` carrying what was measured and what
was expected, so a failing report says by how much it missed.
"""
from __future__ import annotations

import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels, sonify
from .dataset import RateSeries, detect_bursts
from .wire.osc import Blob, OscMessage, osc_decode, osc_encode

MASS_DECAY = 0.9
MASS_STEPS = 100
MASS_RTOL = 1e-6


@dataclass
class CheckResult:
    check_id: str
    passed: bool
    measured: object
    expected: object
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        text = f"[{tag}] {self.check_id}: measured={self.measured} expected={self.expected}"
        return text + (f" ({self.detail})" if self.detail else "")

    def to_json(self) -> dict:
        return {"id": self.check_id, "passed": self.passed, "measured": _plain(self.measured),
                "expected": _plain(self.expected), "detail": self.detail}


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    return v


def check_mapping_endpoints(samples: int = 1000) -> CheckResult:
    want = {"sustain(0)": 0.21, "sustain(1)": 20.0, "granular(0)": 160.0, "granular(1)": 5.0,
            "grain_ms(0)": 6.25, "grain_ms(1)": 400.0, "kick(0)": 0.83, "kick(1)": 0.1}
    fns = {"sustain": sonify.sustain_density, "granular": sonify.granular_density,
           "grain_ms": sonify.grain_duration, "kick": sonify.kick_density}
    got = {f"{k}({r})": float(fn(float(r))) for k, fn in fns.items() for r in (0, 1)}
    exact = all(got[k] == v for k, v in want.items())
    r = np.sort(np.random.default_rng(0).random(samples))
    rising = {"sustain": True, "granular": False, "grain_ms": True, "kick": False}
    mono = []
    for k, up in rising.items():
        d = np.diff(fns[k](r))
        ok = bool(np.all(d >= 0) if up else np.all(d <= 0))
        mono.append(ok)
    passed = exact and all(mono)
    return CheckResult("mapping_endpoints", passed, got, want,
                       f"monotone on {samples} points" if all(mono) else "monotonicity violated")


def check_mass_conservation(decay: float = MASS_DECAY, steps: int = MASS_STEPS,
                            size: int = 64, seed: int = 0) -> CheckResult:
    """Diffuse/decay with no deposits must scale total mass by exactly 0.9 per step.

    ``decay`` is the factor actually handed to the field kernel; passing
    anything other than the nominal 0.9 simulates a faulty step.
    """
    field = np.random.default_rng(seed).random((size, size))
    t0 = float(field.sum())
    scratch = np.empty_like(field)
    a, b = field, np.empty_like(field)
    for _ in range(steps):
        kernels.diffuse_decay(a, decay, out=b, scratch=scratch)
        a, b = b, a
    measured = float(a.sum())
    expected = t0 * MASS_DECAY ** steps
    rel = abs(measured - expected) / expected
    return CheckResult("mass_conservation", bool(rel <= MASS_RTOL), measured, expected,
                       f"relative error {rel:.3e}, tolerance {MASS_RTOL:g}")


# ("/sim/row", [42]) assembled by hand from the wire rules
def _reference_row_42() -> bytes:
    addr = b"/sim/row"
    addr += b"\0" * (4 - len(addr) % 4)
    tags = b",i" + b"\0\0"
    return addr + tags + struct.pack(">i", 42)


def _random_message(rng) -> OscMessage:
    parts = ["".join(chr(c) for c in rng.integers(97, 123, rng.integers(1, 9)))
             for _ in range(rng.integers(1, 4))]
    args = []
    for _ in range(rng.integers(0, 6)):
        kind = rng.integers(0, 4)
        if kind == 0:
            args.append(int(rng.integers(-2**31, 2**31)))
        elif kind == 1:
            args.append(float(np.float32(rng.normal() * 1e3)))
        elif kind == 2:
            args.append("".join(chr(c) for c in rng.integers(32, 127, rng.integers(0, 20))))
        else:
            args.append(Blob(rng.bytes(int(rng.integers(0, 64)))))
    return OscMessage("/" + "/".join(parts), args)


def check_codec_roundtrip(n: int = 2000, seed: int = 0) -> CheckResult:
    golden = osc_encode(OscMessage("/sim/row", [42]))
    ok_golden = golden == _reference_row_42() and len(golden) == 20
    rng = np.random.default_rng(seed)
    mismatches = 0
    misaligned = 0
    for _ in range(n):
        msg = _random_message(rng)
        buf = osc_encode(msg)
        misaligned += len(buf) % 4 != 0
        back = osc_decode(buf)
        sent = [a.data if isinstance(a, Blob) else a for a in msg.args]
        if back.address != msg.address or back.args != sent:
            mismatches += 1
    passed = ok_golden and mismatches == 0 and misaligned == 0
    return CheckResult("codec_roundtrip", passed,
                       {"golden": golden.hex(), "mismatches": mismatches, "misaligned": misaligned},
                       {"golden": _reference_row_42().hex(), "mismatches": 0, "misaligned": 0},
                       f"{n} random messages")


def _small_config(rows: int, workers: int):
    from .config import RunConfig
    cfg = RunConfig()
    cfg.dataset.synthetic.rows = rows
    cfg.ecology.workers = workers
    cfg.output.digest_every = 500
    return cfg


def check_determinism(rows: int = 3000) -> CheckResult:
    """Two runs with one seed, plus a two-worker run, must produce identical logs."""
    from . import pipeline

    digests = []
    with tempfile.TemporaryDirectory() as tmp:
        for i, workers in enumerate((1, 1, 2)):
            cfg = _small_config(rows, workers)
            digests.append(pipeline.run(cfg, Path(tmp) / f"run{i}").digests)
    same = digests[0] == digests[1]
    workers_same = digests[0] == digests[2]
    differing = sorted(k for k in digests[0] if digests[0][k] != digests[1][k] or
                       digests[0][k] != digests[2][k])
    return CheckResult("determinism", same and workers_same,
                       {"repeat_identical": same, "worker_invariant": workers_same},
                       {"repeat_identical": True, "worker_invariant": True},
                       f"{rows} rows" + (f"; differing logs {differing}" if differing else ""))


def planted_square_wave(n_rows: int = 20_000, bursts=((2000, 2600), (8000, 8400), (15000, 16000)),
                        low: float = 0.05, high: float = 1.0) -> tuple[RateSeries, list]:
    norm = np.full(n_rows, low)
    for s, e in bursts:
        norm[s:e] = high
    return RateSeries(window=1, raw=norm * 100.0, norm=norm), list(bursts)


def check_burst_detection() -> CheckResult:
    rate, truth = planted_square_wave()
    found = detect_bursts(rate)
    ok = len(found) == len(truth) and all(abs(a - s) <= 1 and abs(b - e) <= 1
                                          for (a, b), (s, e) in zip(found, truth))
    return CheckResult("burst_detection", ok, found, truth, "tolerance 1 row")


CHECKS = {
    "mapping_endpoints": check_mapping_endpoints,
    "mass_conservation": check_mass_conservation,
    "codec_roundtrip": check_codec_roundtrip,
    "determinism": check_determinism,
    "burst_detection": check_burst_detection,
}


def run_checks(only=None, inject_decay: float | None = None) -> list[CheckResult]:
    results = []
    for name, fn in CHECKS.items():
        if only and name not in only:
            continue
        if name == "mass_conservation" and inject_decay is not None:
            results.append(fn(decay=inject_decay))
        else:
            try:
                results.append(fn())
            except Exception as exc:  # a crash is a failed check, not a crashed report
                results.append(CheckResult(name, False, f"error: {exc!r}", "no error"))
    return results


def report(results: list[CheckResult]) -> str:
    lines = [r.line() for r in results]
    failed = [r.check_id for r in results if not r.passed]
    lines.append(f"{len(results) - len(failed)}/{len(results)} checks passed" +
                 (f"; failed: {', '.join(failed)}" if failed else ""))
    return "\n".join(lines)

