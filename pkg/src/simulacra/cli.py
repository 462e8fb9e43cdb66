"""Command-line entry point: ``simulacra <command> [options]``.

Exit codes: 0 ok, 1 invalid arguments or config, 2 runtime failure,
3 a verification check failed.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_VERIFY = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for runtime failures here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(float(t)) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") \
            from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("counts must be >= 1")
    return vals


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _overrides(pairs) -> dict:
    out = {}
    for item in pairs or ():
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            out[key.strip()] = json.loads(raw)
        except ValueError:
            out[key.strip()] = raw
    return out


# ---------------------------------------------------------------- commands
def cmd_gen_data(args) -> int:
    from . import dataset as ds

    raster, meta = ds.gen_synthetic(
        args.seed, args.rows, args.channels, (args.min_hz, args.max_hz),
        ds.BurstSpec(args.bursts, args.burst_multiplier, args.burst_ms,
                     min(args.backbone_k, args.channels)), args.dt_ms)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    ds.save_raster(out, raster, meta, args.format)
    fmt = ds._format_of(out, args.format)
    rate = ds.population_rate(raster)
    bursts = ds.detect_bursts(rate)
    total = int(raster.spikes.sum(dtype="int64"))
    seconds = raster.n_rows * raster.dt_ms / 1000.0
    summary = {
        "path": str(out), "format": fmt, "rows": raster.n_rows, "channels": raster.n_channels,
        "dt_ms": raster.dt_ms, "spikes": total,
        "mean_rate_hz_per_channel": total / (seconds * raster.n_channels),
        "peak_population_rate_hz": float(rate.raw.max()), "bursts_detected": len(bursts),
        "backbone_channels": ds.backbone_ids(meta), "bytes": out.stat().st_size,
        "sha256": _sha256(out), "meta_path": str(ds.sidecar_path(out)),
    }
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def _load_run_config(args):
    from .config import load_config

    overrides = _overrides(getattr(args, "set", None))
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "rows", None) is not None:
        overrides["dataset.synthetic.rows"] = args.rows
    if getattr(args, "data", None) is not None:
        overrides["dataset.path"] = str(args.data)
    if getattr(args, "dump_every", None) is not None:
        overrides["output.dump_every"] = args.dump_every
    if getattr(args, "mode", None) is not None:
        overrides["playback.mode"] = args.mode
    if getattr(args, "workers", None) is not None:
        overrides["ecology.workers"] = args.workers
    if getattr(args, "out", None) is not None:
        overrides["output.dir"] = str(args.out)
    return load_config(args.config, overrides=overrides)


def cmd_run(args) -> int:
    from . import pipeline

    cfg = _load_run_config(args)
    summary = pipeline.run(cfg)
    print(json.dumps(summary.to_json(), indent=2))
    return EXIT_OK


def cmd_config(args) -> int:
    cfg = _load_run_config(args)
    text = cfg.to_json() + "\n"
    if args.write:
        Path(args.write).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_verify(args) -> int:
    from . import verify

    results = verify.run_checks(args.only, args.inject_decay)
    if args.json:
        print(json.dumps([r.to_json() for r in results], indent=2))
    else:
        print(verify.report(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def cmd_bench(args) -> int:
    from . import bench, kernels

    names = ["numba", "numpy"] if args.backend == "both" else [args.backend]
    for name in names:
        if name not in kernels.available_backends():
            raise UsageError(f"backend {name!r} is not available")

    def progress(row):
        print(f"{row.model} {row.backend} n={row.count}: {row.step_s * 1e3:.2f} ms/step",
              file=sys.stderr)

    rows = bench.run_bench(names, args.physarum_counts, args.boids_counts, args.field,
                           args.repeats, progress=progress)
    text = bench.to_csv(rows)
    if args.csv:
        Path(args.csv).write_text(text)
    sys.stdout.write(text)
    ok = True
    if args.witness:
        for name in names:
            for w in (bench.physarum_witness(backend=name), bench.boids_witness(backend=name)):
                print(f"{name}: {w.line()}", file=sys.stderr)
                ok &= w.passed
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_sync(args) -> int:
    from .clock import PlaybackConfig
    from .wire.sync import run_sync_harness
    from .wire.transport import LatencyModel

    model = LatencyModel(args.latency_ms, args.jitter_ms, args.loss).validate()
    report = run_sync_harness(args.subscribers, model, PlaybackConfig(args.dilation),
                              args.rows, seed=args.seed, every=args.every)
    print(json.dumps(report.to_json(), indent=2))
    if args.max_skew is not None and report.max_skew_rows > args.max_skew:
        return EXIT_VERIFY
    return EXIT_OK


# ------------------------------------------------------------------ parser
def _add_run_options(p) -> None:
    p.add_argument("--config", type=Path, help="JSON config file (defaults apply otherwise)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="dotted override, value parsed as JSON (repeatable)")
    p.add_argument("--seed", type=int)
    p.add_argument("--rows", type=_positive_int, help="synthetic raster length")
    p.add_argument("--data", type=Path, help="raster file to replay instead of synthetic data")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--workers", type=_positive_int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="simulacra", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="write a synthetic spike raster and metadata sidecar")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--rows", type=_positive_int, default=180_000)
    g.add_argument("--channels", type=_positive_int, default=131)
    g.add_argument("--dt-ms", type=_positive_int, default=1)
    g.add_argument("--bursts", type=_nonneg_int, default=5)
    g.add_argument("--burst-multiplier", type=float, default=25.0)
    g.add_argument("--burst-ms", type=_positive_int, default=200)
    g.add_argument("--backbone-k", type=_nonneg_int, default=27)
    g.add_argument("--min-hz", type=float, default=0.5)
    g.add_argument("--max-hz", type=float, default=3.0)
    g.add_argument("--format", choices=("csv", "packed-binary"),
                   help="default: csv for a .csv path, packed binary otherwise")
    g.add_argument("--out", type=Path, default=Path("raster.snr"))
    g.set_defaults(func=cmd_gen_data)

    r = sub.add_parser("run", help="replay the dataset and write all logs")
    _add_run_options(r)
    r.add_argument("--dump-every", type=_nonneg_int,
                   help="write a composite PPM every N rows (0 disables)")
    r.add_argument("--mode", choices=("offline", "realtime"))
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("config", help="print the effective configuration")
    _add_run_options(c)
    c.add_argument("--write", type=Path, help="write to this file instead of stdout")
    c.set_defaults(func=cmd_config)

    v = sub.add_parser("verify", help="run the invariant checks")
    v.add_argument("--only", action="append", help="run just this check (repeatable)")
    v.add_argument("--inject-decay", type=float,
                   help="decay factor fed to the field kernel in the mass check")
    v.add_argument("--json", action="store_true")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="kernel throughput as CSV")
    b.add_argument("--backend", choices=("numba", "numpy", "both"), default="numba")
    b.add_argument("--physarum-counts", type=_int_list, default=[10_000, 100_000, 1_000_000])
    b.add_argument("--boids-counts", type=_int_list, default=[1_000, 5_000, 10_000])
    b.add_argument("--field", type=_positive_int, default=1024)
    b.add_argument("--repeats", type=_positive_int, default=3)
    b.add_argument("--csv", type=Path, help="also write the table here")
    b.add_argument("--witness", action="store_true",
                   help="check the linear and quadratic scaling ratios")
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("sync", help="simulated multi-subscriber synchronization harness")
    s.add_argument("--subscribers", type=_positive_int, default=3)
    s.add_argument("--latency-ms", type=float, default=10.0)
    s.add_argument("--jitter-ms", type=float, default=10.0)
    s.add_argument("--loss", type=float, default=0.0)
    s.add_argument("--rows", type=_positive_int, default=180_000)
    s.add_argument("--dilation", type=float, default=30.0)
    s.add_argument("--every", type=_positive_int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-skew", type=int, help="exit 3 when the skew exceeds this")
    s.set_defaults(func=cmd_sync)
    return parser


def main(argv=None) -> int:
    from .config import ConfigError

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"simulacra {args.command}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"simulacra {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:
        print(f"simulacra {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
