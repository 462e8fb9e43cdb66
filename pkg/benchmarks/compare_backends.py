"""Time the numba kernels against the pure-numpy fallback.

    python benchmarks/compare_backends.py [--quick] [--csv out.csv]

Both backends run the same agent counts; the last column is the numpy
time divided by the numba time for that row.
"""
import argparse
import sys

from simulacra import bench, kernels


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true", help="small counts for a smoke run")
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--csv", help="write the combined table here")
    args = ap.parse_args(argv)

    if "numba" not in kernels.available_backends():
        print("numba is not installed; nothing to compare", file=sys.stderr)
        return 1
    if args.quick:
        phys, boids, field = (10_000, 20_000), (500, 1_000), 256
    else:
        phys, boids, field = (10_000, 100_000), (1_000, 2_000), 1024

    rows = bench.run_bench(("numba", "numpy"), phys, boids, field, args.repeats)
    by_key = {(r.model, r.count, r.backend): r for r in rows}
    lines = ["model,count,numba_step_s,numpy_step_s,speedup"]
    for r in rows:
        if r.backend != "numba":
            continue
        slow = by_key[(r.model, r.count, "numpy")]
        lines.append(f"{r.model},{r.count},{r.step_s:.6g},{slow.step_s:.6g},"
                     f"{slow.step_s / r.step_s:.2f}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
