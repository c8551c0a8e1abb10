"""Compiled vs numpy-fallback kernel timings, per layout and kernel.

    python benchmarks/bench_kernels.py --n 256 --repeat 5
"""
import argparse
import json
import statistics
import sys
import time

from lbenergy import kernels
from lbenergy.field import field_checksum, init_field
from lbenergy.lattice import LatticeGeometry, build_velocity_set
from lbenergy.layouts import ALL_LAYOUTS


def time_kernel(fn, repeat):
    fn()  # warm
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - t0)
    return statistics.median(samples)


def bench(n, repeat, fma, backends):
    q37, q9 = build_velocity_set("D2Q37"), build_velocity_set("D2Q9")
    surrogate = kernels.SurrogateParams(fma, 1)
    bgk = kernels.BgkParams(0.8)
    rows = []
    for layout in ALL_LAYOUTS:
        for backend in backends:
            g = LatticeGeometry.for_set(n, n, q37)
            f = init_field(g, 37, layout, ("random", 1))
            nxt = f.zeros_like()

            def prop():
                kernels.halo_exchange(f)
                kernels.propagate(f, nxt, q37, backend=backend)

            work = f.copy()
            g9 = LatticeGeometry.for_set(n, n, q9)
            f9 = init_field(g9, 9, layout, ("random", 1))
            cases = {
                "propagate": (prop, 37),
                "surrogate": (lambda: kernels.collide_surrogate(work, surrogate, backend=backend), 37),
                "bgk": (lambda: kernels.collide_bgk(f9, q9, bgk, backend=backend), 9),
            }
            for kernel, (fn, q) in cases.items():
                ns = time_kernel(fn, repeat)
                row = {"layout": str(layout), "backend": backend, "kernel": kernel, "ns_per_site": ns / (n * n)}
                if kernel == "propagate":
                    row["gb_per_s"] = 2 * q * 8 * n * n / ns
                rows.append(row)
            prop()
            rows[-3]["checksum"] = field_checksum(nxt)
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=256, help="lattice side (n x n)")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--fma", type=int, default=90, help="surrogate multiply-adds per population")
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; timing the python fallback only", file=sys.stderr)
    rows = bench(args.n, args.repeat, args.fma, backends)
    if args.json:
        print(json.dumps(rows, indent=2))
        return 0
    print(f"lattice {args.n}x{args.n}, median of {args.repeat}, surrogate F={args.fma}")
    print(f"{'layout':<11} {'kernel':<10} " + " ".join(f"{b + ' ns/site':>18}" for b in backends)
          + ("   speedup" if len(backends) > 1 else ""))
    by = {(r["layout"], r["kernel"], r["backend"]): r for r in rows}
    for layout in ALL_LAYOUTS:
        for kernel in ("propagate", "surrogate", "bgk"):
            vals = [by[(str(layout), kernel, b)]["ns_per_site"] for b in backends]
            line = f"{str(layout):<11} {kernel:<10} " + " ".join(f"{v:>18.2f}" for v in vals)
            if len(vals) > 1:
                line += f"   {vals[1] / vals[0]:7.1f}x"
            print(line)
    sums = {r["checksum"] for r in rows if "checksum" in r}
    print(f"propagate checksums identical across layouts and backends: {len(sums) == 1}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
