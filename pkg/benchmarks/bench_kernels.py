"""Compare the compiled kernels against the numpy fallback.

Per-kernel timings use both backends in one process (``kernels.backends()``).
The end-to-end hyper-cleaning solve runs in a subprocess per backend so that
the backend is chosen at import exactly as in normal use.

    python3 benchmarks/bench_kernels.py [--out bench.csv] [--repeat 5] [--T 20]
"""

import argparse
import csv
import os
import subprocess
import sys
import timeit

import numpy as np

from bilevel_kit import kernels

SOLVE_SNIPPET = """
import time, numpy as np
from bilevel_kit import SolveConfig, solve, kernels
from bilevel_kit.zoo import synth_blobs, hyper_cleaning_problem, default_schedule
p = hyper_cleaning_problem(synth_blobs(100, 5, 2, 0.3, seed=7))
cfg = SolveConfig("BDA", default_schedule(p, K=100), np.zeros(p.m), np.zeros(p.n), 1.0, {T})
t = time.perf_counter(); tr = solve(p, cfg); dt = time.perf_counter() - t
print(kernels.BACKEND, dt, repr(float(tr.last.phi)))
"""


def kernel_cases(N, d, C, seed=0):
    rng = np.random.default_rng(seed)
    U = np.ascontiguousarray(rng.normal(size=(N, d + 1)))
    labels = np.ascontiguousarray(rng.integers(0, C, size=N), dtype=np.int64)
    w = np.ascontiguousarray(rng.uniform(size=N))
    W = np.ascontiguousarray(rng.normal(size=(d + 1, C)))
    V = np.ascontiguousarray(rng.normal(size=(d + 1, C)))
    z = rng.normal(size=N * C)
    return {
        "xent_losses": lambda k: k.xent_losses(U, labels, W),
        "xent_grad": lambda k: k.xent_grad(U, labels, w, W),
        "xent_hvp": lambda k: k.xent_hvp(U, w, W, V),
        "xent_mixed": lambda k: k.xent_mixed(U, labels, W, V),
        "soft_threshold": lambda k: k.soft_threshold(z, 0.5),
    }


def bench_kernels(repeat, shapes):
    rows = []
    for N, d, C in shapes:
        for name, call in kernel_cases(N, d, C).items():
            times = {}
            for backend, mod in kernels.backends().items():
                number = max(1, int(2e5 // (N * C)))
                best = min(timeit.repeat(lambda: call(mod), number=number, repeat=repeat)) / number
                times[backend] = best
            for backend, t in times.items():
                rows.append(dict(case=f"{name}[N={N},d={d},C={C}]", backend=backend, seconds=t,
                                 speedup_vs_python=times["python"] / t))
    return rows


def bench_solve(T):
    rows = []
    for backend in kernels.backends():
        env = dict(os.environ)
        env.pop("BILEVEL_KIT_PURE_PYTHON", None)
        if backend == "python":
            env["BILEVEL_KIT_PURE_PYTHON"] = "1"
        out = subprocess.run([sys.executable, "-c", SOLVE_SNIPPET.format(T=T)], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        rows.append(dict(case=f"hyperclean_solve[K=100,T={T}]", backend=out[0], seconds=float(out[1]),
                         phi=out[2]))
    base = next(r["seconds"] for r in rows if r["backend"] == "python")
    for r in rows:
        r["speedup_vs_python"] = base / r["seconds"]
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="bench_kernels.csv")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--T", type=int, default=20, help="outer iterations of the end-to-end solve")
    args = ap.parse_args(argv)
    if "cython" not in kernels.backends():
        print("compiled extension not built; only the numpy fallback is available", file=sys.stderr)
    rows = bench_kernels(args.repeat, [(200, 5, 2), (2000, 50, 10), (7000, 784, 10)])
    rows += bench_solve(args.T)
    fields = ["case", "backend", "seconds", "speedup_vs_python", "phi"]
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, restval="")
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print(f"{r['case']:<40} {r['backend']:<7} {r['seconds'] * 1e3:10.3f} ms  x{r['speedup_vs_python']:.2f}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
