"""Command-line entry point: ``bilevel-kit run | reproduce | checkgrad``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 derivative check failure. Trace files are only written once every solve in
the invocation has succeeded, each through a temp file and a rename.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import config as cfgmod
from .errors import BilevelError, ConfigurationError, EvaluationError, InputError, ParameterError
from .hypergrad import fd_hypergrad, reverse_unroll
from .inner import Constant, Reciprocal, Schedule, Scheme, run_inner
from .outer import RunTrace, SolveConfig, atomic_write, metrics, solve
from .problem import BilevelProblem, relative_deviation, verify_first_order, verify_hvp
from .zoo import accuracy, counter_example, default_schedule, hyper_cleaning_problem, sigmoid, synth_blobs

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4
CHECK_TOL = 1e-4
REPRODUCTIONS = ("counterexample-init", "counterexample-K", "alpha-ablation", "hyperclean-synth")


@dataclass
class Run:
    label: str
    problem: BilevelProblem
    config: SolveConfig
    dataset: object = None


def _out_dir(cli_out, cfg_out=""):
    return Path(cli_out or cfg_out or os.environ.get("BILEVEL_KIT_OUT") or "runs")


def _has_reference(problem):
    ref = problem.reference
    return ref is not None and all(v is not None for v in (ref.x_star, ref.y_star, ref.F_star, ref.f_star))


def _solve_one(run: Run) -> RunTrace:
    trace = solve(run.problem, run.config)
    return metrics(trace, run.problem) if _has_reference(run.problem) else trace


def _weight_stats(run: Run, trace: RunTrace) -> dict:
    data = run.dataset
    mask = data.corruption_mask[data.rows("train")]
    w = sigmoid(trace.x_final)
    return {
        "mean_weight_corrupted": float(w[mask].mean()) if mask.any() else float("nan"),
        "mean_weight_clean": float(w[~mask].mean()),
        "val_accuracy": accuracy(data, trace.last.y, "val"),
        "test_accuracy": accuracy(data, trace.last.y, "test"),
    }


def execute(runs, threads: int = 1) -> list:
    """Solve every run (optionally concurrently); results keep the input order."""
    if threads and threads > 1 and len(runs) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(_solve_one, runs))
    return [_solve_one(r) for r in runs]


def write_outputs(runs, traces, out_dir: Path, timing: bool, extra_files=None, experiment_text="") -> list:
    """Write ``<label>.csv`` and ``<label>.json`` per run; on failure remove what was written."""
    written = []
    try:
        for run, trace in zip(runs, traces):
            extra = {"label": run.label}
            if experiment_text:
                extra["experiment"] = experiment_text
            if run.dataset is not None:
                extra["weights"] = _weight_stats(run, trace)
            written.append(trace.write_csv(out_dir / f"{run.label}.csv", timing))
            written.append(trace.write_json(out_dir / f"{run.label}.json", timing, extra))
        for name, text in (extra_files or {}).items():
            written.append(atomic_write(out_dir / name, text))
    except BaseException:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    return written


def _fmt_x(x):
    if x.size <= 3:
        return "[" + ", ".join(f"{v:.6g}" for v in x) + "]"
    return f"|x|={np.linalg.norm(x):.4g} (n={x.size})"


def print_summary(runs, traces, stream=None):
    stream = stream or sys.stdout
    print(f"{'run':<40} {'rows':>5} {'x_final':>22} {'phiK':>12} {'f':>12} {'gnorm':>10}", file=stream)
    for run, tr in zip(runs, traces):
        r = tr.last
        print(f"{run.label:<40} {len(tr):>5} {_fmt_x(tr.x_final):>22} {r.phi:>12.6g} {r.f:>12.6g} "
              f"{r.gnorm:>10.3g}", file=stream)
        if run.dataset is not None:
            s = _weight_stats(run, tr)
            print(f"{'':<40} weights corrupted={s['mean_weight_corrupted']:.4f} "
                  f"clean={s['mean_weight_clean']:.4f} val_acc={s['val_accuracy']:.4f} "
                  f"test_acc={s['test_accuracy']:.4f}", file=stream)


def _run_and_write(runs, out_dir, threads, timing, extra_files=None, experiment_text="", extra_builder=None):
    try:
        traces = execute(runs, threads)
    except (EvaluationError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if extra_builder is not None:
        extra_files = {**(extra_files or {}), **extra_builder(runs, traces)}
    write_outputs(runs, traces, out_dir, timing, extra_files, experiment_text)
    print_summary(runs, traces)
    print(f"wrote {2 * len(runs) + len(extra_files or {})} files to {out_dir}")
    return EXIT_OK


def cmd_run(config_path, out=None, seed=None, threads=1, timing=False) -> int:
    try:
        cfg = cfgmod.load(config_path)
        if seed is not None:
            cfg = cfg.replace(seed=seed)
        problem, data = cfgmod.build_problem(cfg)
        runs = [Run(f"{cfg.name}_{scheme}", problem, sc, data)
                for scheme, sc in cfgmod.solve_configs(cfg, problem)]
    except (ConfigurationError, InputError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return _run_and_write(runs, _out_dir(out, cfg.out_dir), threads, timing, experiment_text=cfg.dumps())


def _ce_config(scheme, K, x0, y0, T, rule=Reciprocal(0.5), s_x=0.1):
    return SolveConfig(scheme, Schedule(0.7, 0.2, rule, K), y0, [x0], s_x, T)


def _tag(v):
    return f"{v:g}".replace(".", "p").replace("-", "m")


def reproduction_runs(name: str, seed: Optional[int] = None):
    """Canned run lists: counter-example sweeps over initialization, K and alpha, and synthetic hyper-cleaning."""
    if name == "counterexample-init":
        p = counter_example()
        return [Run(f"ce-init_x0-{_tag(x0)}_y0-{_tag(y0[0])}-{_tag(y0[1])}_{s}", p,
                    _ce_config(s, 16, x0, y0, 500))
                for x0 in (0.0, 2.0) for y0 in ((0.0, 0.0), (2.0, 2.0)) for s in ("LL_ONLY", "BDA")]
    if name == "counterexample-K":
        p = counter_example()
        return [Run(f"ce-K{K}_{s}", p, _ce_config(s, K, 0.0, (2.0, 2.0), 500))
                for K in (8, 16, 64) for s in ("LL_ONLY", "BDA")]
    if name == "alpha-ablation":
        p = counter_example()
        rules = (("alpha-0", Constant(0.0)), ("alpha-0p5", Constant(0.5)), ("alpha-adap0p9", Reciprocal(0.9)))
        return [Run(f"ce-{tag}_BDA", p, _ce_config("BDA", 16, 0.0, (2.0, 2.0), 500, rule)) for tag, rule in rules]
    if name == "hyperclean-synth":
        data = synth_blobs(100, 5, 2, 0.3, seed=7 if seed is None else seed)
        p = hyper_cleaning_problem(data, 1e-4)
        sched = default_schedule(p, K=100)
        y0, x0 = np.zeros(p.m), np.zeros(p.n)
        variants = (("RHG", "LL_ONLY", None), ("T-RHG", "LL_ONLY", 25), ("BDA", "BDA", None))
        return [Run(f"hc_{tag}", p, SolveConfig(s, sched, y0, x0, 1.0, 200, tau), data)
                for tag, s, tau in variants]
    raise ConfigurationError(f"unknown reproduction {name!r}; choose from {REPRODUCTIONS}")


def _hyperclean_table(runs, traces):
    run0 = runs[0]
    base = run_inner(run0.problem, np.zeros(run0.problem.n), run0.config.y0, run0.config.schedule, "BDA").y_K
    lines = ["run,mean_weight_corrupted,mean_weight_clean,val_accuracy,test_accuracy"]
    for run, tr in zip(runs, traces):
        s = _weight_stats(run, tr)
        lines.append(f"{run.label},{s['mean_weight_corrupted']!r},{s['mean_weight_clean']!r},"
                     f"{s['val_accuracy']!r},{s['test_accuracy']!r}")
    lines.append(f"uniform_weights_x0,0.5,0.5,{accuracy(run0.dataset, base, 'val')!r},"
                 f"{accuracy(run0.dataset, base, 'test')!r}")
    return {"hyperclean_weights.csv": "\n".join(lines) + "\n"}


def cmd_reproduce(name, out=None, seed=None, threads=1, timing=False) -> int:
    try:
        runs = reproduction_runs(name, seed)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    builder = _hyperclean_table if name == "hyperclean-synth" else None
    return _run_and_write(runs, _out_dir(out), threads, timing, extra_builder=builder)


def inject_fault(problem: BilevelProblem, oracle: str, delta: float = 1e-2) -> BilevelProblem:
    """Wrap one oracle so that its first output coordinate is off by ``delta``."""
    orig = getattr(problem, oracle, None)
    if oracle not in problem.__dataclass_fields__ or not callable(orig) or oracle in ("F", "f", "g"):
        raise ConfigurationError(f"cannot inject a fault into {oracle!r}")

    def faulty(*args):
        out = np.array(orig(*args), dtype=float)
        out.flat[0] += delta
        return out

    return problem.replace(**{oracle: faulty})


def checkgrad(problem: BilevelProblem, schedule: Schedule, points: int = 3, Ks=(1, 5, 20), seed: int = 0,
              tol: float = CHECK_TOL) -> list:
    """Rows ``(check, point, value, ok)`` for oracle and hypergradient checks."""
    rng = np.random.default_rng(seed)
    lo = np.maximum(problem.box.lower, -2.0)
    hi = np.minimum(problem.box.upper, 2.0)
    schemes = [Scheme.LL_ONLY, Scheme.BDA] + ([Scheme.PROX_BDA] if problem.has_prox else [])
    rows = []
    for i in range(points):
        x = rng.uniform(lo, hi)
        y = rng.normal(size=problem.m)
        v = rng.normal(size=problem.m)
        h = 1e-5 * (1.0 + np.linalg.norm(np.concatenate([x, y])))
        for report in (verify_first_order(problem, x, y, h, tol), verify_hvp(problem, x, y, v, h, tol)):
            for name, dev, ok in report.rows():
                if ok is not None:
                    rows.append((name, i, dev, ok))
        hx = 1e-5 * (1.0 + np.linalg.norm(x))
        for scheme in schemes:
            for K in Ks:
                sched = schedule.with_K(K)
                rev = reverse_unroll(run_inner(problem, x, y, sched, scheme), problem).grad
                fd = fd_hypergrad(problem, x, y, sched, scheme, hx)
                err = relative_deviation(rev, fd)
                rows.append((f"hypergrad_{scheme.value}_K{K}", i, err, err <= tol))
    return rows


def cmd_checkgrad(config_path, seed=None) -> int:
    try:
        cfg = cfgmod.load(config_path)
        if seed is not None:
            cfg = cfg.replace(seed=seed)
        problem, _ = cfgmod.build_problem(cfg)
        if cfg.fault_inject:
            problem = inject_fault(problem, cfg.fault_inject)
        schedule = cfgmod.make_schedule(cfg, problem)
    except (ConfigurationError, InputError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rows = checkgrad(problem, schedule, cfg.checkgrad_points, cfg.checkgrad_K, cfg.seed)
    except (EvaluationError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"{'check':<24} {'point':>5} {'deviation':>12}  status")
    for name, i, dev, ok in rows:
        print(f"{name:<24} {i:>5} {dev:>12.3e}  {'pass' if ok else 'FAIL'}")
    failed = sorted({name for name, _, _, ok in rows if not ok})
    if failed:
        print("failing checks: " + ", ".join(failed))
        return EXIT_CHECK
    print(f"all {len(rows)} checks passed (tol {CHECK_TOL:g})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bilevel-kit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="output directory (default: $BILEVEL_KIT_OUT or ./runs)")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--threads", type=int, default=1, help="solve independent runs concurrently")
        p.add_argument("--timing", action="store_true", help="record wall-clock ms (breaks byte-identical reruns)")

    p_run = sub.add_parser("run", help="solve every scheme listed in a config file")
    p_run.add_argument("--config", required=True)
    common(p_run)

    p_rep = sub.add_parser("reproduce", help="run a canned experiment")
    p_rep.add_argument("name", help=" | ".join(REPRODUCTIONS))
    common(p_rep)

    p_chk = sub.add_parser("checkgrad", help="finite-difference checks of oracles and hypergradients")
    p_chk.add_argument("--config", required=True)
    p_chk.add_argument("--seed", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args.config, args.out, args.seed, args.threads, args.timing)
        if args.command == "reproduce":
            return cmd_reproduce(args.name, args.out, args.seed, args.threads, args.timing)
        return cmd_checkgrad(args.config, args.seed)
    except BilevelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
