"""Acceptance criteria 1-10, one PASS/FAIL line each.

Run standalone with ``python3 tests/test_acceptance.py`` or through pytest
(the lines are repeated in the terminal summary). Tolerances are fixed here
and never relaxed.
"""

from __future__ import annotations

import io
import math
import time
from dataclasses import dataclass

import numpy as np
import pytest

from bilevel_kit import (
    Constant,
    Reciprocal,
    Schedule,
    Scheme,
    SolveConfig,
    fd_hypergrad,
    final_iterate,
    phi_on_grid,
    relative_error,
    reverse_unroll,
    run_inner,
    solve,
    truncated_reverse,
)
from bilevel_kit.zoo import (
    accuracy,
    counter_example,
    default_schedule,
    hyper_cleaning_problem,
    lasso_ll_problem,
    rhg_minimizer_closed_form,
    sigmoid,
    standard_instances,
    synth_blobs,
)

pytestmark = pytest.mark.acceptance

RESULTS: dict = {}
LINES: list = []


@dataclass
class Outcome:
    ok: bool
    detail: str
    csv: str
    seconds: float


def _rows_csv(header, rows):
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for r in rows:
        buf.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in r) + "\n")
    return buf.getvalue()


def _timed(fn):
    start = time.perf_counter()
    ok, detail, csv = fn()
    return Outcome(ok, detail, csv, time.perf_counter() - start)


# --- criterion 1 -----------------------------------------------------------

def crit1():
    p = counter_example()
    xs = np.linspace(-100.0, 100.0, 2_000_001)
    rows, ok = [], True
    for K in (8, 16, 64):
        phi = phi_on_grid(p, xs, [0.0, 0.0], Schedule(0.7, 0.2, Constant(0.0), K), Scheme.LL_ONLY)
        x_grid = float(xs[np.argmin(phi)])
        closed = rhg_minimizer_closed_form(0.2, K)
        good = abs(x_grid - closed) <= 2e-4 and x_grid <= 0.5 + 1e-9
        ok &= good
        rows.append((K, x_grid, closed, abs(x_grid - closed)))
    detail = "; ".join(f"K={K}: grid {g:.4f} vs closed {c:.6f}" for K, g, c, _ in rows)
    return ok, detail, _rows_csv(["K", "x_grid", "x_closed", "abs_diff"], rows)


# --- criteria 2 and 3 --------------------------------------------------------

def _ce_solve(scheme, K, x0, y0, T):
    cfg = SolveConfig(scheme, Schedule(0.7, 0.2, Reciprocal(0.5), K), y0, [x0], 0.1, T)
    return solve(counter_example(), cfg)


def _ce_clauses(K, x0, y0, T, x_tol):
    bda = _ce_solve("BDA", K, x0, y0, T)
    ll = _ce_solve("LL_ONLY", K, x0, y0, T)
    x_err = abs(float(bda.x_final[0]) - 1.0)
    y_err = float(np.linalg.norm(bda.last.y - 1.0) / math.sqrt(2.0))
    ll_err = abs(float(ll.x_final[0]) - 1.0)
    clauses = {"x": x_err <= x_tol, "y": y_err <= 0.05, "ll": ll_err >= 0.4}
    return clauses, (x_err, y_err, ll_err), bda.to_csv_string() + ll.to_csv_string()


def crit2():
    clauses, (xe, ye, le), csv = _ce_clauses(64, 0.0, (2.0, 2.0), 500, 0.05)
    detail = (f"BDA |x-1|={xe:.4f} [{'ok' if clauses['x'] else 'no'}], "
              f"rel y err={ye:.4f} [{'ok' if clauses['y'] else 'no'}], "
              f"LL_ONLY |x-1|={le:.4f} [{'ok' if clauses['ll'] else 'no'}]")
    return all(clauses.values()), detail, csv


def crit3():
    ok, parts, csv = True, [], ""
    for x0 in (0.0, 2.0):
        for y0 in ((0.0, 0.0), (2.0, 2.0)):
            clauses, (xe, ye, le), c = _ce_clauses(16, x0, y0, 2000, 0.1)
            ok &= all(clauses.values())
            csv += c
            bad = [k for k, v in clauses.items() if not v]
            parts.append(f"x0={x0:g},y0={y0[0]:g}: |x-1|={xe:.3f} y={ye:.3f} LL={le:.3f}"
                         + (f" (fails {','.join(bad)})" if bad else ""))
    return ok, "; ".join(parts), csv


# --- criterion 4 -------------------------------------------------------------

def _hypergrad_suite():
    quads = standard_instances()
    hc = hyper_cleaning_problem(synth_blobs(10, 5, 2, 0.3, seed=7), 1e-4)
    ce = counter_example()
    return [
        (ce, Schedule(0.7, 0.2, Reciprocal(0.5), 1)),
        (quads["rank1_plane"], Schedule.theoretical(quads["rank1_plane"].constants, 1)),
        (quads["rank2_of_4"], Schedule.theoretical(quads["rank2_of_4"].constants, 1)),
        (hc, default_schedule(hc, 1)),
    ]


def _random_point(problem, rng):
    lo = np.maximum(problem.box.lower, -2.0)
    hi = np.minimum(problem.box.upper, 2.0)
    return rng.uniform(lo, hi), rng.normal(size=problem.m)


def crit4():
    rng = np.random.default_rng(2024)
    rows, worst = [], 0.0
    start = time.perf_counter()
    for problem, sched in _hypergrad_suite():
        for i in range(10):
            x, y0 = _random_point(problem, rng)
            for scheme in (Scheme.LL_ONLY, Scheme.BDA):
                for K in (1, 5, 20):
                    s = sched.with_K(K)
                    rev = reverse_unroll(run_inner(problem, x, y0, s, scheme), problem).grad
                    fd = fd_hypergrad(problem, x, y0, s, scheme, h=1e-5 * (1.0 + np.linalg.norm(x)))
                    err = relative_error(rev, fd)
                    worst = max(worst, err)
                    rows.append((problem.name, i, scheme.value, K, err))
    secs = time.perf_counter() - start
    ok = worst <= 1e-4 and secs < 30.0
    return ok, f"{len(rows)} comparisons, worst relative error {worst:.2e}, {secs:.1f} s", \
        _rows_csv(["problem", "point", "scheme", "K", "rel_err"], rows)


# --- criteria 5 and 6 --------------------------------------------------------

X_VALUES = np.linspace(-2.0, 2.0, 5)


def _x_points(problem):
    # 5 fixed points along the diagonal direction of the box
    return [np.full(problem.n, v) for v in X_VALUES]


def crit5():
    slack = 1e-9
    rows, ok, worst = [], True, 0.0
    start = time.perf_counter()
    for name, problem in standard_instances().items():
        c, ref = problem.constants, problem.reference
        base = Schedule.theoretical(c, 1)
        beta = base.alpha_rule.beta
        J = math.floor(2.0 / (1.0 - beta))
        y0 = np.zeros(problem.m)
        for x in _x_points(problem):
            y_star = ref.select(x)
            C = max(np.linalg.norm(y0 - y_star),
                    base.s_u / (1.0 - beta) * np.linalg.norm(problem.grad_y_F(x, y_star)))
            tape = run_inner(problem, x, y0, base.with_K(1000), Scheme.BDA)
            for K in (1, 10, 100, 1000):
                yK = tape.y[K]
                y_tilde = yK - base.s_l * problem.grad_y_f(x, yK)
                lhs = (np.linalg.norm(yK - y_star), np.linalg.norm(yK - y_tilde),
                       problem.f(x, y_tilde) - ref.f_star(x))
                rhs = (C, 2 * C * (J + 2) / (K * (1 - beta)), 2 * C * C * (J + 2) / (K * (1 - beta) * base.s_l))
                good = all(l <= r + slack for l, r in zip(lhs, rhs))
                ok &= good
                worst = max(worst, *(l / r for l, r in zip(lhs, rhs) if r > 0))
                rows.append((name, float(x[0]), K, *map(float, lhs), *map(float, rhs)))
    secs = time.perf_counter() - start
    ok = ok and secs < 30.0
    return ok, f"{len(rows)} (instance, x, K) cases, worst lhs/rhs {worst:.3f}, {secs:.1f} s", _rows_csv(
        ["instance", "x0", "K", "dist", "resid", "gap", "bound_dist", "bound_resid", "bound_gap"], rows)


def crit6():
    slack = 1e-9
    quads = standard_instances()
    rows, ok = [], True
    rng = np.random.default_rng(6)
    for name in ("rank1_plane", "rank2_of_4"):
        problem = quads[name]
        ref = problem.reference
        s_l = 1.0 / problem.constants.L_f
        for x in _x_points(problem):
            for y0 in (np.zeros(problem.m), rng.normal(scale=3.0, size=problem.m)):
                y_star = ref.project_S(x, y0)
                r0 = np.linalg.norm(y0 - y_star)
                for K in (1, 10, 100):
                    yK = final_iterate(problem, x, y0, Schedule(1.0, s_l, Constant(0.0), K), Scheme.LL_ONLY)
                    dist = np.linalg.norm(yK - y_star)
                    gap = problem.f(x, yK) - ref.f_star(x)
                    bound = r0 * r0 / (2.0 * s_l * K)
                    ok &= dist <= r0 + slack and gap <= bound + slack
                    rows.append((name, float(x[0]), K, float(dist), float(r0), float(gap), float(bound)))
    return ok, f"{len(rows)} cases", _rows_csv(["instance", "x0", "K", "dist", "dist0", "gap", "bound"], rows)


# --- criterion 7 -------------------------------------------------------------

def crit7():
    rng = np.random.default_rng(7)
    suite = _hypergrad_suite()
    lasso = lasso_ll_problem([[1.0, 0.5], [0.0, 1.0], [1.0, 1.0]], [[1.0], [0.0], [-1.0]], mu=0.3)
    suite.append((lasso, Schedule(0.5, 0.2, Reciprocal(0.5), 1)))
    rows, ok = [], True
    for problem, sched in suite:
        schemes = [Scheme.LL_ONLY, Scheme.BDA] + ([Scheme.PROX_BDA] if problem.has_prox else [])
        x, y0 = _random_point(problem, rng)
        for scheme in schemes:
            for K in (1, 5, 20, 100):
                tape = run_inner(problem, x, y0, sched.with_K(K), scheme)
                a, b = truncated_reverse(tape, problem, K), reverse_unroll(tape, problem)
                same = np.array_equal(a.grad, b.grad) and a.phi_K == b.phi_K
                ok &= same
                rows.append((problem.name, scheme.value, K, same))
    return ok, f"{len(rows)} tapes compared bitwise", _rows_csv(["problem", "scheme", "K", "equal"], rows)


# --- criterion 8 -------------------------------------------------------------

def _lasso_1d_minimizer(x, mu):
    # argmin_y (y - x)^2 / 2 + mu |y|, solved by cases on the sign of y
    return math.copysign(max(abs(x) - mu, 0.0), x)


def _zero_prox(problem):
    return problem.replace(prox_g=lambda x, z, t: np.array(z, dtype=float, copy=True),
                           prox_g_jac=lambda x, z, t: np.ones_like(z, dtype=float),
                           g=lambda x, y: 0.0)


def crit8():
    rows, ok = [], True
    quads = standard_instances()
    cases = [(counter_example(), Schedule(0.7, 0.2, Reciprocal(0.5), 64), np.array([0.3]))]
    for q in quads.values():
        cases.append((q, Schedule.theoretical(q.constants, 64), np.full(q.n, 0.7)))
    max_dev = 0.0
    for problem, sched, x in cases:
        y0 = np.full(problem.m, 2.0)
        a = run_inner(_zero_prox(problem), x, y0, sched, Scheme.PROX_BDA).y
        b = run_inner(problem, x, y0, sched, Scheme.BDA).y
        dev = float(np.max(np.abs(a - b)))
        max_dev = max(max_dev, dev)
        ok &= dev <= 1e-12
        rows.append((problem.name, "prox_vs_bda", dev))
    lasso = lasso_ll_problem([[1.0]], [[1.0]], mu=1.0)
    sched = Schedule(1.0, 0.5, Constant(0.0), 500)
    max_lasso = 0.0
    for xv in (-3.0, -1.5, -0.4, 0.0, 0.8, 1.0, 2.5):
        x = np.array([xv])
        yK = final_iterate(lasso, x, np.zeros(1), sched, Scheme.PROX_BDA)
        dev = float(abs(yK[0] - _lasso_1d_minimizer(xv, 1.0)))
        max_lasso = max(max_lasso, dev)
        ok &= dev <= 1e-6
        rows.append(("lasso_1d", xv, dev))
    return ok, f"prox(g=0) vs BDA max dev {max_dev:.1e}; 1-D lasso max dev {max_lasso:.1e}", \
        _rows_csv(["case", "param", "deviation"], rows)


# --- criterion 9 -------------------------------------------------------------

def crit9():
    start = time.perf_counter()
    data = synth_blobs(100, 5, 2, 0.3, seed=7)
    problem = hyper_cleaning_problem(data, 1e-4)
    sched = default_schedule(problem, K=100)
    x0, y0 = np.zeros(problem.n), np.zeros(problem.m)
    base_acc = accuracy(data, final_iterate(problem, x0, y0, sched, Scheme.BDA), "val")
    mask = data.corruption_mask[data.rows("train")]
    ok, parts, csv = True, [f"baseline val acc {base_acc:.3f}"], ""
    for tau in (25, None):
        trace = solve(problem, SolveConfig("BDA", sched, y0, x0, 1.0, 200, tau))
        w = sigmoid(trace.x_final)
        gap = float(w[~mask].mean() - w[mask].mean())
        acc = accuracy(data, trace.last.y, "val")
        good = gap >= 0.1 and acc - base_acc >= 0.02
        ok &= good
        parts.append(f"{'tau=25' if tau else 'full'}: weight gap {gap:.3f}, val acc {acc:.3f}")
        csv += trace.to_csv_string()
    secs = time.perf_counter() - start
    ok = ok and secs < 60.0
    return ok, "; ".join(parts) + f", {secs:.1f} s", csv


CRITERIA = {
    1: ("counter-example closed form", crit1, 5.0),
    2: ("BDA solves the counter-example", crit2, 10.0),
    3: ("initialization robustness", crit3, None),
    4: ("hypergradient oracle", crit4, 30.0),
    5: ("first bound suite", crit5, 30.0),
    6: ("gradient-descent rate suite", crit6, None),
    7: ("truncation equals full reverse", crit7, None),
    8: ("nonsmooth degeneration", crit8, None),
    9: ("hyper-cleaning at desk scale", crit9, 60.0),
}


def evaluate(n: int) -> Outcome:
    if n not in RESULTS:
        title, fn, budget = CRITERIA[n]
        out = _timed(fn)
        if budget is not None and out.seconds >= budget:
            out = Outcome(False, out.detail + f" (runtime {out.seconds:.1f} s over {budget:g} s)", out.csv, out.seconds)
        RESULTS[n] = out
        _report(n, title, out)
    return RESULTS[n]


def _report(n, title, out):
    line = f"{'PASS' if out.ok else 'FAIL'} criterion {n} ({title}): {out.detail} [{out.seconds:.1f} s]"
    LINES.append(line)
    print(line)


def crit10():
    diffs = []
    for n in CRITERIA:
        first = evaluate(n).csv
        again = CRITERIA[n][1]()[2]
        if first != again:
            diffs.append(n)
    detail = "all trace CSVs byte-identical" if not diffs else f"CSV differs for criteria {diffs}"
    return not diffs, detail, ""


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n):
    ok, detail = evaluate(n).ok, evaluate(n).detail
    assert ok, detail


def test_criterion_10_determinism():
    out = _timed(crit10)
    RESULTS[10] = out
    _report(10, "determinism", out)
    ok, detail = out.ok, out.detail
    assert ok, detail


if __name__ == "__main__":
    for n in CRITERIA:
        evaluate(n)
    out = _timed(crit10)
    _report(10, "determinism", out)
