"""Projected hypergradient descent on the upper-level variable, traces and metrics."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigurationError, EvaluationError, InputError, ParameterError
from .hypergrad import reverse_unroll, truncated_reverse
from .inner import Constant, Reciprocal, Schedule, Scheme, Theoretical, final_iterate, run_inner
from .problem import BilevelProblem, project_box


@dataclass(frozen=True)
class SolveConfig:
    scheme: Scheme
    schedule: Schedule
    y0: np.ndarray
    x0: np.ndarray
    s_x: float = 0.1
    T: int = 100
    truncation: Optional[int] = None  # None means full reverse pass
    warm_start: bool = False
    stop_tol: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        object.__setattr__(self, "y0", np.array(self.y0, dtype=float).ravel())
        object.__setattr__(self, "x0", np.array(self.x0, dtype=float).ravel())
        if not self.s_x > 0:
            raise ParameterError("outer step s_x must be positive")
        if int(self.T) != self.T or self.T < 1:
            raise ParameterError("T must be a positive integer")
        if self.truncation is not None and not 0 <= self.truncation <= self.schedule.K:
            raise ParameterError(f"truncation must lie in [0, K={self.schedule.K}]")
        if self.stop_tol < 0:
            raise ParameterError("stop_tol must be non-negative")

    def to_dict(self) -> dict:
        rule = self.schedule.alpha_rule
        return {
            "scheme": self.scheme.value,
            "s_u": self.schedule.s_u,
            "s_l": self.schedule.s_l,
            "K": self.schedule.K,
            "alpha_rule": type(rule).__name__.lower(),
            "alpha_params": {k: getattr(rule, k) for k in rule.__dataclass_fields__},
            "y0": self.y0.tolist(),
            "x0": self.x0.tolist(),
            "s_x": self.s_x,
            "T": self.T,
            "truncation": "full" if self.truncation is None else self.truncation,
            "warm_start": self.warm_start,
            "stop_tol": self.stop_tol,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class TraceRow:
    t: int
    x: np.ndarray
    y: np.ndarray
    phi: float
    f: float
    gnorm: float
    ms: float


@dataclass
class RunTrace:
    rows: list
    x_final: np.ndarray
    config: SolveConfig
    problem_name: str
    metrics: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.rows)

    @property
    def last(self) -> TraceRow:
        return self.rows[-1]

    def column(self, name: str) -> np.ndarray:
        if name in self.metrics:
            return np.asarray(self.metrics[name])
        return np.array([getattr(r, name) for r in self.rows])

    def header(self) -> list:
        n = self.rows[0].x.size if self.rows else self.x_final.size
        return ["t"] + [f"x_{i}" for i in range(n)] + ["phiK", "f", "gnorm", "ms"] + list(self.metrics)

    def table(self, timing: bool = False) -> list:
        """Rows as lists matching :meth:`header`; ``ms`` is blank unless ``timing``."""
        out = []
        for i, r in enumerate(self.rows):
            row = [r.t, *r.x.tolist(), r.phi, r.f, r.gnorm, r.ms if timing else None]
            row += [self.metrics[k][i] for k in self.metrics]
            out.append(row)
        return out

    def to_csv_string(self, timing: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header())
        for row in self.table(timing):
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, float) else v) for v in row])
        return buf.getvalue()

    def to_json_string(self, timing: bool = False, extra: Optional[dict] = None) -> str:
        doc = {
            "problem": self.problem_name,
            "config": self.config.to_dict(),
            "columns": self.header(),
            "rows": self.table(timing),
            "x_final": self.x_final.tolist(),
            "y_final": self.last.y.tolist(),
        }
        if extra:
            doc.update(extra)
        return json.dumps(doc, indent=1, allow_nan=True) + "\n"

    def write_csv(self, path, timing: bool = False) -> Path:
        return atomic_write(path, self.to_csv_string(timing))

    def write_json(self, path, timing: bool = False, extra: Optional[dict] = None) -> Path:
        return atomic_write(path, self.to_json_string(timing, extra))


def atomic_write(path, text: str) -> Path:
    """Write via a temp file in the same directory and rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def solve(problem: BilevelProblem, config: SolveConfig) -> RunTrace:
    """Projected gradient descent ``x <- proj(x - s_x * dphi_K/dx)`` for ``T`` outer iterations."""
    if config.x0.shape != (problem.n,) or config.y0.shape != (problem.m,):
        raise InputError(f"x0/y0 must have shapes ({problem.n},)/({problem.m},)")
    x = project_box(config.x0, problem.box)
    y_init = config.y0
    rows = []
    for t in range(config.T):
        start = time.perf_counter()
        try:
            # non-finite values are detected explicitly and raised as EvaluationError
            with np.errstate(over="ignore", invalid="ignore"):
                tape = run_inner(problem, x, y_init, config.schedule, config.scheme)
                if config.truncation is None:
                    hg = reverse_unroll(tape, problem)
                else:
                    hg = truncated_reverse(tape, problem, config.truncation)
                f_val = float(problem.h(x, tape.y_K))
        except EvaluationError as exc:
            raise EvaluationError(str(exc), t=t) from exc
        if not (np.isfinite(hg.phi_K) and np.isfinite(f_val)):
            raise EvaluationError("non-finite objective value", t=t)
        x_next = project_box(x - config.s_x * hg.grad, problem.box)
        ms = (time.perf_counter() - start) * 1e3
        rows.append(TraceRow(t, x, tape.y_K, hg.phi_K, f_val, float(np.linalg.norm(hg.grad)), ms))
        if config.warm_start:
            y_init = tape.y_K
        step = float(np.linalg.norm(x_next - x))
        x = x_next
        if config.stop_tol > 0 and step <= config.stop_tol:
            break
    return RunTrace(rows, x, config, problem.name)


def _rel_sq(diff, ref):
    den = float(ref @ ref)
    num = float(diff @ diff)
    return num / den if den > 0 else num


def metrics(trace: RunTrace, problem: BilevelProblem) -> RunTrace:
    """Attach ``|F - F*|``, ``|f - f*(x)|`` and squared relative distances to ``x*``, ``y*``.

    When ``||x*|| = 0`` (or ``||y*|| = 0``) the squared error is reported
    unnormalized and the column is named ``*_abssq`` instead of ``*_relsq``.
    """
    ref = problem.reference
    if ref is None or ref.x_star is None or ref.y_star is None or ref.F_star is None or ref.f_star is None:
        raise ConfigurationError(f"problem {problem.name!r} carries no complete reference solution")
    xs, ys = np.asarray(ref.x_star, dtype=float), np.asarray(ref.y_star, dtype=float)
    x_col = "x_relsq" if xs @ xs > 0 else "x_abssq"
    y_col = "y_relsq" if ys @ ys > 0 else "y_abssq"
    cols = {"F_gap": [], "f_gap": [], x_col: [], y_col: []}
    for r in trace.rows:
        cols["F_gap"].append(abs(r.phi - ref.F_star))
        cols["f_gap"].append(abs(r.f - ref.f_star(r.x)))
        cols[x_col].append(_rel_sq(r.x - xs, xs))
        cols[y_col].append(_rel_sq(r.y - ys, ys))
    return replace(trace, metrics={**trace.metrics, **cols})


def dist_to_solution_set(problem: BilevelProblem, x, y) -> float:
    ref = problem.reference
    if ref is None or ref.project_S is None:
        raise ConfigurationError(f"problem {problem.name!r} has no solution-set projector")
    y = np.asarray(y, dtype=float)
    return float(np.linalg.norm(y - ref.project_S(np.asarray(x, dtype=float), y)))


def phi_on_grid(problem: BilevelProblem, xs, y0, schedule: Schedule, scheme=Scheme.LL_ONLY,
                chunk: int = 1 << 20) -> np.ndarray:
    """``phi_K(x) = F(x, y_K(x))`` for every scalar ``x`` in ``xs`` (1-D problems, batched oracles)."""
    if problem.n != 1 or not problem.batched:
        raise ConfigurationError("grid evaluation needs a 1-D problem with batched oracles")
    xs = np.asarray(xs, dtype=float).ravel()
    y0 = np.asarray(y0, dtype=float)
    out = np.empty(xs.size)
    for lo in range(0, xs.size, chunk):
        X = xs[lo:lo + chunk, None]
        Y = np.broadcast_to(y0, (X.shape[0], problem.m))
        yK = final_iterate(problem, X, Y, schedule, scheme)
        out[lo:lo + chunk] = problem.F(X, yK)
    return out


def alpha_rule_from(name: str, **params):
    """Build an alpha rule from its lowercase name and keyword parameters."""
    rules = {"theoretical": Theoretical, "reciprocal": Reciprocal, "constant": Constant}
    try:
        return rules[name](**params)
    except KeyError:
        raise ConfigurationError(f"unknown alpha rule {name!r}") from None
