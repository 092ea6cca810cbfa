"""Problem abstraction consumed by every solver, plus derivative-oracle checks.

A :class:`BilevelProblem` bundles the upper-level objective ``F(x, y)``, the
lower-level objective ``f(x, y)`` (optionally plus a nonsmooth ``g`` handled
through its proximal map), their gradients and Hessian-vector products, the
box constraint on ``x`` and an optional reference solution used for metrics.

All oracles take and return float64 numpy arrays and must be pure.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import EvaluationError, InputError, ParameterError

Oracle = Callable[..., np.ndarray]


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BoxSet:
    """Axis-aligned box ``{x : lower <= x <= upper}`` with finite bounds."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _frozen(np.atleast_1d(self.lower))
        hi = _frozen(np.atleast_1d(self.upper))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise InputError(f"box bounds must be matching vectors, got {lo.shape} and {hi.shape}")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ParameterError("box bounds must be finite")
        if np.any(lo > hi):
            raise ParameterError("box requires lower <= upper coordinate-wise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def uniform(cls, n: int, lo: float, hi: float) -> "BoxSet":
        return cls(np.full(n, lo, dtype=float), np.full(n, hi, dtype=float))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def contains(self, x, atol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - atol) and np.all(x <= self.upper + atol))


@dataclass(frozen=True)
class ProblemConstants:
    """Smoothness/convexity constants; ``None`` means unknown."""

    L_F: Optional[float] = None
    sigma: Optional[float] = None
    L_f: Optional[float] = None
    L_0: Optional[float] = None

    def __post_init__(self):
        for name in ("L_F", "sigma", "L_f", "L_0"):
            v = getattr(self, name)
            if v is not None and not v >= 0:
                raise ParameterError(f"{name} must be >= 0, got {v}")
        if self.sigma is not None and self.L_F is not None and self.sigma > self.L_F * (1 + 1e-12):
            raise ParameterError(f"sigma={self.sigma} exceeds L_F={self.L_F}")


@dataclass(frozen=True)
class Reference:
    """Known solution data. Solvers never read this; only metrics do.

    ``f_star(x)`` is the lower-level optimal value, ``project_S(x, y)`` the
    Euclidean projection of ``y`` onto the lower-level solution set and
    ``select(x)`` the point of that set minimizing ``F(x, .)``.
    """

    x_star: Optional[np.ndarray] = None
    y_star: Optional[np.ndarray] = None
    F_star: Optional[float] = None
    f_star: Optional[Callable[[np.ndarray], float]] = None
    project_S: Optional[Oracle] = None
    select: Optional[Callable[[np.ndarray], np.ndarray]] = None


@dataclass(frozen=True)
class BilevelProblem:
    """Oracle bundle for ``min_{x in box} F(x, y)  s.t.  y in argmin_y f(x, y) [+ g(x, y)]``.

    ``hvp_xy_*(x, y, v)`` returns ``d/dx <grad_y *(x, y), v>`` (an n-vector).
    ``prox_g(x, z, t)`` is the proximal map of ``t * g(x, .)`` at ``z`` and
    ``prox_g_jac(x, z, t)`` its almost-everywhere diagonal derivative in ``z``.
    When ``batched`` is true the oracles broadcast over leading axes of
    ``x`` and ``y`` (used for grid evaluation of the unrolled objective).
    """

    n: int
    m: int
    box: BoxSet
    F: Callable[[np.ndarray, np.ndarray], float]
    f: Callable[[np.ndarray, np.ndarray], float]
    grad_y_F: Oracle
    grad_x_F: Oracle
    grad_y_f: Oracle
    grad_x_f: Oracle
    hvp_yy_F: Optional[Oracle] = None
    hvp_xy_F: Optional[Oracle] = None
    hvp_yy_f: Optional[Oracle] = None
    hvp_xy_f: Optional[Oracle] = None
    constants: ProblemConstants = field(default_factory=ProblemConstants)
    prox_g: Optional[Oracle] = None
    prox_g_jac: Optional[Oracle] = None
    g: Optional[Callable[[np.ndarray, np.ndarray], float]] = None
    reference: Optional[Reference] = None
    name: str = "problem"
    batched: bool = False

    def __post_init__(self):
        if self.box.dim != self.n:
            raise InputError(f"box has dimension {self.box.dim}, problem has n={self.n}")

    @property
    def has_prox(self) -> bool:
        return self.prox_g is not None

    def h(self, x, y) -> float:
        """Lower-level objective actually minimized: ``f`` or ``f + g``."""
        val = self.f(x, y)
        if self.g is not None:
            val = val + self.g(x, y)
        return val

    def replace(self, **changes) -> "BilevelProblem":
        return dataclasses.replace(self, **changes)


def project_box(x, box: BoxSet) -> np.ndarray:
    """Clamp ``x`` coordinate-wise into ``box``."""
    x = np.asarray(x, dtype=float)
    if x.shape != box.lower.shape:
        raise InputError(f"x has shape {x.shape}, box expects {box.lower.shape}")
    return np.clip(x, box.lower, box.upper)


def central_difference(fun, z, h):
    """Central finite-difference Jacobian of ``fun`` at ``z``, one column per coordinate.

    ``fun`` may return a scalar or a vector; the result has shape
    ``out_shape + z.shape``.
    """
    z = np.asarray(z, dtype=float)
    cols = []
    for i in range(z.size):
        e = np.zeros_like(z)
        e.flat[i] = h
        plus = np.asarray(fun(z + e), dtype=float)
        minus = np.asarray(fun(z - e), dtype=float)
        if not (np.all(np.isfinite(plus)) and np.all(np.isfinite(minus))):
            raise EvaluationError(f"non-finite value near coordinate {i} during finite differencing")
        cols.append((plus - minus) / (2.0 * h))
    return np.stack(cols, axis=-1)


def relative_deviation(analytic, reference) -> float:
    """``max|a - r| / max(max|r|, 1)``: relative for large values, absolute near zero."""
    a = np.asarray(analytic, dtype=float)
    r = np.asarray(reference, dtype=float)
    if a.shape != r.shape:
        raise InputError(f"oracle returned shape {a.shape}, expected {r.shape}")
    if not np.all(np.isfinite(a)):
        return float("inf")
    scale = max(float(np.max(np.abs(r), initial=0.0)), 1.0)
    return float(np.max(np.abs(a - r), initial=0.0) / scale)


@dataclass
class OracleReport:
    """Per-oracle deviation from finite differences."""

    deviations: dict
    tol: float
    missing: tuple = ()

    @property
    def failed(self) -> tuple:
        return tuple(k for k, v in self.deviations.items() if not v <= self.tol)

    @property
    def ok(self) -> bool:
        return not self.failed

    def rows(self):
        for name, dev in self.deviations.items():
            yield name, dev, dev <= self.tol
        for name in self.missing:
            yield name, float("nan"), None

    def __str__(self):
        lines = []
        for name, dev, ok in self.rows():
            status = "missing" if ok is None else ("pass" if ok else "FAIL")
            lines.append(f"{name:<12} {dev:12.3e}  {status}")
        return "\n".join(lines)


def _check_point(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InputError("verification point must be finite")
    return x, y


def verify_first_order(problem: BilevelProblem, x, y, h: float = 1e-5, tol: float = 1e-4) -> OracleReport:
    """Compare the four gradient oracles against central differences of ``F`` and ``f``."""
    if not h > 0:
        raise ParameterError("finite-difference step must be positive")
    x, y = _check_point(x, y)
    devs = {}
    for obj, gy, gx in (
        ("F", problem.grad_y_F, problem.grad_x_F),
        ("f", problem.grad_y_f, problem.grad_x_f),
    ):
        fun = getattr(problem, obj)
        fd_y = central_difference(lambda yy: fun(x, yy), y, h)
        fd_x = central_difference(lambda xx: fun(xx, y), x, h)
        devs[f"grad_y_{obj}"] = relative_deviation(gy(x, y), fd_y)
        devs[f"grad_x_{obj}"] = relative_deviation(gx(x, y), fd_x)
    return OracleReport(devs, tol)


def verify_hvp(problem: BilevelProblem, x, y, v, h: float = 1e-5, tol: float = 1e-4) -> OracleReport:
    """Compare Hessian-vector oracles with central differences of the gradients along ``v``.

    ``hvp_yy_*`` is checked against ``d/dt grad_y *(x, y + t v)`` and
    ``hvp_xy_*`` against ``d/dt grad_x *(x, y + t v)`` (mixed partials commute).
    """
    if not h > 0:
        raise ParameterError("finite-difference step must be positive")
    x, y = _check_point(x, y)
    v = np.asarray(v, dtype=float)
    devs, missing = {}, []
    for obj in ("F", "f"):
        gy = getattr(problem, f"grad_y_{obj}")
        gx = getattr(problem, f"grad_x_{obj}")
        for kind, grad in (("yy", gy), ("xy", gx)):
            name = f"hvp_{kind}_{obj}"
            oracle = getattr(problem, name)
            if oracle is None:
                missing.append(name)
                continue
            fd = central_difference(lambda t: grad(x, y + t[0] * v), np.zeros(1), h)[..., 0]
            devs[name] = relative_deviation(oracle(x, y, v), fd)
    return OracleReport(devs, tol, tuple(missing))
