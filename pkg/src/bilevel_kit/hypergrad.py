"""Hypergradients of ``phi_K(x) = F(x, y_K(x))`` by reverse-mode differentiation.

The adjoint recursion walks a recorded :class:`~bilevel_kit.inner.InnerTape`
backwards. With ``lam = grad_y F(x, y_K)`` and ``g = grad_x F(x, y_K)``, each
reverse step adds ``(dT/dx)^T lam`` to ``g`` and replaces ``lam`` by
``(dT/dy)^T lam``, using only the Hessian-vector oracles of the problem.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, EvaluationError, InputError, ParameterError
from .inner import InnerTape, Scheme, Schedule, run_inner
from .problem import BilevelProblem


@dataclass(frozen=True)
class HypergradResult:
    grad: np.ndarray
    phi_K: float
    truncation: int
    adjoint_norms: tuple


def _require(problem, names):
    missing = [n for n in names if getattr(problem, n) is None]
    if missing:
        raise ConfigurationError(f"problem {problem.name!r} lacks oracles needed for reverse mode: {missing}")


def _check_tape(tape: InnerTape, problem: BilevelProblem):
    if tape.x.shape != (problem.n,) or tape.y.shape[1:] != (problem.m,):
        raise InputError("tape dimensions do not match the problem")
    if tape.problem_name and tape.problem_name != problem.name:
        raise InputError(f"tape was recorded on {tape.problem_name!r}, not {problem.name!r}")
    needed = ["hvp_yy_f", "hvp_xy_f"]
    if np.any(tape.alphas != 0):
        needed += ["hvp_yy_F", "hvp_xy_F"]
    if tape.scheme is Scheme.PROX_BDA:
        needed += ["prox_g_jac"]
    _require(problem, needed)


def _reverse_step(problem: BilevelProblem, tape: InnerTape, k: int, lam: np.ndarray):
    """Return ``((dT/dx)^T lam, (dT/dy)^T lam)`` for the step ``y_k -> y_{k+1}``."""
    x, yk = tape.x, tape.y[k]
    s_u, s_l = tape.schedule.s_u, tape.schedule.s_l
    a = float(tape.alphas[k])
    wu = a * s_u
    gx = np.zeros(problem.n)
    if tape.scheme is Scheme.PROX_BDA:
        z = yk - s_l * problem.grad_y_f(x, yk)
        dl = problem.prox_g_jac(x, z, s_l) * lam
        new = (1.0 - a) * (dl - s_l * problem.hvp_yy_f(x, yk, dl))
        gx = gx - (1.0 - a) * s_l * problem.hvp_xy_f(x, yk, dl)
        if a != 0.0:
            new = new + a * lam - wu * problem.hvp_yy_F(x, yk, lam)
            gx = gx - wu * problem.hvp_xy_F(x, yk, lam)
        return gx, new
    new = lam
    if a != 0.0:
        new = new - wu * problem.hvp_yy_F(x, yk, lam)
        gx = gx - wu * problem.hvp_xy_F(x, yk, lam)
    wl = (1.0 - a) * s_l
    if wl != 0.0:
        new = new - wl * problem.hvp_yy_f(x, yk, lam)
        gx = gx - wl * problem.hvp_xy_f(x, yk, lam)
    return gx, new


def truncated_reverse(tape: InnerTape, problem: BilevelProblem, tau: int) -> HypergradResult:
    """Reverse pass over the last ``tau`` inner steps only; ``tau = K`` is the full hypergradient."""
    if int(tau) != tau or not 0 <= tau <= tape.K:
        raise InputError(f"truncation must satisfy 0 <= tau <= K={tape.K}, got {tau}")
    _check_tape(tape, problem)
    x, yK = tape.x, tape.y_K
    lam = np.asarray(problem.grad_y_F(x, yK), dtype=float)
    g = np.array(problem.grad_x_F(x, yK), dtype=float)
    norms = []
    for k in range(tape.K - 1, tape.K - 1 - int(tau), -1):
        gx, lam = _reverse_step(problem, tape, k, lam)
        g = g + gx
        norms.append(float(np.linalg.norm(lam)))
    if not np.all(np.isfinite(g)):
        raise EvaluationError("non-finite hypergradient")
    g.setflags(write=False)
    return HypergradResult(g, float(problem.F(x, yK)), int(tau), tuple(norms))


def reverse_unroll(tape: InnerTape, problem: BilevelProblem) -> HypergradResult:
    return truncated_reverse(tape, problem, tape.K)


def fd_hypergrad(problem: BilevelProblem, x, y0, schedule: Schedule, scheme=Scheme.BDA,
                 h: float = 1e-5, max_workers: int | None = None) -> np.ndarray:
    """Central differences of ``x -> F(x, y_K(x))``; two fresh unrolls per coordinate."""
    if not h > 0:
        raise ParameterError("finite-difference step must be positive")
    x = np.asarray(x, dtype=float)

    def phi(xp):
        tape = run_inner(problem, xp, y0, schedule, scheme)
        val = problem.F(xp, tape.y_K)
        if not np.isfinite(val):
            raise EvaluationError("non-finite phi_K at a perturbed point")
        return val

    points = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        points += [x + e, x - e]
    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers) as pool:
            vals = list(pool.map(phi, points))
    else:
        vals = [phi(p) for p in points]
    vals = np.array(vals).reshape(x.size, 2)
    return (vals[:, 0] - vals[:, 1]) / (2.0 * h)


def relative_error(a, b) -> float:
    """``||a - b|| / max(||a||, ||b||)``, 0 when both vanish."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)
