"""Inner (lower-level) update maps, aggregation schedules and the replayable tape.

Three update maps are provided for a frozen upper-level variable ``x``:

* ``ll_step``       plain gradient descent on the lower-level objective,
* ``bda_step``      descent-aggregation step mixing the upper-level direction
                    ``s_u * grad_y F`` and the lower-level direction
                    ``s_l * grad_y f`` with weight ``alpha_k``,
* ``prox_bda_step`` the same aggregation with the lower-level direction
                    replaced by a proximal-gradient residual for ``f + g``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

import numpy as np

from .errors import ConfigurationError, EvaluationError, InputError, ParameterError
from .kernels import soft_threshold as _soft_threshold
from .problem import BilevelProblem, ProblemConstants

# Schedules refuse beta this close to 1: 2*gamma/(k*(1-beta)) blows up.
BETA_MAX = 1.0 - 1e-9
# Reciprocal rule keeps alpha strictly below 1.
ALPHA_CAP = 1.0 - 1e-6


class Scheme(str, Enum):
    LL_ONLY = "LL_ONLY"
    BDA = "BDA"
    PROX_BDA = "PROX_BDA"

    @classmethod
    def parse(cls, value) -> "Scheme":
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper().replace("-", "_")
        aliases = {"RHG": "LL_ONLY", "LL": "LL_ONLY", "PROX": "PROX_BDA"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise InputError(f"unknown scheme {value!r}") from None


@dataclass(frozen=True)
class Theoretical:
    """``alpha_k = min{2 gamma / (k (1 - beta)), 1 - eps}``."""

    gamma: float
    eps: float
    beta: float

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ParameterError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not 0 < self.eps < 1:
            raise ParameterError(f"eps must lie in (0, 1), got {self.eps}")
        if not 0 <= self.beta < BETA_MAX:
            raise ParameterError(f"beta must lie in [0, 1 - 1e-9), got {self.beta}")


@dataclass(frozen=True)
class Reciprocal:
    """``alpha_k = min{c / k, 1 - 1e-6}``."""

    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ParameterError(f"reciprocal rule needs c > 0, got {self.c}")


@dataclass(frozen=True)
class Constant:
    """``alpha_k = a`` for every k; ``a = 0`` is plain lower-level descent."""

    a: float

    def __post_init__(self):
        if not 0 <= self.a <= 1:
            raise ParameterError(f"constant alpha must lie in [0, 1], got {self.a}")


AlphaRule = Union[Theoretical, Reciprocal, Constant]


def beta_of(s_u: float, sigma: float, L_F: float) -> float:
    """``sqrt(1 - 2 s_u sigma L_F / (sigma + L_F))``, the contraction factor of the UL step."""
    if not (s_u > 0 and sigma > 0 and L_F >= sigma):
        raise ParameterError(f"beta_of needs s_u > 0, sigma > 0, L_F >= sigma (got {s_u}, {sigma}, {L_F})")
    radicand = 1.0 - 2.0 * s_u * sigma * L_F / (sigma + L_F)
    if radicand < -1e-12:
        raise ParameterError(f"s_u={s_u} too large for sigma={sigma}, L_F={L_F}: radicand {radicand}")
    beta = math.sqrt(max(radicand, 0.0))
    if beta >= 1.0:
        raise ParameterError(f"beta={beta} is not below 1")
    return beta


def alpha_at(k: int, rule: AlphaRule) -> float:
    """Aggregation weight for inner step ``k`` (1-based)."""
    if k < 1:
        raise InputError(f"alpha index starts at 1, got {k}")
    if isinstance(rule, Theoretical):
        if rule.beta >= 1:
            raise ParameterError("theoretical rule requires beta < 1")
        return min(2.0 * rule.gamma / (k * (1.0 - rule.beta)), 1.0 - rule.eps)
    if isinstance(rule, Reciprocal):
        return min(rule.c / k, ALPHA_CAP)
    if isinstance(rule, Constant):
        return float(rule.a)
    raise InputError(f"unknown alpha rule {rule!r}")


@dataclass(frozen=True)
class Schedule:
    s_u: float
    s_l: float
    alpha_rule: AlphaRule
    K: int

    def __post_init__(self):
        if not (self.s_u > 0 and self.s_l > 0):
            raise ParameterError("step sizes s_u and s_l must be positive")
        if int(self.K) != self.K or self.K < 0:
            raise ParameterError(f"K must be a non-negative integer, got {self.K}")

    def alphas(self) -> np.ndarray:
        return np.array([alpha_at(k, self.alpha_rule) for k in range(1, self.K + 1)], dtype=float)

    def with_K(self, K: int) -> "Schedule":
        return Schedule(self.s_u, self.s_l, self.alpha_rule, K)

    @classmethod
    def theoretical(cls, constants: ProblemConstants, K: int, gamma: float = 1.0, eps: float = 0.1,
                    s_u: float | None = None, s_l: float | None = None) -> "Schedule":
        """Largest admissible steps ``s_l = 1/L_f``, ``s_u = 2/(L_F + sigma)`` unless given.

        Unknown constants are allowed only when the caller supplies the step
        (and, for ``beta``, both ``sigma`` and ``L_F`` must be known).
        """
        c = constants
        if s_l is None:
            if not c.L_f:
                raise ParameterError("L_f unknown or zero: pass s_l explicitly")
            s_l = 1.0 / c.L_f
        if c.sigma is None or c.L_F is None:
            raise ParameterError("theoretical schedule needs sigma and L_F to compute beta")
        if s_u is None:
            s_u = 2.0 / (c.L_F + c.sigma)
        beta = beta_of(s_u, c.sigma, c.L_F)
        return cls(s_u, s_l, Theoretical(gamma, eps, beta), K)


def _finite(v, what):
    if not np.all(np.isfinite(v)):
        raise EvaluationError(f"non-finite {what}")
    return v


def ll_step(problem: BilevelProblem, x, y_k, s_l: float) -> np.ndarray:
    if not s_l > 0:
        raise ParameterError("s_l must be positive")
    gf = _finite(problem.grad_y_f(x, y_k), "grad_y_f")
    return y_k - s_l * gf


def bda_step(problem: BilevelProblem, x, y_k, s_u: float, s_l: float, alpha_k: float) -> np.ndarray:
    if not 0 <= alpha_k <= 1:
        raise ParameterError(f"alpha_k must lie in [0, 1], got {alpha_k}")
    gF = _finite(problem.grad_y_F(x, y_k), "grad_y_F")
    gf = _finite(problem.grad_y_f(x, y_k), "grad_y_f")
    return y_k - (alpha_k * s_u * gF + (1.0 - alpha_k) * s_l * gf)


def soft_threshold(z, t: float) -> np.ndarray:
    """Proximal map of ``t * ||.||_1``: ``sign(z) * max(|z| - t, 0)``."""
    if t < 0:
        raise ParameterError("threshold must be non-negative")
    return _soft_threshold(z, float(t))


def prox_bda_step(problem: BilevelProblem, x, y_k, s_u: float, s_l: float, alpha_k: float) -> np.ndarray:
    """Aggregated step with the proximal residual ``y - prox_{s_l g}(y - s_l grad_y f)``.

    The weight ``alpha_k`` multiplies the upper-level direction, as in ``bda_step``.
    """
    if problem.prox_g is None:
        raise ConfigurationError(f"problem {problem.name!r} declares no prox_g")
    if not 0 <= alpha_k <= 1:
        raise ParameterError(f"alpha_k must lie in [0, 1], got {alpha_k}")
    gF = _finite(problem.grad_y_F(x, y_k), "grad_y_F")
    gf = _finite(problem.grad_y_f(x, y_k), "grad_y_f")
    d_h = y_k - _finite(problem.prox_g(x, y_k - s_l * gf, s_l), "prox_g")
    return y_k - (alpha_k * s_u * gF + (1.0 - alpha_k) * d_h)


def apply_step(problem, scheme: Scheme, x, y_k, s_u, s_l, alpha_k):
    if scheme is Scheme.LL_ONLY:
        return ll_step(problem, x, y_k, s_l)
    if scheme is Scheme.BDA:
        return bda_step(problem, x, y_k, s_u, s_l, alpha_k)
    return prox_bda_step(problem, x, y_k, s_u, s_l, alpha_k)


@dataclass(frozen=True)
class InnerTape:
    """Recorded unroll ``y_0 .. y_K`` at a frozen ``x``; ``alphas[k]`` drove step ``y_k -> y_{k+1}``."""

    x: np.ndarray
    y: np.ndarray
    alphas: np.ndarray
    scheme: Scheme
    schedule: Schedule
    problem_name: str = field(default="")

    @property
    def K(self) -> int:
        return self.alphas.shape[0]

    @property
    def y_K(self) -> np.ndarray:
        return self.y[-1]

    def replay(self, problem: BilevelProblem) -> np.ndarray:
        """Recompute ``y_1 .. y_K`` from ``y_0`` with the recorded scheme and weights."""
        s = self.schedule
        out = [self.y[0]]
        for k in range(self.K):
            out.append(apply_step(problem, self.scheme, self.x, out[-1], s.s_u, s.s_l, self.alphas[k]))
        return np.array(out)


def _alphas_for(schedule: Schedule, scheme: Scheme) -> np.ndarray:
    if scheme is Scheme.LL_ONLY:
        return np.zeros(schedule.K)
    return schedule.alphas()


def run_inner(problem: BilevelProblem, x, y0, schedule: Schedule, scheme=Scheme.BDA) -> InnerTape:
    """Unroll ``K`` inner steps from ``y0`` at fixed ``x`` and record every iterate."""
    scheme = Scheme.parse(scheme)
    x = np.asarray(x, dtype=float)
    y = np.array(y0, dtype=float)
    if x.shape != (problem.n,) or y.shape != (problem.m,):
        raise InputError(f"expected x of shape ({problem.n},) and y0 of shape ({problem.m},)")
    alphas = _alphas_for(schedule, scheme)
    ys = np.empty((schedule.K + 1, problem.m))
    ys[0] = y
    for k in range(schedule.K):
        y = apply_step(problem, scheme, x, y, schedule.s_u, schedule.s_l, alphas[k])
        ys[k + 1] = y
    x = x.copy()
    for a in (x, ys, alphas):
        a.setflags(write=False)
    return InnerTape(x, ys, alphas, scheme, schedule, problem.name)


def final_iterate(problem: BilevelProblem, x, y0, schedule: Schedule, scheme=Scheme.BDA) -> np.ndarray:
    """``y_K`` without recording the tape.

    Works on stacked inputs (leading batch axes) when ``problem.batched``.
    """
    scheme = Scheme.parse(scheme)
    y = np.array(y0, dtype=float)
    alphas = _alphas_for(schedule, scheme)
    for k in range(schedule.K):
        y = apply_step(problem, scheme, x, y, schedule.s_u, schedule.s_l, alphas[k])
    return y
