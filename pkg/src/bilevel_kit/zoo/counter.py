"""The two-dimensional counter-example with a non-singleton lower-level solution set.

    min_{x in [-100, 100]}  1/2 (x - y_2)^2 + 1/2 (y_1 - 1)^2
    s.t.  y in argmin_y  1/2 y_1^2 - x y_1

The lower level ignores ``y_2``, so ``S(x) = {(x, c) : c real}``; the
bilevel optimum is ``x* = 1, y* = (1, 1)``. Oracles broadcast over leading
axes, so ``x`` may be ``(..., 1)`` and ``y`` ``(..., 2)``.
"""

import numpy as np

from ..errors import ParameterError
from ..problem import BilevelProblem, BoxSet, ProblemConstants, Reference


def _F(x, y):
    return 0.5 * (x[..., 0] - y[..., 1]) ** 2 + 0.5 * (y[..., 0] - 1.0) ** 2


def _f(x, y):
    return 0.5 * y[..., 0] ** 2 - x[..., 0] * y[..., 0]


def _grad_y_F(x, y):
    return np.stack([y[..., 0] - 1.0, y[..., 1] - x[..., 0]], axis=-1)


def _grad_x_F(x, y):
    return (x[..., 0] - y[..., 1])[..., None]


def _grad_y_f(x, y):
    r = y[..., 0] - x[..., 0]
    return np.stack([r, np.zeros_like(r)], axis=-1)


def _grad_x_f(x, y):
    return (-y[..., 0])[..., None]


def _hvp_yy_F(x, y, v):
    return np.array(v, dtype=float)


def _hvp_xy_F(x, y, v):
    return (-v[..., 1])[..., None]


def _hvp_yy_f(x, y, v):
    return np.stack([v[..., 0], np.zeros_like(v[..., 0])], axis=-1)


def _hvp_xy_f(x, y, v):
    return (-v[..., 0])[..., None]


def _f_star(x):
    return -0.5 * float(np.asarray(x)[0]) ** 2


def _project_S(x, y):
    return np.array([x[0], y[1]], dtype=float)


def _select(x):
    return np.array([x[0], x[0]], dtype=float)


def counter_example() -> BilevelProblem:
    return BilevelProblem(
        n=1,
        m=2,
        box=BoxSet.uniform(1, -100.0, 100.0),
        F=_F,
        f=_f,
        grad_y_F=_grad_y_F,
        grad_x_F=_grad_x_F,
        grad_y_f=_grad_y_f,
        grad_x_f=_grad_x_f,
        hvp_yy_F=_hvp_yy_F,
        hvp_xy_F=_hvp_xy_F,
        hvp_yy_f=_hvp_yy_f,
        hvp_xy_f=_hvp_xy_f,
        constants=ProblemConstants(L_F=1.0, sigma=1.0, L_f=1.0),
        reference=Reference(
            x_star=np.array([1.0]),
            y_star=np.array([1.0, 1.0]),
            F_star=0.0,
            f_star=_f_star,
            project_S=_project_S,
            select=_select,
        ),
        name="counter_example",
        batched=True,
    )


def rhg_minimizer_closed_form(s_l_seq, K: int) -> float:
    """Minimizer over ``x`` of the K-step lower-level-only surrogate, from ``y_0 = (0, 0)``.

    With ``P = prod_{k<K} (1 - s_l^k)`` the surrogate is
    ``x^2/2 + ((1 - P) x - 1)^2 / 2`` and its minimizer ``(1 - P) / (1 + (1 - P)^2)``.
    A scalar ``s_l_seq`` means a constant step.
    """
    if K < 0:
        raise ParameterError("K must be non-negative")
    steps = np.broadcast_to(np.asarray(s_l_seq, dtype=float), (K,)) if np.ndim(s_l_seq) == 0 \
        else np.asarray(s_l_seq, dtype=float)[:K]
    if steps.shape[0] < K:
        raise ParameterError(f"need {K} step sizes, got {steps.shape[0]}")
    if np.any(steps <= 0) or np.any(steps >= 1):
        raise ParameterError("every step size must lie in (0, 1)")
    P = float(np.prod(1.0 - steps)) if K else 1.0
    q = 1.0 - P
    return q / (1.0 + q * q)
