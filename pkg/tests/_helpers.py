"""Small hand-built problems shared by the unit tests."""

import numpy as np

from bilevel_kit import BilevelProblem, BoxSet, ProblemConstants


def diag_quadratic(q_upper=(1.0, 1.0), q_lower=(1.0, 1.0), n=1, coupling=0.0, name="diag"):
    """``F = 1/2 y' Qu y - coupling * x . y``, ``f = 1/2 y' Ql y``; separable and fully analytic."""
    Qu = np.diag(np.asarray(q_upper, dtype=float))
    Ql = np.diag(np.asarray(q_lower, dtype=float))
    m = Qu.shape[0]
    Cx = coupling * np.ones((m, n))

    return BilevelProblem(
        n=n,
        m=m,
        box=BoxSet.uniform(n, -10.0, 10.0),
        F=lambda x, y: 0.5 * y @ Qu @ y - y @ Cx @ x,
        f=lambda x, y: 0.5 * y @ Ql @ y,
        grad_y_F=lambda x, y: Qu @ y - Cx @ x,
        grad_x_F=lambda x, y: -Cx.T @ y,
        grad_y_f=lambda x, y: Ql @ y,
        grad_x_f=lambda x, y: np.zeros(n),
        hvp_yy_F=lambda x, y, v: Qu @ v,
        hvp_xy_F=lambda x, y, v: -Cx.T @ v,
        hvp_yy_f=lambda x, y, v: Ql @ v,
        hvp_xy_f=lambda x, y, v: np.zeros(n),
        constants=ProblemConstants(L_F=float(Qu.max()), sigma=float(np.diag(Qu).min()), L_f=float(Ql.max())),
        name=name,
    )


def l1_prox(problem, mu=1.0):
    """Attach ``g = mu ||y||_1`` with its soft-threshold prox."""
    from bilevel_kit.kernels import soft_threshold, soft_threshold_mask

    return problem.replace(
        prox_g=lambda x, z, t: soft_threshold(z, t * mu),
        prox_g_jac=lambda x, z, t: soft_threshold_mask(z, t * mu),
        g=lambda x, y: mu * float(np.abs(y).sum()),
    )
