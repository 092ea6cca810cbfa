"""Bilevel instance with an l1-regularized least-squares lower level.

``h(x, y) = 1/2 ||D y - (B x + c)||^2 + mu ||y||_1``; the nonsmooth part is
handled through its proximal map (soft-thresholding).
"""

from __future__ import annotations

import numpy as np

from ..errors import ParameterError
from ..kernels import soft_threshold, soft_threshold_mask
from ..problem import BilevelProblem, BoxSet, ProblemConstants
from .quadratic import LeastSquaresLL, QuadraticUL


def lasso_ll_problem(design, target_B, target_c=None, mu: float = 1.0, Q=None, P=None, q=None,
                     box: BoxSet | None = None, name: str = "lasso") -> BilevelProblem:
    """Lasso lower level with target map ``t(x) = target_B @ x + target_c``.

    The upper level defaults to ``1/2 ||y||^2`` (any positive-definite ``Q``
    may be supplied together with ``P`` and ``q``).
    """
    if not mu > 0:
        raise ParameterError(f"mu must be positive, got {mu}")
    D = np.array(design, dtype=float)
    B = np.array(target_B, dtype=float)
    p, m = D.shape
    n = B.shape[1]
    c = np.zeros(p) if target_c is None else np.array(target_c, dtype=float)
    Q = np.eye(m) if Q is None else np.array(Q, dtype=float)
    ul = QuadraticUL(Q, np.zeros((m, n)) if P is None else np.array(P, dtype=float),
                     np.zeros(m) if q is None else np.array(q, dtype=float), np.zeros((n, n)), np.zeros(n))
    ll = LeastSquaresLL(D, B, c)
    eig = np.linalg.eigvalsh(Q)
    mu = float(mu)

    def g(x, y):
        return mu * float(np.abs(y).sum())

    def prox_g(x, z, t):
        return soft_threshold(z, t * mu)

    def prox_g_jac(x, z, t):
        return soft_threshold_mask(z, t * mu)

    return BilevelProblem(
        n=n,
        m=m,
        box=box if box is not None else BoxSet.uniform(n, -10.0, 10.0),
        F=ul.F,
        f=ll.f,
        grad_y_F=ul.grad_y,
        grad_x_F=ul.grad_x,
        grad_y_f=ll.grad_y,
        grad_x_f=ll.grad_x,
        hvp_yy_F=ul.hvp_yy,
        hvp_xy_F=ul.hvp_xy,
        hvp_yy_f=ll.hvp_yy,
        hvp_xy_f=ll.hvp_xy,
        constants=ProblemConstants(L_F=float(eig[-1]), sigma=float(eig[0]), L_f=ll.L_f),
        prox_g=prox_g,
        prox_g_jac=prox_g_jac,
        g=g,
        name=name,
    )
