"""Quadratic bilevel instances with least-squares lower level.

Lower level ``f(x, y) = 1/2 ||A y - B x - c||^2``; its solution set is the
affine set of least-squares solutions, non-singleton iff ``A`` is
rank-deficient. Upper level
``F(x, y) = 1/2 y'Qy + y'(P x + q) + 1/2 x'R x + r'x`` with ``Q`` positive
definite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import InputError, ParameterError
from ..problem import BilevelProblem, BoxSet, ProblemConstants, Reference


def _mat(a, shape=None):
    a = np.array(a, dtype=float)
    if a.ndim == 1 and shape is not None and len(shape) == 2:
        a = a.reshape(shape)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class QuadraticSpec:
    A: np.ndarray
    B: np.ndarray
    c: np.ndarray
    Q: np.ndarray
    P: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None
    R: Optional[np.ndarray] = None
    r: Optional[np.ndarray] = None
    box: Optional[BoxSet] = None

    def __post_init__(self):
        A = _mat(self.A)
        p, m = A.shape
        B = _mat(self.B)
        if B.ndim != 2 or B.shape[0] != p:
            raise InputError(f"B must have {p} rows")
        n = B.shape[1]
        defaults = {
            "c": np.zeros(p), "P": np.zeros((m, n)), "q": np.zeros(m),
            "R": np.zeros((n, n)), "r": np.zeros(n),
        }
        for name, default in defaults.items():
            val = getattr(self, name)
            object.__setattr__(self, name, _mat(default if val is None else val))
        Q = _mat(self.Q)
        if Q.shape != (m, m) or not np.allclose(Q, Q.T):
            raise ParameterError("Q must be a symmetric m x m matrix")
        if np.linalg.eigvalsh(Q)[0] <= 0:
            raise ParameterError("upper-level Hessian Q must be positive definite")
        shapes = {"c": (p,), "P": (m, n), "q": (m,), "R": (n, n), "r": (n,)}
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise InputError(f"{name} must have shape {shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Q", Q)
        if self.box is None:
            object.__setattr__(self, "box", BoxSet.uniform(n, -10.0, 10.0))

    @property
    def n(self):
        return self.B.shape[1]

    @property
    def m(self):
        return self.A.shape[1]


class QuadraticUL:
    """``F(x, y) = 1/2 y'Qy + y'(P x + q) + 1/2 x'R x + r'x`` and its derivatives."""

    def __init__(self, Q, P, q, R, r):
        self.Q, self.P, self.q, self.R, self.r = Q, P, q, R, r

    def F(self, x, y):
        return float(0.5 * y @ self.Q @ y + y @ (self.P @ x + self.q) + 0.5 * x @ self.R @ x + self.r @ x)

    def grad_y(self, x, y):
        return self.Q @ y + self.P @ x + self.q

    def grad_x(self, x, y):
        return self.P.T @ y + self.R @ x + self.r

    def hvp_yy(self, x, y, v):
        return self.Q @ v

    def hvp_xy(self, x, y, v):
        return self.P.T @ v


class LeastSquaresLL:
    """``f(x, y) = 1/2 ||A y - B x - c||^2`` with its solution-set geometry."""

    def __init__(self, A, B, c, rcond=1e-10):
        self.A, self.B, self.c = A, B, c
        U, s, Vt = np.linalg.svd(A)
        tol = rcond * (s[0] if s.size else 0.0)
        self.rank = int(np.sum(s > tol))
        self.pinv = np.linalg.pinv(A, rcond=rcond)
        self.null_basis = Vt[self.rank:].T
        self.AtA = A.T @ A
        self.BtA = B.T @ A
        self.L_f = float(s[0] ** 2) if s.size else 0.0

    def target(self, x):
        return self.B @ x + self.c

    def f(self, x, y):
        res = self.A @ y - self.target(x)
        return float(0.5 * res @ res)

    def grad_y(self, x, y):
        return self.A.T @ (self.A @ y - self.target(x))

    def grad_x(self, x, y):
        return -self.B.T @ (self.A @ y - self.target(x))

    def hvp_yy(self, x, y, v):
        return self.AtA @ v

    def hvp_xy(self, x, y, v):
        return -self.BtA @ v

    def f_star(self, x):
        b = self.target(x)
        res = self.A @ (self.pinv @ b) - b
        return float(0.5 * res @ res)

    def particular(self, x):
        return self.pinv @ self.target(x)

    def project_S(self, x, y):
        y = np.asarray(y, dtype=float)
        return y - self.pinv @ (self.A @ y) + self.particular(x)


def _select_on_affine(ul: QuadraticUL, ll: LeastSquaresLL, x):
    """Minimize the UL quadratic over ``{y_p + N z}`` by the null-space method."""
    y_p = ll.particular(x)
    N = ll.null_basis
    if N.shape[1] == 0:
        return y_p
    H = N.T @ ul.Q @ N
    rhs = -N.T @ ul.grad_y(x, y_p)
    return y_p + N @ np.linalg.solve(H, rhs)


def quadratic_family(spec: QuadraticSpec, name: str = "quadratic") -> BilevelProblem:
    ul = QuadraticUL(spec.Q, spec.P, spec.q, spec.R, spec.r)
    ll = LeastSquaresLL(spec.A, spec.B, spec.c)
    eig = np.linalg.eigvalsh(spec.Q)
    return BilevelProblem(
        n=spec.n,
        m=spec.m,
        box=spec.box,
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
        reference=Reference(
            f_star=ll.f_star,
            project_S=ll.project_S,
            select=lambda x: _select_on_affine(ul, ll, np.asarray(x, dtype=float)),
        ),
        name=name,
    )


def random_spec(m: int, n: int, rank: int, seed: int, p: Optional[int] = None,
                cond: float = 4.0) -> QuadraticSpec:
    """Random instance whose ``A`` has exactly ``rank`` nonzero singular values.

    ``Q`` has eigenvalues spread over ``[1, cond]``.
    """
    p = m if p is None else p
    if not 0 < rank <= min(p, m):
        raise ParameterError(f"rank must lie in [1, min(p, m)], got {rank}")
    rng = np.random.default_rng(seed)
    U, _ = np.linalg.qr(rng.normal(size=(p, p)))
    V, _ = np.linalg.qr(rng.normal(size=(m, m)))
    s = np.zeros(min(p, m))
    s[:rank] = rng.uniform(0.5, 1.5, size=rank)
    S = np.zeros((p, m))
    S[np.arange(s.size), np.arange(s.size)] = s
    A = U @ S @ V.T
    W, _ = np.linalg.qr(rng.normal(size=(m, m)))
    Q = W @ np.diag(np.linspace(1.0, cond, m)) @ W.T
    Q = 0.5 * (Q + Q.T)
    return QuadraticSpec(
        A=A,
        B=rng.normal(size=(p, n)),
        c=rng.normal(size=p),
        Q=Q,
        P=0.5 * rng.normal(size=(m, n)),
        q=rng.normal(size=m),
        R=np.eye(n),
        r=np.zeros(n),
        box=BoxSet.uniform(n, -5.0, 5.0),
    )


def rank_one_plane() -> QuadraticSpec:
    """``A = [[1, 0], [0, 0]]``, ``B = [[1], [0]]``: ``S(x) = {(x, t)}``."""
    return QuadraticSpec(
        A=[[1.0, 0.0], [0.0, 0.0]],
        B=[[1.0], [0.0]],
        c=[0.0, 0.0],
        Q=np.eye(2),
        P=[[0.0], [-1.0]],
        q=[-1.0, 0.0],
        R=[[1.0]],
        r=[0.0],
        box=BoxSet.uniform(1, -100.0, 100.0),
    )


def standard_instances() -> dict:
    """Named instances used by the test suites and the CLI."""
    return {
        "singleton": quadratic_family(random_spec(3, 2, 3, seed=11), "quad_singleton"),
        "rank1_plane": quadratic_family(rank_one_plane(), "quad_rank1_plane"),
        "rank2_of_4": quadratic_family(random_spec(4, 2, 2, seed=12), "quad_rank2_of_4"),
    }
