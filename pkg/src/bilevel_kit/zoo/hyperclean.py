"""Data hyper-cleaning: learn per-sample training weights ``sigmoid(x_i)``.

Lower level: sigmoid-weighted multiclass cross-entropy of a softmax-regression
model ``W`` on the training split. Upper level: unweighted cross-entropy on
the validation split plus ``lambda * ||W||^2``. ``y`` is ``W`` flattened in
row-major order; features get a constant column appended for the bias.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..errors import InputError, ParameterError
from ..inner import Reciprocal, Schedule
from ..problem import BilevelProblem, BoxSet, ProblemConstants
from .data import Dataset

WEIGHT_BOX = 5.0


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def augment(features) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    return np.ascontiguousarray(np.hstack([features, np.ones((features.shape[0], 1))]))


def predict(features, y, classes: int) -> np.ndarray:
    U = augment(features)
    W = np.asarray(y, dtype=float).reshape(U.shape[1], classes)
    return np.argmax(U @ W, axis=1)


def accuracy(data: Dataset, y, split: str = "val") -> float:
    feats, _ = data.part(split)
    truth = data.original_labels[data.rows(split)]
    return float(np.mean(predict(feats, y, data.n_classes) == truth))


def hyper_cleaning_problem(data: Dataset, lam: float = 1e-4, name: str = "hyperclean") -> BilevelProblem:
    if lam < 0:
        raise ParameterError("lambda must be non-negative")
    C = data.n_classes
    if C < 2:
        raise InputError("hyper-cleaning needs at least two classes")
    tr, va = data.rows("train"), data.rows("val")
    if tr.size == 0 or va.size == 0:
        raise InputError("dataset needs non-empty train and val splits")
    U_tr = augment(data.features[tr])
    U_va = augment(data.features[va])
    lab_tr = np.ascontiguousarray(data.labels[tr], dtype=np.int64)
    lab_va = np.ascontiguousarray(data.labels[va], dtype=np.int64)
    d1 = U_tr.shape[1]
    ones_va = np.ones(va.size)
    shape = (d1, C)

    def W_of(y):
        return np.ascontiguousarray(y, dtype=float).reshape(shape)

    def weights(x):
        return np.ascontiguousarray(sigmoid(x))

    def F(x, y):
        W = W_of(y)
        return float(kernels.xent_losses(U_va, lab_va, W).sum() + lam * np.dot(y, y))

    def f(x, y):
        return float(weights(x) @ kernels.xent_losses(U_tr, lab_tr, W_of(y)))

    def grad_y_F(x, y):
        return kernels.xent_grad(U_va, lab_va, ones_va, W_of(y)).ravel() + 2.0 * lam * np.asarray(y, dtype=float)

    def grad_x_F(x, y):
        return np.zeros(tr.size)

    def grad_y_f(x, y):
        return kernels.xent_grad(U_tr, lab_tr, weights(x), W_of(y)).ravel()

    def grad_x_f(x, y):
        s = sigmoid(x)
        return s * (1.0 - s) * kernels.xent_losses(U_tr, lab_tr, W_of(y))

    def hvp_yy_F(x, y, v):
        return kernels.xent_hvp(U_va, ones_va, W_of(y), W_of(v)).ravel() + 2.0 * lam * np.asarray(v, dtype=float)

    def hvp_xy_F(x, y, v):
        return np.zeros(tr.size)

    def hvp_yy_f(x, y, v):
        return kernels.xent_hvp(U_tr, weights(x), W_of(y), W_of(v)).ravel()

    def hvp_xy_f(x, y, v):
        s = sigmoid(x)
        return s * (1.0 - s) * kernels.xent_mixed(U_tr, lab_tr, W_of(y), W_of(v))

    # Cross-entropy Hessian in the logits has spectral norm <= 1/2.
    L_f = 0.5 * float(np.linalg.norm(U_tr, 2) ** 2)
    L_F = 0.5 * float(np.linalg.norm(U_va, 2) ** 2) + 2.0 * lam
    return BilevelProblem(
        n=tr.size,
        m=d1 * C,
        box=BoxSet.uniform(tr.size, -WEIGHT_BOX, WEIGHT_BOX),
        F=F,
        f=f,
        grad_y_F=grad_y_F,
        grad_x_F=grad_x_F,
        grad_y_f=grad_y_f,
        grad_x_f=grad_x_f,
        hvp_yy_F=hvp_yy_F,
        hvp_xy_F=hvp_xy_F,
        hvp_yy_f=hvp_yy_f,
        hvp_xy_f=hvp_xy_f,
        constants=ProblemConstants(L_F=L_F, sigma=2.0 * lam if lam > 0 else None, L_f=L_f),
        name=name,
    )


def default_schedule(problem: BilevelProblem, K: int = 100, c: float = 0.5) -> Schedule:
    """``s_l = 1/L_f``, ``s_u = 2/(L_F + sigma)``, ``alpha_k = c/k``."""
    k = problem.constants
    return Schedule(2.0 / (k.L_F + k.sigma), 1.0 / k.L_f, Reciprocal(c), K)
