"""Flat, strictly-typed ``key = value`` experiment configuration.

One assignment per line, ``#`` starts a comment, keys are case-sensitive and
unknown keys are rejected. Vectors are comma-separated; a single value is
broadcast to the required length. ``s_u``/``s_l`` accept ``auto`` (largest
admissible step from the problem constants) and ``truncation`` accepts
``full``. See ``KEY_DOCS`` for every key.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigurationError, ParameterError
from .inner import Schedule, Scheme, beta_of
from .outer import SolveConfig, alpha_rule_from
from .problem import BilevelProblem
from . import zoo

PROBLEMS = ("counter_example", "quadratic", "hyperclean", "lasso")

KEY_DOCS = {
    "name": "label used in output file names",
    "problem": "one of " + ", ".join(PROBLEMS),
    "schemes": "comma-separated schemes run side by side (LL_ONLY, BDA, PROX_BDA; RHG = LL_ONLY)",
    "s_u": "upper-level step inside the inner loop, or auto = 2/(L_F + sigma)",
    "s_l": "lower-level step, or auto = 1/L_f",
    "alpha_rule": "reciprocal (c/k), constant (a) or theoretical (gamma, eps)",
    "alpha_c": "reciprocal rule constant",
    "alpha_a": "constant rule value",
    "alpha_gamma": "theoretical rule gamma in (0, 1]",
    "alpha_eps": "theoretical rule epsilon",
    "K": "inner iterations",
    "T": "outer iterations",
    "s_x": "outer projected-gradient step",
    "x0": "initial upper-level point (vector; one value is broadcast)",
    "y0": "inner initialization (vector; one value is broadcast)",
    "truncation": "full, or number of trailing inner steps to differentiate through",
    "warm_start": "carry y_K into the next outer iteration (true/false)",
    "stop_tol": "stop when ||x_{t+1} - x_t|| <= stop_tol (0 disables)",
    "seed": "seed for generated data and random check points",
    "out_dir": "output directory (overridden by --out and BILEVEL_KIT_OUT)",
    "quadratic_instance": "singleton, rank1_plane or rank2_of_4",
    "data_n_per_class": "synthetic blobs: rows per class in each split",
    "data_dim": "synthetic blobs: feature dimension",
    "data_classes": "synthetic blobs: number of classes",
    "data_corruption": "fraction of training labels corrupted",
    "data_separation": "distance scale between class means",
    "hyperclean_lambda": "upper-level l2 weight",
    "lasso_mu": "l1 weight of the lasso lower level",
    "checkgrad_points": "random points per derivative check",
    "checkgrad_K": "inner lengths for the hypergradient check",
    "fault_inject": "oracle name to perturb by 1e-2 (self-test of checkgrad)",
}


def _vec(text):
    return tuple(float(v) for v in text.split(",") if v.strip()) if text.strip() else ()


def _ivec(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _auto_float(text):
    return None if text.strip().lower() == "auto" else float(text)


def _trunc(text):
    return None if text.strip().lower() == "full" else int(text)


def _schemes(text):
    return tuple(Scheme.parse(s).value for s in text.split(",") if s.strip())


def _fmt(value):
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    problem: str = "counter_example"
    schemes: tuple = ("LL_ONLY", "BDA")
    s_u: Optional[float] = 0.7
    s_l: Optional[float] = 0.2
    alpha_rule: str = "reciprocal"
    alpha_c: float = 0.5
    alpha_a: float = 0.0
    alpha_gamma: float = 1.0
    alpha_eps: float = 0.1
    K: int = 16
    T: int = 500
    s_x: float = 0.1
    x0: tuple = ()
    y0: tuple = ()
    truncation: Optional[int] = None
    warm_start: bool = False
    stop_tol: float = 0.0
    seed: int = 0
    out_dir: str = ""
    quadratic_instance: str = "rank1_plane"
    data_n_per_class: int = 100
    data_dim: int = 5
    data_classes: int = 2
    data_corruption: float = 0.3
    data_separation: float = 2.0
    hyperclean_lambda: float = 1e-4
    lasso_mu: float = 1.0
    checkgrad_points: int = 3
    checkgrad_K: tuple = (1, 5, 20)
    fault_inject: str = ""

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigurationError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        if not self.schemes:
            raise ConfigurationError("schemes must list at least one scheme")
        if self.alpha_rule not in ("reciprocal", "constant", "theoretical"):
            raise ConfigurationError(f"unknown alpha_rule {self.alpha_rule!r}")

    def dumps(self) -> str:
        out = []
        for f in fields(self):
            value = getattr(self, f.name)
            text = "full" if f.name == "truncation" and value is None else _fmt(value)
            out.append(f"{f.name} = {text}\n")
        return "".join(out)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


_PARSERS = {
    "name": str, "problem": str, "schemes": _schemes, "s_u": _auto_float, "s_l": _auto_float,
    "alpha_rule": str, "alpha_c": float, "alpha_a": float, "alpha_gamma": float, "alpha_eps": float,
    "K": int, "T": int, "s_x": float, "x0": _vec, "y0": _vec, "truncation": _trunc,
    "warm_start": _bool, "stop_tol": float, "seed": int, "out_dir": str,
    "quadratic_instance": str, "data_n_per_class": int, "data_dim": int, "data_classes": int,
    "data_corruption": float, "data_separation": float, "hyperclean_lambda": float,
    "lasso_mu": float, "checkgrad_points": int, "checkgrad_K": _ivec, "fault_inject": str,
}
assert set(_PARSERS) == {f.name for f in fields(ExperimentConfig)} == set(KEY_DOCS)


def loads(text: str) -> ExperimentConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[key](value)
        except (ValueError, TypeError) as exc:
            raise ConfigurationError(f"line {lineno}: bad value for {key}: {exc}") from None
    return ExperimentConfig(**values)


def load(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return loads(text)


def build_problem(cfg: ExperimentConfig):
    """Return ``(problem, dataset_or_None)`` selected by the config."""
    if cfg.problem == "counter_example":
        return zoo.counter_example(), None
    if cfg.problem == "quadratic":
        inst = zoo.standard_instances()
        if cfg.quadratic_instance not in inst:
            raise ConfigurationError(f"quadratic_instance must be one of {sorted(inst)}")
        return inst[cfg.quadratic_instance], None
    if cfg.problem == "lasso":
        return zoo.lasso_ll_problem([[1.0]], [[1.0]], mu=cfg.lasso_mu, q=[-1.0]), None
    data = zoo.synth_blobs(cfg.data_n_per_class, cfg.data_dim, cfg.data_classes,
                           cfg.data_corruption, cfg.seed, cfg.data_separation)
    return zoo.hyper_cleaning_problem(data, cfg.hyperclean_lambda), data


def _broadcast(vals, n, what):
    if len(vals) == 0:
        return np.zeros(n)
    if len(vals) == 1:
        return np.full(n, vals[0])
    if len(vals) != n:
        raise ConfigurationError(f"{what} has {len(vals)} entries, problem needs {n}")
    return np.array(vals, dtype=float)


def make_schedule(cfg: ExperimentConfig, problem: BilevelProblem) -> Schedule:
    c = problem.constants
    s_l, s_u = cfg.s_l, cfg.s_u
    try:
        if s_l is None:
            if not c.L_f:
                raise ConfigurationError("s_l = auto needs a known L_f")
            s_l = 1.0 / c.L_f
        if s_u is None:
            if c.L_F is None or c.sigma is None:
                raise ConfigurationError("s_u = auto needs known L_F and sigma")
            s_u = 2.0 / (c.L_F + c.sigma)
        if cfg.alpha_rule == "reciprocal":
            rule = alpha_rule_from("reciprocal", c=cfg.alpha_c)
        elif cfg.alpha_rule == "constant":
            rule = alpha_rule_from("constant", a=cfg.alpha_a)
        else:
            if c.L_F is None or c.sigma is None:
                raise ConfigurationError("theoretical alpha rule needs known L_F and sigma")
            rule = alpha_rule_from("theoretical", gamma=cfg.alpha_gamma, eps=cfg.alpha_eps,
                                   beta=beta_of(s_u, c.sigma, c.L_F))
        return Schedule(s_u, s_l, rule, cfg.K)
    except ParameterError as exc:
        raise ConfigurationError(str(exc)) from None


def solve_configs(cfg: ExperimentConfig, problem: BilevelProblem) -> list:
    """One ``(scheme, SolveConfig)`` per entry of ``cfg.schemes``."""
    schedule = make_schedule(cfg, problem)
    x0 = _broadcast(cfg.x0, problem.n, "x0")
    y0 = _broadcast(cfg.y0, problem.m, "y0")
    out = []
    for scheme in cfg.schemes:
        try:
            sc = SolveConfig(scheme, schedule, y0, x0, cfg.s_x, cfg.T, cfg.truncation,
                             cfg.warm_start, cfg.stop_tol, cfg.seed)
        except ParameterError as exc:
            raise ConfigurationError(str(exc)) from None
        out.append((scheme, sc))
    return out
