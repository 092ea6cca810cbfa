"""Canonical problem instances and dataset utilities."""

from .counter import counter_example, rhg_minimizer_closed_form
from .data import (
    Dataset,
    assign_splits,
    corrupt_labels,
    load_idx,
    read_dataset_csv,
    synth_blobs,
    write_dataset_csv,
)
from .hyperclean import accuracy, default_schedule, hyper_cleaning_problem, predict, sigmoid
from .lasso import lasso_ll_problem
from .quadratic import QuadraticSpec, quadratic_family, random_spec, rank_one_plane, standard_instances

__all__ = [
    "Dataset",
    "QuadraticSpec",
    "accuracy",
    "assign_splits",
    "corrupt_labels",
    "counter_example",
    "default_schedule",
    "hyper_cleaning_problem",
    "lasso_ll_problem",
    "load_idx",
    "predict",
    "quadratic_family",
    "random_spec",
    "rank_one_plane",
    "read_dataset_csv",
    "rhg_minimizer_closed_form",
    "sigmoid",
    "standard_instances",
    "synth_blobs",
    "write_dataset_csv",
]
