"""Bayesian decision-analysis subset selection for linear mixed models."""

from ._core import (
    Dataset,
    NumericalError,
    PosteriorDraws,
    ValidationError,
    __version__,
    fit,
    load_dataset,
    optimal_coefficients,
    run_cli,
    search,
    select,
    simulate_dataset,
    weight_block,
)

__all__ = [
    "Dataset",
    "NumericalError",
    "PosteriorDraws",
    "ValidationError",
    "__version__",
    "fit",
    "load_dataset",
    "optimal_coefficients",
    "run_cli",
    "search",
    "select",
    "simulate_dataset",
    "weight_block",
]
