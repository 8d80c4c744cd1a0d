"""Factor model estimation for large panels.

Thin wrapper over the C++ core. All functions accept the panel as a 2-D
float array with periods in rows and series in columns, standardize it
internally, and return plain dicts of numpy arrays.
"""

from ._factorkit import (
    ValidationError,
    common_component_interval,
    constrained_fit,
    fit,
    impute,
    regress,
    select,
    simulate,
    standardize,
    sweep,
)

__all__ = [
    "ValidationError",
    "common_component_interval",
    "constrained_fit",
    "fit",
    "impute",
    "regress",
    "select",
    "simulate",
    "standardize",
    "sweep",
]

__version__ = "0.1.0"
