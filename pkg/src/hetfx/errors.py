"""Exception taxonomy shared across the package.

Each class corresponds to one CLI exit code so failures surface with a
stable, scriptable meaning: config errors exit 1, data errors exit 2,
estimation errors exit 3.
"""
from __future__ import annotations


class HetfxError(Exception):
    """Base class for all package errors."""

    exit_code = 3


class ConfigError(HetfxError):
    """Invalid run configuration (bad flag values, unknown learners, ...)."""

    exit_code = 1


class DataError(HetfxError):
    """Invalid input data (missing columns, non-binary treatment, ...)."""

    exit_code = 2


class EstimationError(HetfxError):
    """Failure inside an estimation stage (rank loss, empty groups, ...)."""

    exit_code = 3
