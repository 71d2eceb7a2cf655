"""Exception hierarchy shared by all popbench modules."""

from __future__ import annotations


class PopbenchError(Exception):
    """Base class for every error raised by popbench."""


class DataError(PopbenchError, ValueError):
    """Malformed or inconsistent input data (files, tables, configs)."""


class ConfigError(DataError):
    """Invalid or missing run configuration."""


class GeometryError(PopbenchError, ValueError):
    """Invalid geometry or an unsupported geometric configuration."""


class LinkageError(PopbenchError):
    """A place record could not be matched to any polygon."""


class GeocodingError(PopbenchError, LookupError):
    """The geocoder could not resolve a record to coordinates."""


class SplitError(PopbenchError):
    """No split satisfying the sampling constraints could be generated."""


class ModelError(PopbenchError, ValueError):
    """Degenerate training data or a prediction/column mismatch."""
