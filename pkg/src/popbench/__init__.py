"""Benchmarking harness comparing learned location embeddings with geospatial
covariates for predicting administrative-unit population shares."""

from popbench.datamodel import Dataset, Family, assemble_dataset
from popbench.errors import (
    ConfigError,
    DataError,
    GeocodingError,
    GeometryError,
    LinkageError,
    ModelError,
    PopbenchError,
    SplitError,
)
from popbench.evaluation import EvalConfig, MetricRecord, kl_divergence, r_squared, rescale_predictions
from popbench.models import ModelKind, ModelSpec, fit, predict

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError", "Dataset", "EvalConfig", "Family", "GeocodingError", "GeometryError",
    "LinkageError", "MetricRecord", "ModelError", "ModelKind", "ModelSpec", "PopbenchError", "SplitError",
    "assemble_dataset", "fit", "kl_divergence", "predict", "r_squared", "rescale_predictions",
]
