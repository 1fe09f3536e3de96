"""Causal attention forecaster.

Probabilistic multi-horizon forecasting where a user-declared cause graph is
compiled into attention masks, training minimizes a composite quantile loss,
and attention traces become quantitative interpretability artifacts.
"""

from .data import Dataset, NormStats, SplitSpec, SynthSpec, WindowSet
from .errors import (
    CafError,
    ConfigError,
    DataError,
    DivergedError,
    InputError,
    MaskError,
    NumericError,
    SchemaError,
    ShapeError,
    StateError,
)
from .graph import (
    ClusterSpec,
    MaskMatrix,
    MultilayerNetwork,
    ValidationReport,
    build_network,
    load_network,
    spatial_mask,
    temporal_mask,
    validate_assumptions,
)
from .model import (
    AttentionTrace,
    Forecaster,
    ForecastQuantiles,
    ModelConfig,
    SeriesWindow,
    TimeFeature,
)
from .params import ParamStore
from .training import TrainConfig, composite_quantile_loss, fit, quantile_loss

__version__ = "0.1.0"

__all__ = [
    "AttentionTrace",
    "CafError",
    "ClusterSpec",
    "ConfigError",
    "DataError",
    "Dataset",
    "DivergedError",
    "Forecaster",
    "ForecastQuantiles",
    "InputError",
    "MaskError",
    "MaskMatrix",
    "ModelConfig",
    "MultilayerNetwork",
    "NormStats",
    "NumericError",
    "ParamStore",
    "SchemaError",
    "SeriesWindow",
    "ShapeError",
    "SplitSpec",
    "StateError",
    "SynthSpec",
    "TimeFeature",
    "TrainConfig",
    "ValidationReport",
    "WindowSet",
    "build_network",
    "composite_quantile_loss",
    "fit",
    "load_network",
    "quantile_loss",
    "spatial_mask",
    "temporal_mask",
    "validate_assumptions",
]
