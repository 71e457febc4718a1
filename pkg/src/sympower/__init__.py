"""Symmetric power transformation for implicit neural representations."""

from .errors import (ClampWarning, CorruptHeader, DegenerateRange, DegenerateStd,
                     DivergenceDetected, EmptySignal, MismatchedBins, MissingSamples, NonFinite,
                     OutOfBound, ShapeMismatch, SymPowerError, TooSmall, UnsupportedEncoding,
                     UnsupportedFormat, ZeroTarget)
from .tensor import Modality, Signal, SignalStats, compute_stats, quantile, range_metric, skewness_metric
from .transforms import (SymPowerConfig, TransformKind, TransformParams, apply, invert,
                         sym_power_forward, sym_power_invert)

__version__ = "0.1.0"

__all__ = [
    "ClampWarning", "CorruptHeader", "DegenerateRange", "DegenerateStd", "DivergenceDetected",
    "EmptySignal", "MismatchedBins", "MissingSamples", "NonFinite", "OutOfBound", "ShapeMismatch",
    "SymPowerError", "TooSmall", "UnsupportedEncoding", "UnsupportedFormat", "ZeroTarget",
    "Modality", "Signal", "SignalStats", "compute_stats", "quantile", "range_metric",
    "skewness_metric", "SymPowerConfig", "TransformKind", "TransformParams", "apply", "invert",
    "sym_power_forward", "sym_power_invert",
]
