"""Model-aided navigation engine: sensor preprocessors, a self-calibrating
flight dynamic model, layered EKF fusion and a navigation manager."""

from .calibrator import ModelCalibrator
from .engine import NavConfig, NavEngine
from .flightmodel import FlightModel, ModelParams, RlsEstimator
from .fusion import LayeredFusion, NavSolution
from .manager import NavManager, NavStatus
from .preprocessors import DepthFilter, DvlPreprocessor, LblExtrapolator

__all__ = [
    "DepthFilter",
    "DvlPreprocessor",
    "FlightModel",
    "LblExtrapolator",
    "LayeredFusion",
    "ModelCalibrator",
    "ModelParams",
    "NavConfig",
    "NavEngine",
    "NavManager",
    "NavSolution",
    "NavStatus",
    "RlsEstimator",
]
