"""Joint object counting and size-histogram regression on crowded
synthetic scenes, small enough to train and verify on a CPU."""

__version__ = "0.1.0"

from .estimators import AverageBaseline, CountHistogramRegressor, evaluate_estimator
from .network import CountHistogramNet, ModelConfig, load_model, save_model
from .scenes import GenConfig, Scene, EllipseInstance, sample_scene, rasterize, augment
from .targets import (
    BinLadder,
    BinWeights,
    CountMap,
    bin_weights,
    build_count_map,
    build_histograms,
    count_from_map,
)
from .metrics import MetricReport

__all__ = [
    "AverageBaseline",
    "BinLadder",
    "BinWeights",
    "CountHistogramNet",
    "CountHistogramRegressor",
    "CountMap",
    "EllipseInstance",
    "GenConfig",
    "MetricReport",
    "ModelConfig",
    "Scene",
    "augment",
    "bin_weights",
    "build_count_map",
    "build_histograms",
    "count_from_map",
    "evaluate_estimator",
    "load_model",
    "rasterize",
    "sample_scene",
    "save_model",
    "__version__",
]
