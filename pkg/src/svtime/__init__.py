"""Lightweight long-horizon forecasters built on period images."""
from .data import (NormStats, SeriesMatrix, SplitSpec, denormalize, load_csv, normalize, split,
                   windows)
from .imaging import default_period, detect_period, from_image, patch_layout, to_image
from .model import (ModelConfig, SVTimeModel, annealing_weights, compute_scalers, forecast,
                    framework_forward, parameter_count)
from .training import TrainConfig, block_search, fit, mse_loss, optimizer_step
from .evaluation import EvalReport, ablation_suite, benchmark_suite, evaluate

__version__ = "0.1.0"

__all__ = [
    "NormStats", "SeriesMatrix", "SplitSpec", "denormalize", "load_csv", "normalize", "split",
    "windows", "default_period", "detect_period", "from_image", "patch_layout", "to_image",
    "ModelConfig", "SVTimeModel", "annealing_weights", "compute_scalers", "forecast",
    "framework_forward", "parameter_count", "TrainConfig", "block_search", "fit", "mse_loss",
    "optimizer_step", "EvalReport", "ablation_suite", "benchmark_suite", "evaluate",
]
