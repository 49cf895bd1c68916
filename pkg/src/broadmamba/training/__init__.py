from .metrics import MetricsReport, compute_metrics
from .model import BroadMambaModel, ablation_fuse
from .synthetic import EmotionBatch, SyntheticSpec, generate
from .trainer import EpochLog, NumericAbort, evaluate, grad_check, load_datasets, train

__all__ = [
    "BroadMambaModel",
    "EmotionBatch",
    "EpochLog",
    "MetricsReport",
    "NumericAbort",
    "SyntheticSpec",
    "ablation_fuse",
    "compute_metrics",
    "evaluate",
    "generate",
    "grad_check",
    "load_datasets",
    "train",
]
