"""Adam, learning-rate schedules, the epoch loop and checkpoints."""
from .checkpoint import (Checkpoint, CheckpointError, CheckpointShapeError, CheckpointVersionError,
                         CorruptHeaderError, NotACheckpointError, TruncatedCheckpointError,
                         load_checkpoint, restore_model, save_checkpoint)
from .loop import (EarlyStopState, EpochStats, EvalResult, FitResult, TrainConfig, TrainingError,
                   evaluate, fit, train_epoch)
from .optim import Adam, NonFiniteGradientError, OptimizerState, adam_step
from .schedule import SCHEDULES, PlateauDetector, count_plateaus, lr_at

__all__ = [
    "Checkpoint", "CheckpointError", "CheckpointShapeError", "CheckpointVersionError",
    "CorruptHeaderError", "NotACheckpointError", "TruncatedCheckpointError", "load_checkpoint",
    "restore_model", "save_checkpoint", "EarlyStopState", "EpochStats", "EvalResult", "FitResult",
    "TrainConfig", "TrainingError", "evaluate", "fit", "train_epoch", "Adam",
    "NonFiniteGradientError", "OptimizerState", "adam_step", "SCHEDULES", "PlateauDetector",
    "count_plateaus", "lr_at",
]
