"""Constant-cost variable-shape training for video models.

The package splits into a schedule compiler (`schedule`, `accounting`),
a sampling-grid engine (`grids`, `clipbin`), a numpy network stack (`nn`),
synthetic data (`synth`), the training/evaluation loops (`trainer`), and
estimator-style wrappers (`estimator`).  The ``multigrid-video`` command
exposes plan compilation, training, evaluation and clip resampling.
"""

__version__ = "0.1.0"

from .errors import (
    AccountingError,
    CheckpointError,
    ClipbinError,
    ConfigError,
    GridBoundsError,
    GridError,
    MultigridError,
    ShapeError,
    TrainingDivergedError,
)
from .grids import GridSampleRanges, GridSpec, resample, draw_training_grid
from .schedule import (
    CompiledPlan,
    CycleConfig,
    IterationRecord,
    LrSchedule,
    LrStage,
    Shape4D,
    compile,
    round_spatial,
    scaled_batch,
    short_cycle_shape,
)
from .accounting import PlanSummary, summarize, write_comparison_csv
from .synth import SynthSpec, SyntheticVideos, generate, next_batch
from .trainer import (
    EvalResult,
    SamplingConfig,
    TrainParams,
    TrainResult,
    evaluate,
    train,
)
from .estimator import GridResampler, MultigridVideoClassifier
from .nn import VideoNet, SgdMomentum

__all__ = [
    "MultigridError", "ConfigError", "GridError", "GridBoundsError",
    "ShapeError", "ClipbinError", "CheckpointError", "AccountingError",
    "TrainingDivergedError",
    "GridSpec", "GridSampleRanges", "resample", "draw_training_grid",
    "Shape4D", "LrStage", "LrSchedule", "CycleConfig", "IterationRecord",
    "CompiledPlan", "compile", "round_spatial", "scaled_batch",
    "short_cycle_shape",
    "PlanSummary", "summarize", "write_comparison_csv",
    "SynthSpec", "SyntheticVideos", "generate", "next_batch",
    "SamplingConfig", "TrainParams", "TrainResult", "EvalResult",
    "train", "evaluate",
    "GridResampler", "MultigridVideoClassifier",
    "VideoNet", "SgdMomentum",
]
