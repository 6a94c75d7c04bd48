from .loop import (
    DistillAborted,
    DistillConfig,
    DistillState,
    MinibatchPlanner,
    RunLog,
    RUNLOG_HEADER,
    distill,
    distill_step,
    init_distill_state,
    matching_loss,
    state_restore,
    state_snapshot,
)
from .synthetic import (
    SyntheticSet,
    build_correct_subset,
    init_synthetic,
    load_synthetic,
    save_synthetic,
)
from .tune import CURVE_SKIP_MARKER, TuneConfig, auto_tune_window, segment_losses
from .window import MatchWindow, advance_window, sample_start_epoch

__all__ = [
    "DistillAborted",
    "DistillConfig",
    "DistillState",
    "MinibatchPlanner",
    "RunLog",
    "RUNLOG_HEADER",
    "distill",
    "distill_step",
    "init_distill_state",
    "matching_loss",
    "state_restore",
    "state_snapshot",
    "SyntheticSet",
    "build_correct_subset",
    "init_synthetic",
    "load_synthetic",
    "save_synthetic",
    "CURVE_SKIP_MARKER",
    "TuneConfig",
    "auto_tune_window",
    "segment_losses",
    "MatchWindow",
    "advance_window",
    "sample_start_epoch",
]
