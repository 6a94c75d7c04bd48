from .diagnostics import DiagnosticCurve, heldout_matching_curve, label_std_stat, spearman
from .evaluate import EvalConfig, EvalReport, evaluate, random_subset_baseline
from .sweep import PRESET_NAMES, SweepResult, observation_sweep, window_presets

__all__ = [
    "DiagnosticCurve",
    "heldout_matching_curve",
    "label_std_stat",
    "spearman",
    "EvalConfig",
    "EvalReport",
    "evaluate",
    "random_subset_baseline",
    "PRESET_NAMES",
    "SweepResult",
    "observation_sweep",
    "window_presets",
]
