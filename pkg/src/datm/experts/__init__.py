from .store import (
    ExpertBuffer,
    generate_expert_buffer,
    load_expert_buffer,
    load_trajectory,
    save_trajectory,
)
from .train import ExpertTrainConfig, ExpertTrajectory, sample_segment, train_expert

__all__ = [
    "ExpertBuffer",
    "generate_expert_buffer",
    "load_expert_buffer",
    "load_trajectory",
    "save_trajectory",
    "ExpertTrainConfig",
    "ExpertTrajectory",
    "sample_segment",
    "train_expert",
]
