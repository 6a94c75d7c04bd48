"""Window auto-tuning against the held-out trajectory.

Probe ladder: start at (0, 10); raise both bounds while a short probe
distillation still worsens the held-out late-segment loss; then raise the
upper bound alone until a probe starts worsening the early-segment loss and
step back. The ramp start t_init is the smallest start epoch whose matching
loss exceeded 1 during the final probe.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..experts.store import ExpertBuffer
from ..experts.train import ExpertTrajectory, sample_segment
from ..models.unroll import unroll_record
from ..numkit.errors import DegenerateSegment, DivergentUnroll, ShapeError
from ..numkit.tensor import LabeledDataset
from .loop import DistillConfig, distill_step, init_distill_state, matching_loss
from .synthetic import SyntheticSet
from .window import MatchWindow

CURVE_SKIP_MARKER = -1.0


def segment_losses(
    syn: SyntheticSet, traj: ExpertTrajectory, grid, span: int, steps: int
) -> np.ndarray:
    """Matching loss of the synthetic set against (t, t+span) segments.

    Degenerate or divergent segments yield the skip marker (-1).
    """
    losses = np.empty(len(grid), dtype=np.float64)
    full_plan = [np.arange(syn.count)] * steps
    for i, t in enumerate(grid):
        theta_start, theta_target = sample_segment(traj, int(t), span)
        try:
            theta_hat, _ = unroll_record(theta_start, syn, steps, full_plan)
            losses[i] = matching_loss(theta_hat, theta_start, theta_target)
        except (DegenerateSegment, DivergentUnroll):
            losses[i] = CURVE_SKIP_MARKER
    return losses


def _mean_loss(values: np.ndarray) -> float:
    good = values[values >= 0]
    return float(good.mean()) if good.size else float("inf")


@dataclass
class TuneConfig:
    probe_iterations: int = 50
    epsilon: float = 0.01  # relative increase tolerated before a bound stops moving
    initial_width: int = 10
    grid_step: int = 2


def _grids(horizon: int, span: int, step: int):
    half = horizon // 2
    early = list(range(0, max(half - span, 0) + 1, step))
    late = list(range(half, horizon - span + 1, step))
    return early, late


def _probe(
    dataset: LabeledDataset,
    experts: ExpertBuffer,
    base: DistillConfig,
    t_lower: int,
    t_upper: int,
    record: bool = False,
):
    """Short fixed-window distillation from a fresh init; returns the probed
    synthetic set and, when recording, the per-iteration (t, loss) pairs."""
    window = MatchWindow.fixed(t_lower, t_upper, base.window.span, base.window.steps)
    config = replace(base, window=window)
    state = init_distill_state(dataset, experts, config)
    for _ in range(config.iterations):
        distill_step(state, experts, config)
    pairs = []
    if record:
        for row in state.log.rows:
            cells = row.split(",")
            t, loss = int(cells[2]), float(cells[4])
            if np.isfinite(loss):
                pairs.append((t, loss))
    return state.synset, pairs


def auto_tune_window(
    dataset: LabeledDataset,
    experts: ExpertBuffer,
    probe_config: DistillConfig,
    tune: TuneConfig | None = None,
) -> MatchWindow:
    """Difficulty-aligned (t_lower, t_init, t_upper) from held-out probes."""
    tune = tune or TuneConfig()
    horizon = experts.horizon
    span, steps = probe_config.window.span, probe_config.window.steps
    if tune.initial_width + span > horizon:
        raise ShapeError(
            f"expert horizon {horizon} too short for the probe ladder "
            f"(needs >= {tune.initial_width + span})"
        )
    held_out = experts.held_out
    early_grid, late_grid = _grids(horizon, span, tune.grid_step)
    base = replace(probe_config, iterations=tune.probe_iterations)

    baseline = init_distill_state(dataset, experts, base).synset
    base_early = _mean_loss(segment_losses(baseline, held_out, early_grid, span, steps))
    base_late = _mean_loss(segment_losses(baseline, held_out, late_grid, span, steps))

    t_lower, t_upper = 0, tune.initial_width
    while t_upper + 1 + span <= horizon:
        probed, _ = _probe(dataset, experts, base, t_lower, t_upper)
        after_late = _mean_loss(segment_losses(probed, held_out, late_grid, span, steps))
        if after_late <= base_late * (1.0 + tune.epsilon):
            break
        t_lower += 1
        t_upper += 1

    while t_upper + 1 + span <= horizon:
        probed, _ = _probe(dataset, experts, base, t_lower, t_upper + 1)
        after_early = _mean_loss(segment_losses(probed, held_out, early_grid, span, steps))
        if after_early > base_early * (1.0 + tune.epsilon):
            break
        t_upper += 1

    _, pairs = _probe(dataset, experts, base, t_lower, t_upper, record=True)
    above_one = [t for t, loss in pairs if loss > 1.0]
    t_init = min(above_one) if above_one else t_lower
    t_init = min(max(t_init, t_lower), t_upper)
    return MatchWindow(
        t_lower=t_lower,
        t_upper=t_upper,
        t_init=t_init,
        ramp_iters=probe_config.window.ramp_iters,
        span=span,
        steps=steps,
    )
