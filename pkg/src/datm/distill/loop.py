"""The distillation meta-loop: sample a difficulty-windowed expert segment,
unroll SGD on the synthetic set, match the endpoint, backpropagate to the
synthetic images / logits / step size."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..experts.store import ExpertBuffer
from ..experts.train import sample_segment
from ..models.unroll import meta_backward, unroll_record
from ..numkit.errors import (
    DatmError,
    DegenerateSegment,
    DivergentUnroll,
    ShapeError,
)
from ..numkit.ops import param_distance_sq
from ..numkit.precision import strict_mode
from ..numkit.rng import Rng
from ..numkit.tensor import LabeledDataset, ParamVector
from .synthetic import SyntheticSet, build_correct_subset, init_synthetic
from .window import MatchWindow, advance_window, sample_start_epoch

DENOMINATOR_FLOOR = 1e-12
MAX_CONSECUTIVE_FAILURES = 50
ALPHA_FLOOR = 1e-8

RUNLOG_HEADER = "iter,expert,t,T,loss,alpha,gnorm_img,gnorm_logit,gnorm_alpha,ms"


def matching_loss(
    theta_hat: ParamVector, theta_start: ParamVector, theta_target: ParamVector
) -> float:
    """||theta_hat - theta_target||^2 / ||theta_start - theta_target||^2."""
    denominator = param_distance_sq(theta_start, theta_target)
    if denominator < DENOMINATOR_FLOOR:
        raise DegenerateSegment("degenerate expert segment")
    return param_distance_sq(theta_hat, theta_target) / denominator


@dataclass
class DistillConfig:
    iterations: int
    window: MatchWindow
    ipc: int = 10
    seed: int = 0
    label_mode: str = "soft-learned"
    lr_images: float = 1.0
    lr_logits: float = 0.05
    lr_alpha: float = 1e-4
    momentum_images: float = 0.5
    momentum_logits: float = 0.9
    momentum_alpha: float = 0.5
    alpha_init: float = 0.05
    inner_batch: int = 128
    label_expert: int = 0
    label_epoch: int = -1  # -1 means the final checkpoint
    log_cadence: int = 50

    def __post_init__(self):
        if self.iterations < 1:
            raise ShapeError("iterations must be >= 1")
        if self.ipc < 1:
            raise ShapeError("ipc must be >= 1")
        for name in ("lr_images", "lr_logits", "lr_alpha"):
            if getattr(self, name) < 0:
                raise ShapeError(f"{name} must be nonnegative")
        if self.alpha_init <= 0:
            raise ShapeError("alpha_init must be positive")

    def canonical(self) -> str:
        w = self.window
        return (
            f"iterations={self.iterations},ipc={self.ipc},seed={self.seed},"
            f"label_mode={self.label_mode},lr_images={self.lr_images!r},"
            f"lr_logits={self.lr_logits!r},lr_alpha={self.lr_alpha!r},"
            f"momentum_images={self.momentum_images!r},"
            f"momentum_logits={self.momentum_logits!r},"
            f"momentum_alpha={self.momentum_alpha!r},alpha_init={self.alpha_init!r},"
            f"inner_batch={self.inner_batch},label_expert={self.label_expert},"
            f"label_epoch={self.label_epoch},window=({w.t_lower},{w.t_init},"
            f"{w.t_upper},{w.ramp_iters},{w.span},{w.steps})"
        )


class RunLog:
    """Per-iteration rows with the fixed CSV header."""

    def __init__(self, rows=None):
        self.rows = list(rows) if rows else []

    def append(self, iteration, expert, t, t_float, loss, alpha, gn_img, gn_logit, gn_alpha, ms):
        self.rows.append(
            f"{iteration},{expert},{t},{t_float},{loss:.9g},{alpha:.9g},"
            f"{gn_img:.9g},{gn_logit:.9g},{gn_alpha:.9g},{ms:.6g}"
        )

    def to_csv(self) -> str:
        return "\n".join([RUNLOG_HEADER] + self.rows) + "\n"

    def column(self, name: str) -> list:
        i = RUNLOG_HEADER.split(",").index(name)
        return [row.split(",")[i] for row in self.rows]

    def __len__(self):
        return len(self.rows)


class MinibatchPlanner:
    """Shuffled minibatches without replacement, reshuffled when exhausted.

    Full-batch plans are used whenever the set fits in one batch.
    """

    def __init__(self, count: int, batch_size: int, rng: Rng):
        self.count = count
        self.batch_size = min(batch_size, count)
        self.rng = rng
        self.full = batch_size >= count
        self._perm = None
        self._cursor = 0

    def next_batch(self) -> np.ndarray:
        if self.full:
            return np.arange(self.count)
        if self._perm is None or self._cursor >= self.count:
            self._perm = self.rng.permutation(self.count)
            self._cursor = 0
        batch = self._perm[self._cursor : self._cursor + self.batch_size]
        self._cursor += self.batch_size
        return batch

    def plan(self, steps: int) -> list:
        return [self.next_batch() for _ in range(steps)]

    def snapshot(self):
        return {
            "perm": None if self._perm is None else self._perm.copy(),
            "cursor": self._cursor,
            "rng": self.rng.get_state(),
        }

    def restore(self, snap) -> None:
        self._perm = snap["perm"]
        self._cursor = snap["cursor"]
        self.rng = Rng.from_state(snap["rng"])


@dataclass
class DistillState:
    synset: SyntheticSet
    config: DistillConfig
    iteration: int = 0
    window: MatchWindow | None = None
    vel_images: np.ndarray | None = None
    vel_logits: np.ndarray | None = None
    vel_alpha: float = 0.0
    consecutive_failures: int = 0
    loop_rng: Rng | None = None
    batcher: MinibatchPlanner | None = None
    log: RunLog = field(default_factory=RunLog)

    def __post_init__(self):
        if self.vel_images is None:
            self.vel_images = np.zeros_like(self.synset.images.array)
        if self.vel_logits is None:
            self.vel_logits = np.zeros_like(self.synset.logits.array)
        if self.window is None:
            self.window = advance_window(self.config.window, 0)


def state_snapshot(state: DistillState) -> dict:
    """Plain-data snapshot sufficient to resume a run bit-exactly."""
    return {
        "synset": state.synset.copy(),
        "config": state.config,
        "iteration": state.iteration,
        "vel_images": state.vel_images.copy(),
        "vel_logits": state.vel_logits.copy(),
        "vel_alpha": state.vel_alpha,
        "consecutive_failures": state.consecutive_failures,
        "loop_rng": state.loop_rng.get_state(),
        "batcher": state.batcher.snapshot(),
        "log_rows": list(state.log.rows),
    }


def state_restore(snap: dict) -> DistillState:
    config = snap["config"]
    state = DistillState(synset=snap["synset"], config=config)
    state.iteration = snap["iteration"]
    state.window = advance_window(config.window, max(state.iteration - 1, 0))
    state.vel_images = snap["vel_images"].copy()
    state.vel_logits = snap["vel_logits"].copy()
    state.vel_alpha = snap["vel_alpha"]
    state.consecutive_failures = snap["consecutive_failures"]
    state.loop_rng = Rng.from_state(snap["loop_rng"])
    state.batcher = MinibatchPlanner(
        state.synset.count, config.inner_batch, Rng(0)
    )
    state.batcher.restore(snap["batcher"])
    state.log = RunLog(snap["log_rows"])
    return state


class DistillAborted(DatmError):
    """Too many consecutive failed iterations; carries the last good state."""

    def __init__(self, message: str, synset: SyntheticSet, log: RunLog):
        super().__init__(message)
        self.synset = synset
        self.log = log


def distill_step(state: DistillState, experts: ExpertBuffer, config: DistillConfig) -> DistillState:
    """One meta-iteration; mutates and returns `state`."""
    start_time = time.perf_counter()
    syn = state.synset
    state.window = advance_window(config.window, state.iteration)
    pool = experts.training_indices
    expert_index = pool[state.loop_rng.integer(0, len(pool) - 1)]
    traj = experts.trajectories[expert_index]
    t = sample_start_epoch(state.window, state.loop_rng)
    theta_start, theta_target = sample_segment(traj, t, state.window.span)
    plan = state.batcher.plan(state.window.steps)
    try:
        theta_hat, tape = unroll_record(theta_start, syn, state.window.steps, plan)
        denominator = param_distance_sq(theta_start, theta_target)
        if denominator < DENOMINATOR_FLOOR:
            raise DegenerateSegment("degenerate expert segment")
        loss = param_distance_sq(theta_hat, theta_target) / denominator
        seed_values = (
            2.0 * (theta_hat.values.astype(np.float64) - theta_target.values.astype(np.float64))
            / denominator
        ).astype(syn.images.data.dtype)
        grads = meta_backward(tape, ParamVector(seed_values, theta_hat.layout, theta_hat.arch_id))
    except (DivergentUnroll, DegenerateSegment):
        state.consecutive_failures += 1
        ms = 0.0 if strict_mode() else (time.perf_counter() - start_time) * 1e3
        state.log.append(
            state.iteration, expert_index, t, state.window.t_float,
            float("nan"), syn.alpha, 0.0, 0.0, 0.0, ms,
        )
        state.iteration += 1
        if state.consecutive_failures > MAX_CONSECUTIVE_FAILURES:
            raise DistillAborted(
                f"{state.consecutive_failures} consecutive failed iterations",
                syn, state.log,
            ) from None
        return state

    state.consecutive_failures = 0
    gn_img = float(np.linalg.norm(grads.d_images.astype(np.float64)))
    gn_logit = float(np.linalg.norm(grads.d_logits.astype(np.float64)))
    gn_alpha = abs(grads.d_alpha)

    # meta-gradients scale as 1/batch (mean CE), so the image/logit rates are
    # scaled by the effective inner batch to keep one default usable at any ipc
    batch_scale = min(syn.count, config.inner_batch)
    state.vel_images = config.momentum_images * state.vel_images + grads.d_images
    syn.images.data -= (config.lr_images * batch_scale * state.vel_images).reshape(-1)
    if syn.labels_trainable():
        state.vel_logits = config.momentum_logits * state.vel_logits + grads.d_logits
        syn.logits.data -= (config.lr_logits * batch_scale * state.vel_logits).reshape(-1)
    state.vel_alpha = config.momentum_alpha * state.vel_alpha + grads.d_alpha
    syn.alpha = max(syn.alpha - config.lr_alpha * state.vel_alpha, ALPHA_FLOOR)

    ms = 0.0 if strict_mode() else (time.perf_counter() - start_time) * 1e3
    state.log.append(
        state.iteration, expert_index, t, state.window.t_float,
        loss, syn.alpha, gn_img, gn_logit, gn_alpha, ms,
    )
    state.iteration += 1
    return state


def init_distill_state(
    dataset: LabeledDataset, experts: ExpertBuffer, config: DistillConfig
) -> DistillState:
    """Mislabel filter + synthetic initialization + fresh optimizer state."""
    if config.label_expert == experts.held_out_index:
        raise ShapeError("labeling expert must not be the held-out trajectory")
    horizon = experts.horizon
    config.window.validate_horizon(horizon)
    label_epoch = horizon if config.label_epoch < 0 else config.label_epoch
    labeling = experts.trajectories[config.label_expert].checkpoint(label_epoch)
    subset = build_correct_subset(dataset, labeling)
    rng = Rng(config.seed)
    syn = init_synthetic(
        dataset,
        subset,
        config.ipc,
        labeling,
        config.label_mode,
        rng.split("init"),
        alpha_init=config.alpha_init,
        labeling_id=f"expert{config.label_expert}:epoch{label_epoch}",
    )
    state = DistillState(synset=syn, config=config)
    state.loop_rng = rng.split("loop")
    state.batcher = MinibatchPlanner(syn.count, config.inner_batch, rng.split("batch"))
    return state


def distill(
    dataset: LabeledDataset, experts: ExpertBuffer, config: DistillConfig, state: DistillState | None = None
):
    """Run the full meta-optimization; returns (SyntheticSet, RunLog)."""
    if len(experts.training_indices) < 1:
        raise ShapeError("expert buffer has no training trajectories")
    if state is None:
        state = init_distill_state(dataset, experts, config)
    while state.iteration < config.iterations:
        distill_step(state, experts, config)
    return state.synset, state.log
