"""Expert training: SGD with momentum on the real dataset, one-hot labels,
parameters checkpointed at every epoch boundary."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from ..models.arch import ArchSpec
from ..models.network import get_network
from ..numkit.errors import DatmError, ShapeError
from ..numkit.ops import one_hot
from ..numkit.rng import Rng
from ..numkit.tensor import LabeledDataset, ParamVector


@dataclass
class ExpertTrainConfig:
    epochs: int = 40
    batch_size: int = 64
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 0
    whiten: bool = False  # provenance: whether the source dataset was ZCA-whitened

    def __post_init__(self):
        if self.epochs < 1:
            raise ShapeError("epochs must be >= 1")
        if self.lr <= 0:
            raise ShapeError("learning rate must be positive")

    def canonical(self) -> str:
        return (
            f"epochs={self.epochs},batch_size={self.batch_size},lr={self.lr!r},"
            f"momentum={self.momentum!r},weight_decay={self.weight_decay!r},"
            f"seed={self.seed},whiten={int(self.whiten)}"
        )

    def digest(self) -> bytes:
        return hashlib.sha256(self.canonical().encode()).digest()

    def with_seed(self, seed: int) -> "ExpertTrainConfig":
        return replace(self, seed=seed)


@dataclass
class ExpertTrajectory:
    """Epoch-indexed parameter checkpoints from one expert run.

    checkpoints[t] is the parameter vector after t completed epochs;
    checkpoints[0] is the initialization.
    """

    arch_id: str
    seed: int
    checkpoints: list
    config_digest: bytes
    epoch_log: list = field(default_factory=list)  # (epoch, loss, acc) rows
    held_out: bool = False

    @property
    def horizon(self) -> int:
        return len(self.checkpoints) - 1

    def checkpoint(self, t: int) -> ParamVector:
        return self.checkpoints[t]


def sample_segment(traj: ExpertTrajectory, t: int, span: int):
    """(theta_t, theta_{t+span}) references from the trajectory."""
    if t < 0 or t + span > traj.horizon:
        raise ShapeError(
            f"segment out of range: t={t}, span={span}, horizon={traj.horizon}"
        )
    return traj.checkpoints[t], traj.checkpoints[t + span]


def train_expert(
    dataset: LabeledDataset, arch: ArchSpec, cfg: ExpertTrainConfig
) -> ExpertTrajectory:
    dataset.require_every_class()
    net = get_network(arch)
    rng = Rng(cfg.seed)
    params = net.init_params(rng.split("init"))
    order_rng = rng.split("order")

    images = dataset.images.array
    targets = one_hot(dataset.labels, dataset.num_classes, dtype=images.dtype)
    labels = dataset.labels
    n = dataset.n
    velocity = np.zeros_like(params.values)
    checkpoints = [params.copy()]
    epoch_log = []

    for epoch in range(cfg.epochs):
        perm = order_rng.permutation(n)
        losses = []
        correct = 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            loss, grad, logits = net.loss_grad_logits(params, images[idx], targets[idx])
            if not np.isfinite(loss):
                raise DatmError(f"expert training diverged at epoch {epoch}")
            correct += int((logits.argmax(axis=1) == labels[idx]).sum())
            g = grad.values
            if cfg.weight_decay:
                g = g + cfg.weight_decay * params.values
            velocity = cfg.momentum * velocity + g
            params.values -= cfg.lr * velocity
            losses.append(loss)
        epoch_log.append((epoch, float(np.mean(losses)), correct / n))
        checkpoints.append(params.copy())

    return ExpertTrajectory(
        arch_id=arch.arch_id,
        seed=cfg.seed,
        checkpoints=checkpoints,
        config_digest=cfg.digest(),
        epoch_log=epoch_log,
    )
