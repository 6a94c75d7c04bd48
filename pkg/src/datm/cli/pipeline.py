"""Builders from a RunConfig to module-level configs and prepared data."""

from __future__ import annotations

from pathlib import Path

from ..distill.loop import DistillConfig
from ..distill.tune import TuneConfig
from ..distill.window import MatchWindow
from ..evalharness.evaluate import EvalConfig
from ..experts.train import ExpertTrainConfig
from ..models.arch import ArchSpec, make_arch
from ..numkit.dataset import gaussian_blobs, standardize, two_moons_images
from ..numkit.errors import ConfigError
from ..numkit.io_formats import load_dset, load_idx
from ..numkit.rng import Rng
from ..numkit.tensor import LabeledDataset
from ..numkit.zca import zca_whiten
from .config import RunConfig


def build_splits(cfg: RunConfig):
    """(train, test) datasets with normalization/ZCA applied per config."""
    kind = cfg["dataset.kind"]
    if kind == "blobs":
        rng = Rng(cfg["dataset.seed"])
        train = gaussian_blobs(
            cfg["dataset.n_train"], rng.split("train"),
            num_classes=cfg["dataset.num_classes"],
            image_size=cfg["dataset.image_size"],
            hard_fraction=cfg["dataset.hard_fraction"],
            noise=cfg["dataset.noise"],
        )
        test = gaussian_blobs(
            cfg["dataset.n_test"], rng.split("test"),
            num_classes=cfg["dataset.num_classes"],
            image_size=cfg["dataset.image_size"],
            hard_fraction=cfg["dataset.hard_fraction"],
            noise=cfg["dataset.noise"],
        )
    elif kind == "moons":
        rng = Rng(cfg["dataset.seed"])
        train = two_moons_images(
            cfg["dataset.n_train"], rng.split("train"),
            image_size=cfg["dataset.image_size"], noise=cfg["dataset.noise"],
        )
        test = two_moons_images(
            cfg["dataset.n_test"], rng.split("test"),
            image_size=cfg["dataset.image_size"], noise=cfg["dataset.noise"],
        )
    elif kind == "dset":
        if not cfg["dataset.path"]:
            raise ConfigError("dataset.kind=dset needs dataset.path")
        train = load_dset(cfg["dataset.path"])
        test = load_dset(cfg["dataset.test_path"]) if cfg["dataset.test_path"] else train
    elif kind == "idx":
        if not cfg["dataset.images_path"] or not cfg["dataset.labels_path"]:
            raise ConfigError("dataset.kind=idx needs dataset.images_path and dataset.labels_path")
        train = load_idx(cfg["dataset.images_path"], cfg["dataset.labels_path"])
        if cfg["dataset.test_images_path"]:
            test = load_idx(cfg["dataset.test_images_path"], cfg["dataset.test_labels_path"])
        else:
            test = train
    else:
        raise ConfigError(f"unknown dataset.kind: {kind!r}")

    if cfg["dataset.normalize"]:
        train = standardize(train)
        test = standardize(test, stats=(train.meta["norm_mean"], train.meta["norm_std"]))
    if cfg["dataset.zca"]:
        train, transform = zca_whiten(train, cfg["dataset.zca_epsilon"])
        test = transform.apply_dataset(test)
    return train, test


def build_arch(cfg: RunConfig, dataset: LabeledDataset) -> ArchSpec:
    return make_arch(cfg["arch.descriptor"], dataset.image_shape, dataset.num_classes)


def build_expert_config(cfg: RunConfig) -> ExpertTrainConfig:
    return ExpertTrainConfig(
        epochs=cfg["experts.epochs"],
        batch_size=cfg["experts.batch_size"],
        lr=cfg["experts.lr"],
        momentum=cfg["experts.momentum"],
        weight_decay=cfg["experts.weight_decay"],
        whiten=cfg["dataset.zca"],
    )


def build_window(cfg: RunConfig) -> MatchWindow:
    t_upper = cfg["distill.window.t_upper"]
    t_init = cfg["distill.window.t_init"]
    ramp = cfg["distill.window.ramp_iters"]
    if t_init < 0:
        t_init = t_upper
    if ramp < 0:
        ramp = cfg["distill.iterations"] // 2
    return MatchWindow(
        t_lower=cfg["distill.window.t_lower"],
        t_upper=t_upper,
        t_init=t_init,
        ramp_iters=ramp,
        span=cfg["distill.window.span"],
        steps=cfg["distill.window.steps"],
    )


def build_distill_config(cfg: RunConfig) -> DistillConfig:
    return DistillConfig(
        iterations=cfg["distill.iterations"],
        window=build_window(cfg),
        ipc=cfg["distill.ipc"],
        seed=cfg["distill.seed"],
        label_mode=cfg["distill.label_mode"],
        lr_images=cfg["distill.lr_images"],
        lr_logits=cfg["distill.lr_logits"],
        lr_alpha=cfg["distill.lr_alpha"],
        momentum_images=cfg["distill.momentum_images"],
        momentum_logits=cfg["distill.momentum_logits"],
        momentum_alpha=cfg["distill.momentum_alpha"],
        alpha_init=cfg["distill.alpha_init"],
        inner_batch=cfg["distill.inner_batch"],
        label_expert=cfg["distill.label_expert"],
        label_epoch=cfg["distill.label_epoch"],
        log_cadence=cfg["distill.log_cadence"],
    )


def build_eval_config(cfg: RunConfig) -> EvalConfig:
    override = cfg["eval.lr_override"]
    return EvalConfig(
        archs=tuple(cfg["eval.archs"]),
        trials=cfg["eval.trials"],
        epochs=cfg["eval.epochs"],
        batch_size=cfg["eval.batch_size"],
        lr_override=None if override < 0 else override,
        eval_cadence=cfg["eval.eval_cadence"],
        seed=cfg["eval.seed"],
    )


def build_tune_config(cfg: RunConfig) -> TuneConfig:
    return TuneConfig(
        probe_iterations=cfg["tune.probe_iterations"],
        epsilon=cfg["tune.epsilon"],
        initial_width=cfg["tune.initial_width"],
        grid_step=cfg["tune.grid_step"],
    )


def experts_dir(cfg: RunConfig) -> Path:
    if cfg["experts.dir"]:
        return Path(cfg["experts.dir"])
    return Path(cfg["output.dir"]) / "experts"
