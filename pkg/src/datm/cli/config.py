"""Run configuration: a flat `dotted.key = value` text format with strict
unknown-key rejection, plus builders turning it into module configs.

Every command writes the fully resolved document (defaults expanded) next to
its outputs, so a run is reconstructible from the sidecar alone.
"""

from __future__ import annotations

import os
from pathlib import Path

from ..numkit.errors import ConfigError

# key -> (type tag, default). Type tags: int, float, bool, str, ints, strs.
SCHEMA = {
    "strict": ("bool", False),
    "output.dir": ("str", "runs/out"),
    "dataset.kind": ("str", "blobs"),  # blobs | moons | dset | idx
    "dataset.n_train": ("int", 2000),
    "dataset.n_test": ("int", 1000),
    "dataset.image_size": ("int", 8),
    "dataset.num_classes": ("int", 10),
    "dataset.hard_fraction": ("float", 0.25),
    "dataset.noise": ("float", 0.06),
    "dataset.seed": ("int", 42),
    "dataset.normalize": ("bool", True),
    "dataset.zca": ("bool", False),
    "dataset.zca_epsilon": ("float", 1e-6),
    "dataset.path": ("str", ""),
    "dataset.test_path": ("str", ""),
    "dataset.images_path": ("str", ""),
    "dataset.labels_path": ("str", ""),
    "dataset.test_images_path": ("str", ""),
    "dataset.test_labels_path": ("str", ""),
    "arch.descriptor": ("str", "conv3-8"),
    "experts.count": ("int", 11),
    "experts.epochs": ("int", 40),
    "experts.batch_size": ("int", 64),
    "experts.lr": ("float", 0.05),
    "experts.momentum": ("float", 0.9),
    "experts.weight_decay": ("float", 5e-4),
    "experts.base_seed": ("int", 100),
    "experts.dir": ("str", ""),
    "distill.iterations": ("int", 600),
    "distill.ipc": ("int", 10),
    "distill.seed": ("int", 0),
    "distill.label_mode": ("str", "soft-learned"),
    "distill.lr_images": ("float", 1.0),
    "distill.lr_logits": ("float", 0.05),
    "distill.lr_alpha": ("float", 1e-3),
    "distill.momentum_images": ("float", 0.5),
    "distill.momentum_logits": ("float", 0.9),
    "distill.momentum_alpha": ("float", 0.5),
    "distill.alpha_init": ("float", 0.05),
    "distill.inner_batch": ("int", 128),
    "distill.label_expert": ("int", 0),
    "distill.label_epoch": ("int", -1),
    "distill.log_cadence": ("int", 50),
    "distill.window.t_lower": ("int", 0),
    "distill.window.t_upper": ("int", 20),
    "distill.window.t_init": ("int", -1),     # -1: no ramp (start at t_upper)
    "distill.window.ramp_iters": ("int", -1),  # -1: half of iterations
    "distill.window.span": ("int", 2),
    "distill.window.steps": ("int", 10),
    "eval.archs": ("strs", ("conv3-8",)),
    "eval.trials": ("int", 5),
    "eval.epochs": ("int", 300),
    "eval.batch_size": ("int", 256),
    "eval.lr_override": ("float", -1.0),  # negative: use the learned alpha
    "eval.eval_cadence": ("int", 50),
    "eval.seed": ("int", 0),
    "eval.student_lr": ("float", 0.05),  # baselines without a learned alpha
    "sweep.ipc_list": ("ints", (1, 50)),
    "sweep.seeds": ("ints", (0, 1, 2)),
    "sweep.workers": ("int", 1),
    "tune.probe_iterations": ("int", 50),
    "tune.epsilon": ("float", 0.01),
    "tune.initial_width": ("int", 10),
    "tune.grid_step": ("int", 2),
}


def _coerce(key: str, raw: str):
    kind, _ = SCHEMA[key]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "ints":
            return tuple(int(v) for v in raw.split(",") if v.strip()) if raw else ()
        if kind == "strs":
            return tuple(v.strip() for v in raw.split(",") if v.strip()) if raw else ()
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r} (expected {kind})") from None


class RunConfig:
    """Resolved configuration: every schema key has a concrete value."""

    def __init__(self, values: dict):
        self.values = values

    def __getitem__(self, key: str):
        return self.values[key]

    def set(self, key: str, raw: str) -> None:
        if key not in SCHEMA:
            raise ConfigError(f"unknown configuration key: {key}")
        self.values[key] = _coerce(key, raw)

    @property
    def strict(self) -> bool:
        return bool(self.values["strict"]) or os.environ.get("DATM_STRICT", "") == "1"

    def resolved_text(self) -> str:
        lines = []
        for key in sorted(SCHEMA):
            value = self.values[key]
            if isinstance(value, (tuple, list)):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    def write_sidecar(self, out_dir) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.resolved.txt").write_text(self.resolved_text())


def parse_config_text(text: str, defaults: dict | None = None) -> RunConfig:
    values = dict(defaults) if defaults else {k: v for k, (_, v) in SCHEMA.items()}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown configuration key: {key}")
        values[key] = _coerce(key, raw)
    return RunConfig(values)


def load_config(path, overrides=()) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    config = parse_config_text(path.read_text())
    for key, raw in overrides:
        config.set(key, raw)
    return config


def default_config(overrides=()) -> RunConfig:
    config = RunConfig({k: v for k, (_, v) in SCHEMA.items()})
    for key, raw in overrides:
        config.set(key, raw)
    return config
