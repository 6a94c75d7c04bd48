"""The early/late/all window sweep across IPC settings.

Cells (one distill + eval per (ipc, preset, seed)) are independent and can
run in worker processes; every cell derives its randomness from its own seed
and results are joined in task order, so parallelism preserves determinism.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass, replace

import numpy as np

from ..distill.loop import DistillConfig, distill
from ..distill.window import MatchWindow
from ..experts.store import ExpertBuffer
from ..numkit.errors import DatmError
from ..numkit.rng import Rng
from ..numkit.tensor import LabeledDataset
from .evaluate import EvalConfig, evaluate

PRESET_NAMES = ("early", "late", "all")

_WORKER: dict = {}


def _cell_task(task):
    """Run one (ipc, preset, seed) cell; returns accuracies or a failure tag."""
    ipc, preset, seed = task
    ctx = _WORKER
    try:
        config = replace(
            ctx["template"], ipc=ipc, seed=seed, window=ctx["presets"][preset]
        )
        synset, _ = distill(ctx["dataset"], ctx["experts"], config)
        report = evaluate(
            synset, ctx["test_split"], ctx["eval_config"],
            rng=Rng(ctx["eval_config"].seed).split(f"ipc{ipc}-{preset}-s{seed}"),
        )
        accs = [acc for arch_accs in report.accuracies.values() for acc in arch_accs]
        return ("ok", accs)
    except DatmError as exc:
        return ("failed", type(exc).__name__)


def _init_worker(dataset, test_split, experts, template, eval_config, presets):
    _WORKER.update(
        dataset=dataset, test_split=test_split, experts=experts,
        template=template, eval_config=eval_config, presets=presets,
    )


def window_presets(horizon: int, span: int, steps: int) -> dict:
    """early = [0, n/2], late = [n/2, n], all = [0, n]; uppers capped so the
    target epoch t+span stays on the trajectory. Fixed float (no ramp) to
    isolate the window effect."""
    half = horizon // 2
    hi = horizon - span
    return {
        "early": MatchWindow.fixed(0, min(half, hi), span, steps),
        "late": MatchWindow.fixed(half, hi, span, steps),
        "all": MatchWindow.fixed(0, hi, span, steps),
    }


@dataclass
class SweepResult:
    rows: list          # aggregated (ipc, preset, mean, std, iterations, status)
    detail: list        # per-(ipc, preset, seed, trial) accuracies

    def to_csv(self) -> str:
        lines = ["ipc,preset,mean_acc,std_acc,iterations,status"]
        for ipc, preset, mean, std, iters, status in self.rows:
            lines.append(f"{ipc},{preset},{mean:.9g},{std:.9g},{iters},{status}")
        return "\n".join(lines) + "\n"

    def detail_csv(self) -> str:
        lines = ["ipc,preset,seed,trial,acc"]
        for ipc, preset, seed, trial, acc in self.detail:
            lines.append(f"{ipc},{preset},{seed},{trial},{acc:.9g}")
        return "\n".join(lines) + "\n"

    def cell(self, ipc: int, preset: str):
        for row in self.rows:
            if row[0] == ipc and row[1] == preset:
                return row
        raise KeyError((ipc, preset))

    def seed_means(self, ipc: int, preset: str) -> list:
        per_seed: dict = {}
        for d_ipc, d_preset, seed, _, acc in self.detail:
            if d_ipc == ipc and d_preset == preset:
                per_seed.setdefault(seed, []).append(acc)
        return [float(np.mean(v)) for _, v in sorted(per_seed.items())]


def observation_sweep(
    dataset: LabeledDataset,
    test_split: LabeledDataset,
    experts: ExpertBuffer,
    ipc_list,
    distill_template: DistillConfig,
    eval_config: EvalConfig,
    seeds=(0,),
    presets: dict | None = None,
    workers: int = 1,
) -> SweepResult:
    """Distill + evaluate every (ipc, preset, seed) cell; failures mark the
    cell and the sweep continues."""
    horizon = experts.horizon
    window = distill_template.window
    presets = presets or window_presets(horizon, window.span, window.steps)
    tasks = [
        (ipc, preset, seed)
        for ipc in ipc_list for preset in PRESET_NAMES for seed in seeds
    ]
    init_args = (dataset, test_split, experts, distill_template, eval_config, presets)
    if workers > 1:
        with multiprocessing.Pool(workers, initializer=_init_worker, initargs=init_args) as pool:
            outcomes = pool.map(_cell_task, tasks)
    else:
        _init_worker(*init_args)
        outcomes = [_cell_task(task) for task in tasks]

    rows, detail = [], []
    for ipc in ipc_list:
        for preset in PRESET_NAMES:
            accs = []
            status = "ok"
            for task, (kind, payload) in zip(tasks, outcomes):
                if task[0] != ipc or task[1] != preset:
                    continue
                if kind == "failed":
                    status = f"failed:{payload}"
                    continue
                for trial, acc in enumerate(payload):
                    detail.append((ipc, preset, task[2], trial, acc))
                    accs.append(acc)
            if accs:
                rows.append(
                    (ipc, preset, float(np.mean(accs)), float(np.std(accs)),
                     distill_template.iterations, status)
                )
            else:
                rows.append((ipc, preset, float("nan"), float("nan"),
                             distill_template.iterations, status))
    return SweepResult(rows=rows, detail=detail)
