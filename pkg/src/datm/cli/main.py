"""Command-line surface: experts, tune, distill, eval, sweep, export-images,
data convert. Exit codes: 0 ok, 2 config error, 3 runtime error, 4
interrupted with a usable checkpoint."""

from __future__ import annotations

import argparse
import pickle
import sys
from pathlib import Path

import numpy as np

from ..distill.loop import (
    DistillAborted,
    distill_step,
    init_distill_state,
    state_restore,
    state_snapshot,
)
from ..distill.synthetic import load_synthetic, save_synthetic
from ..distill.tune import auto_tune_window
from ..evalharness.diagnostics import heldout_matching_curve, label_std_stat
from ..evalharness.evaluate import evaluate, random_subset_baseline
from ..evalharness.sweep import observation_sweep
from ..experts.store import generate_expert_buffer, load_expert_buffer
from ..numkit.errors import ConfigError, DatmError
from ..numkit.io_formats import atomic_write, load_idx, save_dset
from ..numkit.precision import set_strict
from ..numkit.rng import Rng
from .config import RunConfig, default_config, load_config
from .imaging import export_image_grid, render_bar_chart, render_line_chart
from .pipeline import (
    build_arch,
    build_distill_config,
    build_eval_config,
    build_expert_config,
    build_splits,
    build_tune_config,
    build_window,
    experts_dir,
)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_experts(cfg: RunConfig) -> int:
    train, _ = build_splits(cfg)
    arch = build_arch(cfg, train)
    out = experts_dir(cfg)
    generate_expert_buffer(
        train, arch, build_expert_config(cfg),
        count=cfg["experts.count"], base_seed=cfg["experts.base_seed"], out_dir=out,
    )
    cfg.write_sidecar(out)
    print(f"wrote {cfg['experts.count']} trajectories to {out}")
    return 0


def cmd_tune(cfg: RunConfig) -> int:
    train, _ = build_splits(cfg)
    buffer = load_expert_buffer(experts_dir(cfg))
    window = auto_tune_window(train, buffer, build_distill_config(cfg), build_tune_config(cfg))
    out = _out_dir(cfg)
    text = (
        f"t_lower = {window.t_lower}\nt_init = {window.t_init}\n"
        f"t_upper = {window.t_upper}\nspan = {window.span}\nsteps = {window.steps}\n"
    )
    atomic_write(out / "window.txt", text.encode())
    cfg.write_sidecar(out)
    print(f"tuned window: T-={window.t_lower} T_init={window.t_init} T+={window.t_upper}")
    return 0


def cmd_distill(cfg: RunConfig, resume: bool) -> int:
    train, _ = build_splits(cfg)
    buffer = load_expert_buffer(experts_dir(cfg))
    config = build_distill_config(cfg)
    out = _out_dir(cfg)
    ckpt_path = out / "distill.ckpt"
    synset_path = out / "synthetic.dsyn"
    log_path = out / "runlog.csv"

    if resume and ckpt_path.is_file():
        with open(ckpt_path, "rb") as fh:
            state = state_restore(pickle.load(fh))
        print(f"resuming at iteration {state.iteration}", file=sys.stderr)
    else:
        state = init_distill_state(train, buffer, config)

    def checkpoint():
        blob = pickle.dumps(state_snapshot(state), protocol=pickle.HIGHEST_PROTOCOL)
        atomic_write(ckpt_path, blob)

    try:
        while state.iteration < config.iterations:
            distill_step(state, buffer, config)
            if state.iteration % config.log_cadence == 0:
                checkpoint()
    except KeyboardInterrupt:
        checkpoint()
        print(f"interrupted; checkpoint at iteration {state.iteration}", file=sys.stderr)
        return 4
    except DistillAborted as exc:
        # dump the last good synthetic set before propagating
        save_synthetic(exc.synset, synset_path)
        atomic_write(log_path, exc.log.to_csv().encode())
        cfg.write_sidecar(out)
        raise

    save_synthetic(state.synset, synset_path)
    atomic_write(log_path, state.log.to_csv().encode())
    cfg.write_sidecar(out)
    print(f"wrote {synset_path} and {log_path} ({len(state.log)} iterations)")
    return 0


def cmd_eval(cfg: RunConfig, synset_path: str | None, baseline: str | None, ipc: int | None) -> int:
    train, test = build_splits(cfg)
    eval_config = build_eval_config(cfg)
    out = _out_dir(cfg)
    rng = Rng(eval_config.seed)
    if baseline == "random":
        report = random_subset_baseline(
            train, ipc or cfg["distill.ipc"], test, eval_config,
            rng.split("baseline"), student_lr=cfg["eval.student_lr"],
        )
    elif baseline == "full-data":
        report = random_subset_baseline(
            train, int(min(np.bincount(train.labels))), test, eval_config,
            rng.split("fulldata"), student_lr=cfg["eval.student_lr"],
        )
        report.tag = "full-data"
    else:
        if not synset_path:
            raise ConfigError("eval needs a synthetic set path or --baseline")
        synset = load_synthetic(synset_path)
        report = evaluate(synset, test, eval_config, rng=rng.split("eval"))
    report_path = out / f"report_{report.tag}.csv"
    atomic_write(report_path, report.to_csv().encode())
    atomic_write(out / f"report_{report.tag}.digest.txt",
                 (eval_config.canonical() + "\n").encode())
    cfg.write_sidecar(out)
    for arch in report.accuracies:
        print(f"{report.tag} {arch}: mean={report.mean(arch):.4f} std={report.std(arch):.4f}")
    print(f"wrote {report_path}")
    return 0


def cmd_sweep(cfg: RunConfig, charts: bool) -> int:
    train, test = build_splits(cfg)
    buffer = load_expert_buffer(experts_dir(cfg))
    out = _out_dir(cfg)
    result = observation_sweep(
        train, test, buffer,
        cfg["sweep.ipc_list"], build_distill_config(cfg), build_eval_config(cfg),
        seeds=cfg["sweep.seeds"], workers=cfg["sweep.workers"],
    )
    atomic_write(out / "sweep.csv", result.to_csv().encode())
    atomic_write(out / "sweep_detail.csv", result.detail_csv().encode())
    cfg.write_sidecar(out)
    if charts:
        for ipc in cfg["sweep.ipc_list"]:
            labels, values = [], []
            for preset in ("early", "late", "all"):
                row = result.cell(ipc, preset)
                labels.append(preset)
                values.append(row[2])
            render_bar_chart(labels, values, out / f"sweep_ipc{ipc}.png")
    print(f"wrote {out / 'sweep.csv'}")
    return 0


def cmd_export_images(cfg: RunConfig, synset_path: str, out_path: str | None) -> int:
    synset = load_synthetic(synset_path)
    out = Path(out_path) if out_path else _out_dir(cfg) / "synthetic_grid.pgm"
    out.parent.mkdir(parents=True, exist_ok=True)
    written = export_image_grid(synset, out)
    print(f"wrote {written}")
    return 0


def cmd_curve(cfg: RunConfig, synset_path: str) -> int:
    """Held-out matching-loss curve and label-std for a distilled set."""
    buffer = load_expert_buffer(experts_dir(cfg))
    synset = load_synthetic(synset_path)
    window = build_window(cfg)
    out = _out_dir(cfg)
    horizon = buffer.horizon
    grid = list(range(0, horizon - window.span + 1, max(1, cfg["tune.grid_step"])))
    curve = heldout_matching_curve(synset, buffer.held_out, window.span, window.steps, grid)
    atomic_write(out / "heldout_curve.csv", curve.to_csv().encode())
    render_line_chart({"heldout": (curve.x, curve.y)}, out / "heldout_curve.png")
    print(f"label std: {label_std_stat(synset):.6f}")
    print(f"wrote {out / 'heldout_curve.csv'}")
    return 0


def cmd_data_convert(images: str, labels: str, out: str) -> int:
    ds = load_idx(images, labels, name=Path(out).stem)
    save_dset(ds, out)
    print(f"wrote {out} ({ds.n} samples, {ds.num_classes} classes)")
    return 0


def _parse_overrides(pairs) -> list:
    overrides = []
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"override must be key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        overrides.append((key.strip(), value.strip()))
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="datm", description="Desk-scale dataset distillation by trajectory matching"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run configuration file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a configuration key", default=[])

    p = sub.add_parser("experts", help="train the expert buffer")
    common(p)
    p = sub.add_parser("tune", help="auto-tune the matching window")
    common(p)
    p = sub.add_parser("distill", help="run the distillation")
    common(p)
    p.add_argument("--resume", action="store_true", help="continue from the checkpoint")
    p.add_argument("--label-mode", choices=("soft-learned", "soft-fixed", "one-hot"))
    p = sub.add_parser("eval", help="evaluate a distilled set or baseline")
    common(p)
    p.add_argument("synset", nargs="?", help="path to a .dsyn file")
    p.add_argument("--baseline", choices=("random", "full-data"))
    p.add_argument("--ipc", type=int)
    p.add_argument("--trials", type=int)
    p = sub.add_parser("sweep", help="early/late/all window sweep over ipc settings")
    common(p)
    p.add_argument("--charts", action="store_true", help="render chart images")
    p = sub.add_parser("export-images", help="tile synthetic images into a grid file")
    common(p)
    p.add_argument("synset")
    p.add_argument("--out")
    p = sub.add_parser("curve", help="held-out matching-loss diagnostics")
    common(p)
    p.add_argument("synset")
    p = sub.add_parser("data", help="dataset utilities")
    data_sub = p.add_subparsers(dest="data_command", required=True)
    c = data_sub.add_parser("convert", help="convert IDX image/label files to DSET")
    c.add_argument("images")
    c.add_argument("labels")
    c.add_argument("out")
    return parser


def _load(args) -> RunConfig:
    overrides = _parse_overrides(args.set)
    cfg = load_config(args.config, overrides) if args.config else default_config(overrides)
    set_strict(cfg.strict)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "data":
            return cmd_data_convert(args.images, args.labels, args.out)
        cfg = _load(args)
        if args.command == "experts":
            return cmd_experts(cfg)
        if args.command == "tune":
            return cmd_tune(cfg)
        if args.command == "distill":
            if args.label_mode:
                cfg.set("distill.label_mode", args.label_mode)
            return cmd_distill(cfg, resume=args.resume)
        if args.command == "eval":
            if args.trials:
                cfg.set("eval.trials", str(args.trials))
            return cmd_eval(cfg, args.synset, args.baseline, args.ipc)
        if args.command == "sweep":
            return cmd_sweep(cfg, charts=args.charts)
        if args.command == "export-images":
            return cmd_export_images(cfg, args.synset, args.out)
        if args.command == "curve":
            return cmd_curve(cfg, args.synset)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DatmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
