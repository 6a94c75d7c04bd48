"""Trajectory persistence (DTRJ) and the expert buffer with its manifest.

DTRJ layout: magic "DTRJ", u32 version=1, length-prefixed arch id, u32
param_count, u32 num_checkpoints, u64 seed, 32-byte config digest, then
num_checkpoints x param_count f32 little-endian values, CRC32 trailer.

Manifest: plain text, one `path seed held_out` line per trajectory.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..models.arch import ArchSpec, parse_arch_id
from ..models.network import get_network
from ..numkit.errors import DatmError, FormatError, ShapeError
from ..numkit.io_formats import append_crc, atomic_write, strip_crc
from ..numkit.tensor import LabeledDataset, ParamVector
from .train import ExpertTrainConfig, ExpertTrajectory, train_expert

DTRJ_MAGIC = b"DTRJ"
DTRJ_VERSION = 1


def save_trajectory(traj: ExpertTrajectory, path) -> None:
    arch_bytes = traj.arch_id.encode("utf-8")
    param_count = traj.checkpoints[0].size
    parts = [
        DTRJ_MAGIC,
        struct.pack("<II", DTRJ_VERSION, len(arch_bytes)),
        arch_bytes,
        struct.pack("<IIQ", param_count, len(traj.checkpoints), traj.seed),
        traj.config_digest,
    ]
    for ckpt in traj.checkpoints:
        parts.append(ckpt.values.astype("<f4").tobytes())
    atomic_write(path, append_crc(b"".join(parts)))


def load_trajectory(path, held_out: bool = False) -> ExpertTrajectory:
    payload = strip_crc(Path(path).read_bytes(), "DTRJ")
    if payload[:4] != DTRJ_MAGIC:
        raise FormatError("DTRJ: bad magic")
    version, arch_len = struct.unpack("<II", payload[4:12])
    if version != DTRJ_VERSION:
        raise FormatError(f"DTRJ: unsupported version {version}")
    pos = 12
    arch_id = payload[pos : pos + arch_len].decode("utf-8")
    pos += arch_len
    param_count, num_ckpts, seed = struct.unpack("<IIQ", payload[pos : pos + 16])
    pos += 16
    digest = payload[pos : pos + 32]
    pos += 32
    expected = pos + 4 * param_count * num_ckpts
    if len(payload) != expected:
        raise FormatError("DTRJ: size mismatch")
    arch = parse_arch_id(arch_id)
    layout = get_network(arch).layout
    checkpoints = []
    for i in range(num_ckpts):
        values = np.frombuffer(payload, dtype="<f4", count=param_count, offset=pos)
        pos += 4 * param_count
        checkpoints.append(ParamVector(values.copy(), layout, arch_id))
    return ExpertTrajectory(
        arch_id=arch_id,
        seed=seed,
        checkpoints=checkpoints,
        config_digest=digest,
        held_out=held_out,
    )


@dataclass
class ExpertBuffer:
    """All trajectories of one run; exactly one is held out for diagnostics."""

    trajectories: list
    held_out_index: int

    @property
    def training_indices(self) -> list:
        return [i for i in range(len(self.trajectories)) if i != self.held_out_index]

    @property
    def held_out(self) -> ExpertTrajectory:
        return self.trajectories[self.held_out_index]

    @property
    def horizon(self) -> int:
        return self.trajectories[0].horizon


def write_manifest(path, entries) -> None:
    lines = [f"{name} {seed} {int(held)}" for name, seed, held in entries]
    atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def generate_expert_buffer(
    dataset: LabeledDataset,
    arch: ArchSpec,
    cfg: ExpertTrainConfig,
    count: int,
    base_seed: int,
    out_dir,
    metrics_name: str = "expert_metrics.csv",
):
    """Train `count` experts with seeds base_seed..base_seed+count-1.

    The last trajectory is marked held-out. On expert divergence, the
    manifest of completed trajectories is still written before the raise.
    """
    if count < 2:
        raise ShapeError("need at least 2 experts (one is held out)")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.txt"
    entries = []
    trajectories = []
    metric_rows = ["expert,seed,epoch,loss,acc"]
    for i in range(count):
        seed = base_seed + i
        held_out = i == count - 1
        try:
            traj = train_expert(dataset, arch, cfg.with_seed(seed))
        except DatmError:
            write_manifest(manifest_path, entries)
            raise
        traj.held_out = held_out
        name = f"expert_{i:03d}.dtrj"
        save_trajectory(traj, out_dir / name)
        entries.append((name, seed, held_out))
        trajectories.append(traj)
        for epoch, loss, acc in traj.epoch_log:
            metric_rows.append(f"{i},{seed},{epoch},{loss:.9g},{acc:.9g}")
    write_manifest(manifest_path, entries)
    atomic_write(out_dir / metrics_name, ("\n".join(metric_rows) + "\n").encode("utf-8"))
    return ExpertBuffer(trajectories=trajectories, held_out_index=count - 1)


def load_expert_buffer(manifest_path) -> ExpertBuffer:
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "manifest.txt"
    base = manifest_path.parent
    trajectories = []
    held_out_index = None
    for line in manifest_path.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        name, seed_s, held_s = line.split()
        traj = load_trajectory(base / name, held_out=held_s == "1")
        if traj.seed != int(seed_s):
            raise FormatError(f"manifest seed mismatch for {name}")
        if traj.held_out:
            held_out_index = len(trajectories)
        trajectories.append(traj)
    if not trajectories:
        raise FormatError("empty expert manifest")
    if held_out_index is None:
        raise FormatError("manifest marks no held-out trajectory")
    return ExpertBuffer(trajectories=trajectories, held_out_index=held_out_index)
