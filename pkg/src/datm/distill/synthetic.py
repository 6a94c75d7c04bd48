"""Synthetic set construction: mislabel filter, initialization, persistence.

DSYN layout: magic "DSYN", u32 version, length-prefixed labeling arch id,
u32 count/c/h/w/num_classes, f32 images, f32 logits, f64 alpha, u16 target
classes, length-prefixed provenance text, CRC32 trailer.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..models.arch import ArchSpec, parse_arch_id
from ..models.network import get_network
from ..numkit.errors import ClassExhausted, FormatError, ShapeError
from ..numkit.io_formats import append_crc, atomic_write, strip_crc
from ..numkit.ops import one_hot_logits, softmax
from ..numkit.precision import storage_dtype
from ..numkit.rng import Rng
from ..numkit.tensor import LabeledDataset, ParamVector, Tensor

DSYN_MAGIC = b"DSYN"
DSYN_VERSION = 1

LABEL_MODES = ("soft-learned", "soft-fixed", "one-hot")


@dataclass
class SyntheticSet:
    """Distilled images, learnable logits and the trainable inner step size."""

    arch: ArchSpec
    images: Tensor             # [count, c, h, w]
    logits: Tensor             # [count, num_classes]
    alpha: float
    target_classes: np.ndarray
    label_mode: str = "soft-learned"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.target_classes = np.asarray(self.target_classes, dtype=np.int64).reshape(-1)
        if self.label_mode not in LABEL_MODES:
            raise ShapeError(f"unknown label mode {self.label_mode!r}")
        if self.alpha <= 0:
            raise ShapeError("alpha must be positive")
        if self.images.shape[0] != self.logits.shape[0] or (
            self.images.shape[0] != self.target_classes.size
        ):
            raise ShapeError("images/logits/targets row counts differ")

    @property
    def count(self) -> int:
        return self.images.shape[0]

    @property
    def num_classes(self) -> int:
        return self.logits.shape[1]

    def soft_labels(self) -> np.ndarray:
        return softmax(self.logits)

    def labels_trainable(self) -> bool:
        return self.label_mode == "soft-learned"

    def copy(self) -> "SyntheticSet":
        return SyntheticSet(
            arch=self.arch,
            images=self.images.copy(),
            logits=self.logits.copy(),
            alpha=self.alpha,
            target_classes=self.target_classes.copy(),
            label_mode=self.label_mode,
            provenance=dict(self.provenance),
        )


def build_correct_subset(
    dataset: LabeledDataset,
    labeling_params: ParamVector,
    arch: ArchSpec | None = None,
    batch_size: int = 512,
) -> np.ndarray:
    """Indices of samples the labeling model classifies correctly.

    Ties in the argmax break toward the lowest class index. Raises if any
    class loses all of its samples.
    """
    arch = arch or parse_arch_id(labeling_params.arch_id)
    net = get_network(arch)
    images = dataset.images.array
    predicted = np.empty(dataset.n, dtype=np.int64)
    for start in range(0, dataset.n, batch_size):
        logits = net.forward(labeling_params, images[start : start + batch_size])
        predicted[start : start + logits.shape[0]] = logits.argmax(axis=1)
    keep = np.nonzero(predicted == dataset.labels)[0]
    surviving = np.bincount(dataset.labels[keep], minlength=dataset.num_classes)
    for c in range(dataset.num_classes):
        if surviving[c] == 0:
            raise ClassExhausted(c)
    return keep


def init_synthetic(
    dataset: LabeledDataset,
    subset: np.ndarray,
    ipc: int,
    labeling_params: ParamVector,
    label_mode: str,
    rng: Rng,
    alpha_init: float = 0.02,
    arch: ArchSpec | None = None,
    labeling_id: str = "",
) -> SyntheticSet:
    """ipc samples per class drawn from the filtered subset, logits from the
    labeling model's raw outputs (unscaled)."""
    arch = arch or parse_arch_id(labeling_params.arch_id)
    net = get_network(arch)
    subset = np.asarray(subset, dtype=np.int64)
    labels = dataset.labels[subset]
    chosen = []
    deficits = []
    for c in range(dataset.num_classes):
        pool = subset[labels == c]
        if pool.size < ipc:
            deficits.append((c, int(pool.size)))
            continue
        pick = rng.choice(pool.size, size=ipc, replace=False)
        chosen.append(pool[np.sort(pick)])
    if deficits:
        detail = ", ".join(f"class {c} has {have} < {ipc}" for c, have in deficits)
        raise ShapeError(f"insufficient filtered samples: {detail}")
    source_indices = np.concatenate(chosen)
    images = dataset.images.array[source_indices].astype(storage_dtype())
    target_classes = dataset.labels[source_indices]
    if label_mode == "one-hot":
        logits = one_hot_logits(target_classes, dataset.num_classes, dtype=storage_dtype())
    else:
        logits = net.forward(labeling_params, images).astype(storage_dtype())
        if not np.array_equal(logits.argmax(axis=1), target_classes):
            raise ShapeError(
                "labeling model mislabels a selected sample; subset was not "
                "built with the same labeling checkpoint"
            )
    provenance = {
        "seed": rng.seed,
        "labeling_checkpoint": labeling_id,
        "label_mode": label_mode,
        "source_indices": source_indices.tolist(),
    }
    for key in ("norm_mean", "norm_std", "value_range"):
        if key in dataset.meta:
            provenance[key] = dataset.meta[key]
    return SyntheticSet(
        arch=arch,
        images=Tensor.from_array(images),
        logits=Tensor.from_array(logits),
        alpha=float(alpha_init),
        target_classes=target_classes,
        label_mode=label_mode,
        provenance=provenance,
    )


# -- persistence ----------------------------------------------------------


def _encode_provenance(provenance: dict) -> bytes:
    lines = []
    for key in sorted(provenance):
        value = provenance[key]
        if isinstance(value, (list, tuple)):
            value = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        lines.append(f"{key}={value}")
    return "\n".join(lines).encode("utf-8")


def _decode_provenance(blob: bytes) -> dict:
    out: dict = {}
    for line in blob.decode("utf-8").splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        if key in ("norm_mean", "norm_std", "value_range"):
            out[key] = tuple(float(v) for v in value.split(",")) if value else ()
        elif key == "source_indices":
            out[key] = [int(v) for v in value.split(",")] if value else []
        elif key == "seed":
            out[key] = int(value)
        else:
            out[key] = value
    return out


def save_synthetic(syn: SyntheticSet, path) -> None:
    count, c, h, w = syn.images.shape
    arch_bytes = syn.arch.arch_id.encode("utf-8")
    parts = [
        DSYN_MAGIC,
        struct.pack("<II", DSYN_VERSION, len(arch_bytes)),
        arch_bytes,
        struct.pack("<IIIII", count, c, h, w, syn.num_classes),
        syn.images.array.astype("<f4").tobytes(),
        syn.logits.array.astype("<f4").tobytes(),
        struct.pack("<d", syn.alpha),
        syn.target_classes.astype("<u2").tobytes(),
    ]
    prov = _encode_provenance({**syn.provenance, "label_mode": syn.label_mode})
    parts.append(struct.pack("<I", len(prov)))
    parts.append(prov)
    atomic_write(path, append_crc(b"".join(parts)))


def load_synthetic(path) -> SyntheticSet:
    payload = strip_crc(Path(path).read_bytes(), "DSYN")
    if payload[:4] != DSYN_MAGIC:
        raise FormatError("DSYN: bad magic")
    version, arch_len = struct.unpack("<II", payload[4:12])
    if version != DSYN_VERSION:
        raise FormatError(f"DSYN: unsupported version {version}")
    pos = 12
    arch_id = payload[pos : pos + arch_len].decode("utf-8")
    pos += arch_len
    count, c, h, w, num_classes = struct.unpack("<IIIII", payload[pos : pos + 20])
    pos += 20
    img_count = count * c * h * w
    images = np.frombuffer(payload, dtype="<f4", count=img_count, offset=pos).copy()
    pos += 4 * img_count
    logits = np.frombuffer(payload, dtype="<f4", count=count * num_classes, offset=pos).copy()
    pos += 4 * count * num_classes
    (alpha,) = struct.unpack("<d", payload[pos : pos + 8])
    pos += 8
    targets = np.frombuffer(payload, dtype="<u2", count=count, offset=pos).astype(np.int64)
    pos += 2 * count
    (prov_len,) = struct.unpack("<I", payload[pos : pos + 4])
    pos += 4
    provenance = _decode_provenance(payload[pos : pos + prov_len])
    if pos + prov_len != len(payload):
        raise FormatError("DSYN: size mismatch")
    label_mode = provenance.pop("label_mode", "soft-learned")
    return SyntheticSet(
        arch=parse_arch_id(arch_id),
        images=Tensor((count, c, h, w), images),
        logits=Tensor((count, num_classes), logits),
        alpha=float(alpha),
        target_classes=targets,
        label_mode=label_mode,
        provenance=provenance,
    )
