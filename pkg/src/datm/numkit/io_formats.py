"""Dataset file formats: IDX (MNIST-style) and the native DSET container.

DSET layout: magic "DSET", u32 version, u32 n/c/h/w/num_classes, f32 LE
pixels, u16 labels, CRC32 trailer over everything preceding it.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import ChecksumError, FormatError
from .tensor import LabeledDataset, Tensor

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
DSET_MAGIC = b"DSET"
DSET_VERSION = 1


def append_crc(payload: bytes) -> bytes:
    return payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)


def strip_crc(blob: bytes, what: str) -> bytes:
    if len(blob) < 4:
        raise FormatError(f"{what}: truncated file")
    payload, (stored,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(payload) & 0xFFFFFFFF != stored:
        raise ChecksumError(f"{what}: checksum mismatch")
    return payload


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


# -- IDX ---------------------------------------------------------------------

def read_idx_images(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < 16:
        raise FormatError("IDX images: truncated header")
    magic, n, h, w = struct.unpack(">IIII", blob[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(f"IDX images: bad magic 0x{magic:08x}")
    pixels = np.frombuffer(blob, dtype=np.uint8, offset=16)
    if pixels.size != n * h * w:
        raise FormatError("IDX images: size mismatch")
    return pixels.reshape(n, 1, h, w).astype(np.float64) / 255.0


def read_idx_labels(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < 8:
        raise FormatError("IDX labels: truncated header")
    magic, n = struct.unpack(">II", blob[:8])
    if magic != IDX_LABELS_MAGIC:
        raise FormatError(f"IDX labels: bad magic 0x{magic:08x}")
    labels = np.frombuffer(blob, dtype=np.uint8, offset=8)
    if labels.size != n:
        raise FormatError("IDX labels: size mismatch")
    return labels.astype(np.int64)


def load_idx(images_path, labels_path, name: str = "idx") -> LabeledDataset:
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.size:
        raise FormatError("IDX: image/label count mismatch")
    num_classes = int(labels.max()) + 1 if labels.size else 1
    meta = {"value_range": (0.0, 1.0), "source": "idx"}
    return LabeledDataset(Tensor.from_array(images), labels, num_classes, name, meta)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    n, _, h, w = images.shape
    pix = np.clip(np.round(images.reshape(n, h, w) * 255.0), 0, 255).astype(np.uint8)
    Path(images_path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w) + pix.tobytes())
    Path(labels_path).write_bytes(
        struct.pack(">II", IDX_LABELS_MAGIC, n) + labels.astype(np.uint8).tobytes()
    )


# -- DSET --------------------------------------------------------------------

def save_dset(ds: LabeledDataset, path) -> None:
    n, c, h, w = ds.images.shape
    if ds.num_classes > 0xFFFF:
        raise FormatError("DSET: num_classes exceeds u16")
    parts = [
        DSET_MAGIC,
        struct.pack("<IIIIII", DSET_VERSION, n, c, h, w, ds.num_classes),
        ds.images.array.astype("<f4").tobytes(),
        ds.labels.astype("<u2").tobytes(),
    ]
    atomic_write(path, append_crc(b"".join(parts)))


def load_dset(path, name: str | None = None) -> LabeledDataset:
    payload = strip_crc(Path(path).read_bytes(), "DSET")
    if payload[:4] != DSET_MAGIC:
        raise FormatError("DSET: bad magic")
    version, n, c, h, w, num_classes = struct.unpack("<IIIIII", payload[4:28])
    if version != DSET_VERSION:
        raise FormatError(f"DSET: unsupported version {version}")
    pix_bytes = 4 * n * c * h * w
    expected = 28 + pix_bytes + 2 * n
    if len(payload) != expected:
        raise FormatError("DSET: size mismatch")
    images = np.frombuffer(payload, dtype="<f4", count=n * c * h * w, offset=28)
    labels = np.frombuffer(payload, dtype="<u2", count=n, offset=28 + pix_bytes)
    meta = {"source": "dset"}
    return LabeledDataset(
        Tensor((n, c, h, w), images.copy()),
        labels.astype(np.int64),
        int(num_classes),
        name or Path(path).stem,
        meta,
    )
