"""Native image output: PGM/PNG writers, synthetic-image grids, tiny charts.

No plotting dependency: PNG is written directly (zlib + chunk CRCs), charts
are rasterized with a 3x5 digit font good enough for axis extents.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from ..numkit.dataset import denormalize


def write_pgm(path, gray: np.ndarray) -> None:
    """8-bit binary PGM from a [h, w] uint8 array."""
    gray = np.asarray(gray, dtype=np.uint8)
    h, w = gray.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + gray.tobytes())


def read_pgm(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            while blob[pos : pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        fields.append(blob[start:pos])
    if fields[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = int(fields[1]), int(fields[2])
    data = np.frombuffer(blob, dtype=np.uint8, count=w * h, offset=pos + 1)
    return data.reshape(h, w).copy()


def _png_chunk(tag: bytes, payload: bytes) -> bytes:
    chunk = tag + payload
    return struct.pack(">I", len(payload)) + chunk + struct.pack(">I", zlib.crc32(chunk))


def write_png(path, image: np.ndarray) -> None:
    """8-bit PNG from [h, w] (gray) or [h, w, 3] (RGB) uint8 arrays."""
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim == 2:
        color_type, channels = 0, 1
        rows = image[:, :, None]
    elif image.ndim == 3 and image.shape[2] == 3:
        color_type, channels = 2, 3
        rows = image
    else:
        raise ValueError(f"unsupported image shape {image.shape}")
    h, w = image.shape[:2]
    raw = b"".join(b"\x00" + rows[y].tobytes() for y in range(h))
    header = struct.pack(">IIBBBBB", w, h, 8, color_type, 0, 0, 0)
    Path(path).write_bytes(
        b"\x89PNG\r\n\x1a\n"
        + _png_chunk(b"IHDR", header)
        + _png_chunk(b"IDAT", zlib.compress(raw, 6))
        + _png_chunk(b"IEND", b"")
    )


# -- synthetic image grid -----------------------------------------------------

SEPARATOR = 255


def tile_grid(images: np.ndarray, target_classes: np.ndarray, num_classes: int) -> np.ndarray:
    """Tile [count, c, h, w] into a grid: columns are classes, rows are the
    per-class samples, separated by 1px lines. Returns [H, W] or [H, W, 3]."""
    count, c, h, w = images.shape
    per_class: list = [[] for _ in range(num_classes)]
    for i in range(count):
        per_class[int(target_classes[i])].append(i)
    ipc = max(len(v) for v in per_class)
    height = ipc * h + (ipc - 1)
    width = num_classes * w + (num_classes - 1)
    if c == 1:
        grid = np.full((height, width), SEPARATOR, dtype=np.uint8)
    else:
        grid = np.full((height, width, 3), SEPARATOR, dtype=np.uint8)
    for cls, rows in enumerate(per_class):
        for row, idx in enumerate(rows):
            img = images[idx]
            y, x = row * (h + 1), cls * (w + 1)
            tile = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
            if c == 1:
                grid[y : y + h, x : x + w] = tile[0]
            else:
                grid[y : y + h, x : x + w] = tile.transpose(1, 2, 0)
    return grid


def export_image_grid(synset, path) -> Path:
    """Denormalize with the stored constants and write PGM (1ch) or PNG (3ch)."""
    meta = {
        "norm_mean": synset.provenance.get("norm_mean", (0.0,)),
        "norm_std": synset.provenance.get("norm_std", (1.0,)),
    }
    images = denormalize(synset.images.array, meta)
    grid = tile_grid(images, synset.target_classes, synset.num_classes)
    path = Path(path)
    if synset.images.shape[1] == 1:
        if path.suffix.lower() != ".pgm":
            path = path.with_suffix(".pgm")
        write_pgm(path, grid)
    else:
        if path.suffix.lower() != ".png":
            path = path.with_suffix(".png")
        write_png(path, grid)
    return path


# -- tiny charts ---------------------------------------------------------------

_FONT = {  # 3x5 digit/symbol font rows
    "0": ["111", "101", "101", "101", "111"],
    "1": ["010", "110", "010", "010", "111"],
    "2": ["111", "001", "111", "100", "111"],
    "3": ["111", "001", "111", "001", "111"],
    "4": ["101", "101", "111", "001", "001"],
    "5": ["111", "100", "111", "001", "111"],
    "6": ["111", "100", "111", "101", "111"],
    "7": ["111", "001", "010", "010", "010"],
    "8": ["111", "101", "111", "101", "111"],
    "9": ["111", "101", "111", "001", "111"],
    ".": ["000", "000", "000", "000", "010"],
    "-": ["000", "000", "111", "000", "000"],
    "e": ["000", "111", "111", "100", "111"],
    " ": ["000", "000", "000", "000", "000"],
}

PALETTE = [(31, 119, 180), (255, 127, 14), (44, 160, 44), (214, 39, 40), (148, 103, 189)]


def _draw_text(canvas: np.ndarray, y: int, x: int, text: str) -> None:
    for ch in text:
        glyph = _FONT.get(ch, _FONT[" "])
        for r, row in enumerate(glyph):
            for k, bit in enumerate(row):
                if bit == "1" and 0 <= y + r < canvas.shape[0] and 0 <= x + k < canvas.shape[1]:
                    canvas[y + r, x + k] = (0, 0, 0)
        x += 4


def _fmt(v: float) -> str:
    return f"{v:.3g}"


def render_line_chart(series: dict, path, width: int = 480, height: int = 320) -> None:
    """series: name -> (x array, y array). Marks axis extents numerically."""
    canvas = np.full((height, width, 3), 255, dtype=np.uint8)
    left, right, top, bottom = 40, width - 10, 10, height - 22
    canvas[top:bottom, left] = (0, 0, 0)
    canvas[bottom, left:right] = (0, 0, 0)
    xs = np.concatenate([np.asarray(x, dtype=np.float64) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, dtype=np.float64) for _, y in series.values()])
    finite = np.isfinite(ys)
    if not finite.any():
        write_png(path, canvas)
        return
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys[finite].min()), float(ys[finite].max())
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1

    def to_px(x, y):
        px = left + (x - x0) / (x1 - x0) * (right - left - 1)
        py = bottom - 1 - (y - y0) / (y1 - y0) * (bottom - top - 2)
        return int(round(px)), int(round(py))

    for i, (name, (sx, sy)) in enumerate(sorted(series.items())):
        color = PALETTE[i % len(PALETTE)]
        pts = [to_px(x, y) for x, y in zip(sx, sy) if np.isfinite(y)]
        for (ax, ay), (bx, by) in zip(pts[:-1], pts[1:]):
            n = max(abs(bx - ax), abs(by - ay), 1)
            for s in range(n + 1):
                px = ax + (bx - ax) * s // n
                py = ay + (by - ay) * s // n
                canvas[max(top, min(bottom - 1, py)), max(left, min(right - 1, px))] = color
    _draw_text(canvas, bottom + 4, left, _fmt(x0))
    _draw_text(canvas, bottom + 4, right - 30, _fmt(x1))
    _draw_text(canvas, bottom - 6, 2, _fmt(y0))
    _draw_text(canvas, top, 2, _fmt(y1))
    write_png(path, canvas)


def render_bar_chart(labels: list, values: list, path, width: int = 480, height: int = 320) -> None:
    canvas = np.full((height, width, 3), 255, dtype=np.uint8)
    left, right, top, bottom = 40, width - 10, 10, height - 22
    canvas[top:bottom, left] = (0, 0, 0)
    canvas[bottom, left:right] = (0, 0, 0)
    finite = [v for v in values if np.isfinite(v)]
    vmax = max(finite) if finite else 1.0
    vmax = vmax if vmax > 0 else 1.0
    n = len(values)
    slot = (right - left) // max(n, 1)
    for i, v in enumerate(values):
        if not np.isfinite(v):
            continue
        bh = int((bottom - top - 2) * (v / vmax))
        x = left + i * slot + slot // 6
        bw = max(slot - slot // 3, 1)
        canvas[bottom - 1 - bh : bottom - 1, x : x + bw] = PALETTE[i % len(PALETTE)]
        _draw_text(canvas, bottom + 4, x, str(labels[i])[:8])
    _draw_text(canvas, top, 2, _fmt(vmax))
    write_png(path, canvas)
