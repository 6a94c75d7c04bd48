"""Built-in synthetic image datasets and channel normalization.

The blob dataset is the standard desk-scale distillation source: each class
has a template image (a mixture of Gaussian bumps), and samples are templates
blended toward a random other class, jittered and noised. The blend weight
controls difficulty: most samples are near-prototypical (easy), a fraction is
blended far toward another class (hard), so experts learn the coarse class
layout early and grind on the blended samples late.
"""

from __future__ import annotations

import numpy as np

from .rng import Rng
from .tensor import LabeledDataset, Tensor


def _bump(size: int, cy: float, cx: float, sigma: float) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    return np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (2.0 * sigma**2))


def _blob_templates(num_classes: int, size: int) -> np.ndarray:
    """One [size, size] template per class, values in [0, 1]."""
    center = (size - 1) / 2.0
    templates = np.zeros((num_classes, size, size), dtype=np.float64)
    for c in range(num_classes):
        angle = 2.0 * np.pi * c / num_classes
        radius = 0.30 * size if c % 2 == 0 else 0.18 * size
        cy = center + radius * np.sin(angle)
        cx = center + radius * np.cos(angle)
        sigma = size * (0.11 + 0.02 * (c % 3))
        t = _bump(size, cy, cx, sigma)
        # secondary bump opposite the primary one, class-specific weight
        t += (0.35 + 0.05 * (c % 2)) * _bump(
            size, center - 0.6 * (cy - center), center - 0.6 * (cx - center), sigma * 0.8
        )
        templates[c] = t / t.max()
    return templates


def _shift(img: np.ndarray, dy: int, dx: int) -> np.ndarray:
    out = np.zeros_like(img)
    h, w = img.shape
    ys = slice(max(dy, 0), min(h + dy, h))
    xs = slice(max(dx, 0), min(w + dx, w))
    ys_src = slice(max(-dy, 0), min(h - dy, h))
    xs_src = slice(max(-dx, 0), min(w - dx, w))
    out[ys, xs] = img[ys_src, xs_src]
    return out


def gaussian_blobs(
    n: int,
    rng: Rng,
    num_classes: int = 10,
    image_size: int = 8,
    hard_fraction: float = 0.25,
    noise: float = 0.06,
    name: str = "blobs",
) -> LabeledDataset:
    """Blobs-as-images classification set with an easy/hard sample mix."""
    templates = _blob_templates(num_classes, image_size)
    labels = np.arange(n, dtype=np.int64) % num_classes
    labels = labels[rng.permutation(n)]

    hard = rng.uniform(0.0, 1.0, n, dtype=np.float64) < hard_fraction
    mix = np.where(
        hard,
        rng.uniform(0.30, 0.50, n, dtype=np.float64),
        rng.uniform(0.0, 0.08, n, dtype=np.float64),
    )
    other = (labels + rng.integers(1, num_classes, n)) % num_classes
    amp = rng.uniform(0.8, 1.2, n, dtype=np.float64)
    shifts = rng.integers(-1, 2, (n, 2))
    pix_noise = rng.normal((n, image_size, image_size), scale=noise, dtype=np.float64)

    images = np.empty((n, 1, image_size, image_size), dtype=np.float64)
    for i in range(n):
        img = (1.0 - mix[i]) * templates[labels[i]] + mix[i] * templates[other[i]]
        img = _shift(img, int(shifts[i, 0]), int(shifts[i, 1]))
        images[i, 0] = amp[i] * img + pix_noise[i]
    np.clip(images, 0.0, 1.0, out=images)

    meta = {"value_range": (0.0, 1.0), "generator": "gaussian_blobs"}
    return LabeledDataset(Tensor.from_array(images), labels, num_classes, name, meta)


def two_moons_images(
    n: int,
    rng: Rng,
    image_size: int = 8,
    noise: float = 0.08,
    name: str = "moons",
) -> LabeledDataset:
    """Two interleaved moons rendered as single bumps on an image grid."""
    labels = np.arange(n, dtype=np.int64) % 2
    labels = labels[rng.permutation(n)]
    t = rng.uniform(0.0, np.pi, n, dtype=np.float64)
    x = np.where(labels == 0, np.cos(t), 1.0 - np.cos(t))
    y = np.where(labels == 0, np.sin(t), 0.5 - np.sin(t))
    x = x + rng.normal(n, scale=noise, dtype=np.float64)
    y = y + rng.normal(n, scale=noise, dtype=np.float64)

    # map the moon bounding box into the pixel grid with a 1px margin
    lo, hi = -1.3, 2.3
    span = image_size - 3
    px = 1.0 + (x - lo) / (hi - lo) * span
    py = 1.0 + (y + 1.0) / (hi - lo) * span

    images = np.empty((n, 1, image_size, image_size), dtype=np.float64)
    for i in range(n):
        images[i, 0] = _bump(image_size, py[i], px[i], 0.9)
    np.clip(images, 0.0, 1.0, out=images)

    meta = {"value_range": (0.0, 1.0), "generator": "two_moons_images"}
    return LabeledDataset(Tensor.from_array(images), labels, 2, name, meta)


def standardize(ds: LabeledDataset, stats: tuple | None = None) -> LabeledDataset:
    """Per-channel mean/std normalization; constants stored in metadata.

    Pass `stats=(mean, std)` to reuse a training split's constants.
    """
    arr = ds.images.array.astype(np.float64)
    if stats is None:
        mean = arr.mean(axis=(0, 2, 3))
        std = arr.std(axis=(0, 2, 3))
        std = np.where(std < 1e-8, 1.0, std)
    else:
        mean = np.asarray(stats[0], dtype=np.float64)
        std = np.asarray(stats[1], dtype=np.float64)
    out = (arr - mean[None, :, None, None]) / std[None, :, None, None]
    meta = dict(ds.meta)
    meta["norm_mean"] = tuple(float(v) for v in mean)
    meta["norm_std"] = tuple(float(v) for v in std)
    return LabeledDataset(Tensor.from_array(out), ds.labels, ds.num_classes, ds.name, meta)


def denormalize(images: np.ndarray, meta: dict) -> np.ndarray:
    """Invert `standardize` back to the declared value range."""
    mean = np.asarray(meta.get("norm_mean", (0.0,)), dtype=np.float64)
    std = np.asarray(meta.get("norm_std", (1.0,)), dtype=np.float64)
    return images.astype(np.float64) * std[None, :, None, None] + mean[None, :, None, None]
