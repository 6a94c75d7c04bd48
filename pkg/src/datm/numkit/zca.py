"""ZCA whitening of image datasets.

W = E diag(1/sqrt(lambda + eps)) E^T from the eigendecomposition of the pixel
covariance. The fitted transform is reusable so a test split can be whitened
with the training split's statistics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DatmError
from .precision import storage_dtype
from .tensor import LabeledDataset, Tensor


@dataclass
class WhiteningTransform:
    mean: np.ndarray       # [dim], f64
    matrix: np.ndarray     # [dim, dim], f64
    epsilon: float

    def apply(self, images: Tensor) -> Tensor:
        n = images.shape[0]
        flat = images.array.reshape(n, -1).astype(np.float64)
        if flat.shape[1] != self.mean.size:
            raise DatmError(
                f"whitening dim {self.mean.size} != image dim {flat.shape[1]}"
            )
        out = (flat - self.mean) @ self.matrix
        return Tensor.from_array(out.reshape(images.shape).astype(storage_dtype()))

    def apply_dataset(self, ds: LabeledDataset) -> LabeledDataset:
        meta = dict(ds.meta)
        meta["zca"] = True
        meta["zca_epsilon"] = self.epsilon
        return LabeledDataset(self.apply(ds.images), ds.labels, ds.num_classes, ds.name, meta)


def zca_whiten(ds: LabeledDataset, epsilon: float = 1e-6):
    """Fit ZCA on `ds` and return (whitened dataset, reusable transform)."""
    if ds.n < 2:
        raise DatmError("ZCA needs at least 2 samples")
    if epsilon <= 0:
        raise DatmError("ZCA epsilon must be positive")
    flat = ds.images.array.reshape(ds.n, -1).astype(np.float64)
    mean = flat.mean(axis=0)
    centered = flat - mean
    cov = centered.T @ centered / ds.n
    try:
        eigvals, eigvecs = np.linalg.eigh(cov)
    except np.linalg.LinAlgError as exc:
        raise DatmError(
            f"covariance eigendecomposition failed: {exc}; "
            f"dim={cov.shape[0]}, trace={np.trace(cov):.3e}"
        ) from exc
    # eigh can return tiny negative eigenvalues for rank-deficient covariance
    eigvals = np.maximum(eigvals, 0.0)
    matrix = (eigvecs / np.sqrt(eigvals + epsilon)) @ eigvecs.T
    transform = WhiteningTransform(mean=mean, matrix=matrix, epsilon=float(epsilon))
    return transform.apply_dataset(ds), transform
