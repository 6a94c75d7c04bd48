"""Dense row-major tensors and flattened parameter vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteError, ShapeError
from .precision import storage_dtype


class Tensor:
    """Dense float array: a shape plus a flat row-major buffer.

    Carrier type for images, logits and parameters at module boundaries.
    Internally code works on the ndarray view (`array`).
    """

    __slots__ = ("shape", "data")

    def __init__(self, shape, data):
        shape = tuple(int(s) for s in shape)
        if any(s <= 0 for s in shape):
            raise ShapeError(f"non-positive dimension in shape {shape}")
        data = np.asarray(data).reshape(-1)
        if data.size != int(np.prod(shape)):
            raise ShapeError(f"data length {data.size} != prod{shape}")
        self.shape = shape
        self.data = data

    @classmethod
    def from_array(cls, arr) -> "Tensor":
        arr = np.asarray(arr, dtype=storage_dtype())
        return cls(arr.shape, arr.reshape(-1))

    @classmethod
    def zeros(cls, shape, dtype=None) -> "Tensor":
        dtype = dtype or storage_dtype()
        return cls(shape, np.zeros(int(np.prod(shape)), dtype=dtype))

    @property
    def array(self) -> np.ndarray:
        """Row-major ndarray view of the buffer."""
        return self.data.reshape(self.shape)

    def copy(self) -> "Tensor":
        return Tensor(self.shape, self.data.copy())

    def check_finite(self, what: str = "tensor") -> "Tensor":
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteError(f"non-finite {what}")
        return self

    def __eq__(self, other):
        return (
            isinstance(other, Tensor)
            and self.shape == other.shape
            and np.array_equal(self.data, other.data)
        )

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"


@dataclass
class ParamVector:
    """Flattened model parameters plus the layer layout to unflatten them.

    layout: ordered (name, offset, length) entries; offsets are contiguous
    and must cover `values` exactly.
    """

    values: np.ndarray
    layout: tuple
    arch_id: str

    def __post_init__(self):
        self.values = np.asarray(self.values).reshape(-1)
        self.layout = tuple((str(n), int(o), int(l)) for n, o, l in self.layout)
        off = 0
        for name, offset, length in self.layout:
            if offset != off or length < 0:
                raise ShapeError(f"non-contiguous layout entry {name!r}")
            off += length
        if off != self.values.size:
            raise ShapeError(
                f"layout covers {off} values, vector has {self.values.size}"
            )

    def same_layout(self, other: "ParamVector") -> bool:
        return self.arch_id == other.arch_id and self.layout == other.layout

    def require_same_layout(self, other: "ParamVector") -> None:
        if not self.same_layout(other):
            raise ShapeError(
                f"parameter layout mismatch: {self.arch_id!r} vs {other.arch_id!r}"
            )

    def slice(self, name: str) -> np.ndarray:
        for n, offset, length in self.layout:
            if n == name:
                return self.values[offset : offset + length]
        raise KeyError(name)

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.layout, self.arch_id)

    def astype(self, dtype) -> "ParamVector":
        return ParamVector(self.values.astype(dtype), self.layout, self.arch_id)

    @property
    def size(self) -> int:
        return self.values.size


@dataclass
class LabeledDataset:
    """Images with integer class labels.

    images: Tensor [n, c, h, w]; labels: int array of length n. `meta` holds
    bookkeeping such as the declared value range and normalization constants.
    """

    images: Tensor
    labels: np.ndarray
    num_classes: int
    name: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if len(self.images.shape) != 4:
            raise ShapeError(f"images must be [n,c,h,w], got {self.images.shape}")
        if self.images.shape[0] != self.labels.size:
            raise ShapeError("images row count != labels length")
        if self.num_classes < 1:
            raise ShapeError("num_classes must be positive")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ShapeError("label outside [0, num_classes)")

    @property
    def n(self) -> int:
        return self.labels.size

    @property
    def image_shape(self) -> tuple:
        return self.images.shape[1:]

    def subset(self, indices) -> "LabeledDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(
            Tensor.from_array(self.images.array[indices]),
            self.labels[indices],
            self.num_classes,
            self.name,
            dict(self.meta),
        )

    def class_indices(self, c: int) -> np.ndarray:
        return np.nonzero(self.labels == c)[0]

    def require_every_class(self) -> None:
        counts = np.bincount(self.labels, minlength=self.num_classes)
        missing = np.nonzero(counts == 0)[0]
        if missing.size:
            raise ShapeError(f"classes with no samples: {missing.tolist()}")
