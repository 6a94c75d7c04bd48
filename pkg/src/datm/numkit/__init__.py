from .errors import (
    ChecksumError,
    ClassExhausted,
    ConfigError,
    DatmError,
    DegenerateSegment,
    DivergentUnroll,
    FormatError,
    NonFiniteError,
    ShapeError,
)
from .dataset import denormalize, gaussian_blobs, standardize, two_moons_images
from .io_formats import load_dset, load_idx, save_dset, write_idx
from .ops import (
    ONE_HOT_MARGIN,
    cross_entropy,
    log_softmax,
    one_hot,
    one_hot_logits,
    param_distance_sq,
    softmax,
)
from .precision import precision, set_precision, set_strict, storage_dtype, strict_mode
from .rng import Rng
from .tensor import LabeledDataset, ParamVector, Tensor
from .zca import WhiteningTransform, zca_whiten

__all__ = [
    "ChecksumError",
    "ClassExhausted",
    "ConfigError",
    "DatmError",
    "DegenerateSegment",
    "DivergentUnroll",
    "FormatError",
    "NonFiniteError",
    "ShapeError",
    "denormalize",
    "gaussian_blobs",
    "standardize",
    "two_moons_images",
    "load_dset",
    "load_idx",
    "save_dset",
    "write_idx",
    "ONE_HOT_MARGIN",
    "cross_entropy",
    "log_softmax",
    "one_hot",
    "one_hot_logits",
    "param_distance_sq",
    "softmax",
    "precision",
    "set_precision",
    "set_strict",
    "storage_dtype",
    "strict_mode",
    "Rng",
    "LabeledDataset",
    "ParamVector",
    "Tensor",
    "WhiteningTransform",
    "zca_whiten",
]
