"""Capacity-tiered classifier architectures and their text descriptors.

Descriptors: "mlp-<width>" is one hidden layer of that width;
"conv<depth>-<width>" is `depth` 3x3 conv + relu blocks with channel
doubling, a 2x2 average pool after each block while the spatial size is
even, and a linear head. No normalization layers anywhere, so flattened
parameter distances are unambiguous.

The full arch id embeds input shape and classes, e.g. "conv3-16:1x8x8:10".
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numkit.errors import ShapeError

TIERS = {"small": "mlp-64", "medium": "conv3-8", "large": "conv3-16"}


@dataclass(frozen=True)
class Dense:
    in_features: int
    out_features: int
    bias: bool = True


@dataclass(frozen=True)
class Conv3:
    """3x3 convolution, stride 1, zero padding 1 (shape-preserving)."""

    in_channels: int
    out_channels: int
    bias: bool = True


@dataclass(frozen=True)
class Relu:
    pass


@dataclass(frozen=True)
class AvgPool2:
    pass


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass
class ArchSpec:
    arch_id: str
    input_shape: tuple  # (c, h, w)
    num_classes: int
    layers: list
    tier: str = "custom"
    shapes: list = field(default_factory=list)  # per-layer output shapes

    def __post_init__(self):
        self.input_shape = tuple(int(s) for s in self.input_shape)
        self.shapes = _infer_shapes(self.layers, self.input_shape, self.num_classes)

    @property
    def param_count(self) -> int:
        return sum(length for _, _, length in param_layout(self))


def _infer_shapes(layers, input_shape, num_classes):
    """Validate that layer shapes compose; returns each layer's output shape."""
    shape = tuple(input_shape)
    out_shapes = []
    for layer in layers:
        if isinstance(layer, Conv3):
            c, h, w = shape
            if c != layer.in_channels:
                raise ShapeError(f"conv expects {layer.in_channels} channels, got {c}")
            shape = (layer.out_channels, h, w)
        elif isinstance(layer, AvgPool2):
            c, h, w = shape
            if h % 2 or w % 2:
                raise ShapeError(f"pool needs even spatial dims, got {h}x{w}")
            shape = (c, h // 2, w // 2)
        elif isinstance(layer, Flatten):
            shape = (int(np.prod(shape)),)
        elif isinstance(layer, Dense):
            if shape != (layer.in_features,):
                raise ShapeError(
                    f"dense expects ({layer.in_features},), got {shape}"
                )
            shape = (layer.out_features,)
        elif isinstance(layer, Relu):
            pass
        else:
            raise ShapeError(f"unknown layer {layer!r}")
        out_shapes.append(shape)
    if shape != (num_classes,):
        raise ShapeError(f"head produces {shape}, expected ({num_classes},)")
    return out_shapes


def param_layout(arch: ArchSpec) -> tuple:
    """(name, offset, length) table for the flattened parameter vector."""
    entries = []
    offset = 0
    counters = {"dense": 0, "conv": 0}
    for layer in arch.layers:
        if isinstance(layer, Dense):
            counters["dense"] += 1
            name = f"dense{counters['dense']}"
            wlen = layer.in_features * layer.out_features
            entries.append((f"{name}.w", offset, wlen))
            offset += wlen
            if layer.bias:
                entries.append((f"{name}.b", offset, layer.out_features))
                offset += layer.out_features
        elif isinstance(layer, Conv3):
            counters["conv"] += 1
            name = f"conv{counters['conv']}"
            wlen = layer.out_channels * layer.in_channels * 9
            entries.append((f"{name}.w", offset, wlen))
            offset += wlen
            if layer.bias:
                entries.append((f"{name}.b", offset, layer.out_channels))
                offset += layer.out_channels
    return tuple(entries)


def make_arch(descriptor: str, input_shape, num_classes: int) -> ArchSpec:
    """Build an ArchSpec from a descriptor like "mlp-64" or "conv3-16"."""
    c, h, w = (int(s) for s in input_shape)
    kind, _, width_s = descriptor.partition("-")
    try:
        width = int(width_s)
    except ValueError:
        raise ShapeError(f"bad architecture descriptor {descriptor!r}") from None
    layers: list = []
    if kind == "mlp":
        dim = c * h * w
        layers = [Flatten(), Dense(dim, width), Relu(), Dense(width, num_classes)]
    elif kind.startswith("conv") and kind[4:].isdigit():
        depth = int(kind[4:])
        if depth < 1:
            raise ShapeError(f"bad architecture descriptor {descriptor!r}")
        ch, hh, ww = c, h, w
        out_ch = width
        for _ in range(depth):
            layers += [Conv3(ch, out_ch), Relu()]
            ch = out_ch
            if hh % 2 == 0 and ww % 2 == 0 and hh >= 2 and ww >= 2:
                layers.append(AvgPool2())
                hh, ww = hh // 2, ww // 2
            out_ch *= 2
        layers += [Flatten(), Dense(ch * hh * ww, num_classes)]
    else:
        raise ShapeError(f"bad architecture descriptor {descriptor!r}")
    tier = next((t for t, d in TIERS.items() if d == descriptor), "custom")
    arch_id = f"{descriptor}:{c}x{h}x{w}:{num_classes}"
    return ArchSpec(arch_id, (c, h, w), num_classes, layers, tier)


def parse_arch_id(arch_id: str) -> ArchSpec:
    """Inverse of the arch_id format produced by make_arch."""
    try:
        descriptor, shape_s, classes_s = arch_id.split(":")
        c, h, w = (int(s) for s in shape_s.split("x"))
        num_classes = int(classes_s)
    except ValueError:
        raise ShapeError(f"bad arch id {arch_id!r}") from None
    return make_arch(descriptor, (c, h, w), num_classes)


def zoo(input_shape, num_classes: int) -> dict:
    """The capacity-tiered zoo: small < medium < large in parameter count."""
    return {tier: make_arch(desc, input_shape, num_classes) for tier, desc in TIERS.items()}
