"""Forward pass and analytic parameter gradients for zoo architectures."""

from __future__ import annotations

import numpy as np

from ..numkit.errors import NonFiniteError, ShapeError
from ..numkit.precision import storage_dtype
from ..numkit.rng import Rng
from ..numkit.tensor import ParamVector, Tensor
from . import autodiff as ad
from .arch import ArchSpec, AvgPool2, Conv3, Dense, Flatten, Relu, param_layout


class Network:
    """Executable form of an ArchSpec over the autodiff engine."""

    def __init__(self, arch: ArchSpec):
        self.arch = arch
        self.layout = param_layout(arch)
        self._slot_shapes = self._build_slot_shapes()

    def _build_slot_shapes(self):
        shapes = {}
        counters = {"dense": 0, "conv": 0}
        for layer in self.arch.layers:
            if isinstance(layer, Dense):
                counters["dense"] += 1
                name = f"dense{counters['dense']}"
                shapes[f"{name}.w"] = (layer.in_features, layer.out_features)
                if layer.bias:
                    shapes[f"{name}.b"] = (layer.out_features,)
            elif isinstance(layer, Conv3):
                counters["conv"] += 1
                name = f"conv{counters['conv']}"
                shapes[f"{name}.w"] = (layer.out_channels, layer.in_channels * 9)
                if layer.bias:
                    shapes[f"{name}.b"] = (layer.out_channels,)
        return shapes

    # -- parameters ---------------------------------------------------------

    def init_params(self, rng: Rng) -> ParamVector:
        """Kaiming fan-in scaled weights, zero biases."""
        values = np.zeros(sum(l for _, _, l in self.layout), dtype=storage_dtype())
        fan_ins = {}
        counters = {"dense": 0, "conv": 0}
        for layer in self.arch.layers:
            if isinstance(layer, Dense):
                counters["dense"] += 1
                fan_ins[f"dense{counters['dense']}.w"] = layer.in_features
            elif isinstance(layer, Conv3):
                counters["conv"] += 1
                fan_ins[f"conv{counters['conv']}.w"] = layer.in_channels * 9
        for name, offset, length in self.layout:
            if name.endswith(".w"):
                scale = np.sqrt(2.0 / fan_ins[name])
                values[offset : offset + length] = rng.normal(length, scale=scale)
        return ParamVector(values, self.layout, self.arch.arch_id)

    def leaves(self, flat: np.ndarray) -> list:
        """Per-slot leaf Vars viewing a flat parameter array."""
        out = []
        for name, offset, length in self.layout:
            out.append(ad.Var(flat[offset : offset + length].reshape(self._slot_shapes[name])))
        return out

    def flatten_vars(self, vars_list) -> np.ndarray:
        return np.concatenate([v.value.reshape(-1) for v in vars_list])

    # -- forward --------------------------------------------------------------

    def forward_vars(self, param_vars: list, x: ad.Var) -> ad.Var:
        """Logits Var from an input Var of shape [b, c, h, w]."""
        slot = 0
        cur = x
        shape = self.arch.input_shape
        for layer in self.arch.layers:
            if isinstance(layer, Flatten):
                cur = ad.reshape(cur, (cur.value.shape[0], -1))
                shape = (int(np.prod(shape)),)
            elif isinstance(layer, Relu):
                cur = ad.relu(cur)
            elif isinstance(layer, AvgPool2):
                c, h, w = shape
                cur = ad.avgpool2(cur)
                shape = (c, h // 2, w // 2)
            elif isinstance(layer, Dense):
                w_var = param_vars[slot]
                slot += 1
                cur = ad.matmul(cur, w_var)
                if layer.bias:
                    cur = ad.add(cur, param_vars[slot])
                    slot += 1
                shape = (layer.out_features,)
            elif isinstance(layer, Conv3):
                c, h, w = shape
                b = cur.value.shape[0]
                cols = ad.im2col3(cur)
                w_var = param_vars[slot]
                slot += 1
                out = ad.matmul(cols, ad.transpose(w_var))
                if layer.bias:
                    out = ad.add(out, param_vars[slot])
                    slot += 1
                out = ad.reshape(out, (b, h, w, layer.out_channels))
                cur = ad.permute(out, (0, 3, 1, 2))
                shape = (layer.out_channels, h, w)
        return cur

    def forward(self, params: ParamVector, images) -> np.ndarray:
        arr = images.array if isinstance(images, Tensor) else np.asarray(images)
        if params.arch_id != self.arch.arch_id:
            raise ShapeError(
                f"params for {params.arch_id!r} fed to {self.arch.arch_id!r}"
            )
        if tuple(arr.shape[1:]) != self.arch.input_shape:
            raise ShapeError(
                f"input shape {arr.shape[1:]} != arch input {self.arch.input_shape}"
            )
        out = self.forward_vars(self.leaves(params.values), ad.Var(arr)).value
        if not np.all(np.isfinite(out)):
            raise NonFiniteError("non-finite logits from forward pass")
        return out

    def loss_and_grad(self, params: ParamVector, images, soft_targets):
        """Soft-target cross-entropy and its analytic parameter gradient."""
        loss, grad, _ = self.loss_grad_logits(params, images, soft_targets)
        return loss, grad

    def loss_grad_logits(self, params: ParamVector, images, soft_targets):
        """As loss_and_grad, but also returns the logits paid for on the way."""
        arr = images.array if isinstance(images, Tensor) else np.asarray(images)
        targets = (
            soft_targets.array if isinstance(soft_targets, Tensor) else np.asarray(soft_targets)
        )
        leaves = self.leaves(params.values)
        logits = self.forward_vars(leaves, ad.Var(arr))
        loss = ad.cross_entropy_mean(logits, ad.constant(targets))
        grads = ad.grad(loss, leaves)
        flat = self.flatten_vars(grads)
        return (
            float(loss.value),
            ParamVector(flat, self.layout, self.arch.arch_id),
            logits.value,
        )


_network_cache: dict = {}


def get_network(arch: ArchSpec) -> Network:
    # arch_id uniquely identifies the architecture, so first-seen wins
    net = _network_cache.get(arch.arch_id)
    if net is None:
        net = Network(arch)
        _network_cache[arch.arch_id] = net
    return net


def init_network(arch: ArchSpec, rng: Rng) -> ParamVector:
    return get_network(arch).init_params(rng)


def forward(arch: ArchSpec, params: ParamVector, images) -> np.ndarray:
    return get_network(arch).forward(params, images)


def loss_grad(arch: ArchSpec, params: ParamVector, images, soft_targets):
    return get_network(arch).loss_and_grad(params, images, soft_targets)
