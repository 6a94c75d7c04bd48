"""Reverse-mode array autodiff with differentiable backward passes.

Each node's vjp is itself built out of engine ops, so `grad` applied to the
result of `grad` yields exact second derivatives (Hessian-vector and mixed
partials). This is the mechanism behind differentiating through unrolled SGD
steps: per step we take the gradient of (inner-gradient . adjoint) w.r.t.
parameters, images and logits.

Only the ops the classifier zoo needs are provided: elementwise arithmetic,
matmul, reshapes/permutes, gathers for im2col convolution, relu, exp/log and
reductions. No generic broadcasting beyond what those require.
"""

from __future__ import annotations

import numpy as np


class Var:
    """A value node. `parents` pairs each input with its adjoint function."""

    __slots__ = ("value", "parents")

    def __init__(self, value, parents=()):
        self.value = value
        self.parents = parents


def constant(x) -> Var:
    return Var(np.asarray(x))


def _topo(root: Var) -> list:
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order  # parents before consumers


def grad(output: Var, inputs, seed: Var | None = None) -> list:
    """Adjoints of `output` w.r.t. each Var in `inputs`.

    The returned adjoints are Vars whose graphs reach back into the forward
    graph, so they can be differentiated again. Unreachable inputs get zeros.
    """
    if seed is None:
        seed = constant(np.ones_like(output.value))
    order = _topo(output)
    needed = {id(v) for v in inputs}
    for node in order:
        if id(node) in needed:
            continue
        for parent, _ in node.parents:
            if id(parent) in needed:
                needed.add(id(node))
                break
    input_ids = {id(v) for v in inputs}
    adjoints = {id(output): seed}
    for node in reversed(order):
        a = adjoints.get(id(node))
        if a is None:
            continue
        for parent, vjp in node.parents:
            if id(parent) not in needed:
                continue
            contrib = vjp(a)
            prev = adjoints.get(id(parent))
            adjoints[id(parent)] = contrib if prev is None else add(prev, contrib)
        if id(node) not in input_ids:
            del adjoints[id(node)]
    return [
        adjoints.get(id(v), constant(np.zeros_like(v.value))) for v in inputs
    ]


# -- broadcasting helpers ------------------------------------------------


def _sum_to_array(x: np.ndarray, shape) -> np.ndarray:
    while x.ndim > len(shape):
        x = x.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and x.shape[i] != 1:
            x = x.sum(axis=i, keepdims=True)
    return x


def sum_to(a: Var, shape) -> Var:
    shape = tuple(shape)
    if a.value.shape == shape:
        return a
    return Var(
        _sum_to_array(a.value, shape),
        ((a, lambda g, sh=a.value.shape: broadcast_to(g, sh)),),
    )


def broadcast_to(a: Var, shape) -> Var:
    shape = tuple(shape)
    if a.value.shape == shape:
        return a
    # read-only view is fine: op values are never mutated in place
    return Var(
        np.broadcast_to(a.value, shape),
        ((a, lambda g, sh=a.value.shape: sum_to(g, sh)),),
    )


# -- arithmetic -----------------------------------------------------------


def add(a: Var, b: Var) -> Var:
    return Var(
        a.value + b.value,
        (
            (a, lambda g, sh=a.value.shape: sum_to(g, sh)),
            (b, lambda g, sh=b.value.shape: sum_to(g, sh)),
        ),
    )


def sub(a: Var, b: Var) -> Var:
    return Var(
        a.value - b.value,
        (
            (a, lambda g, sh=a.value.shape: sum_to(g, sh)),
            (b, lambda g, sh=b.value.shape: sum_to(neg(g), sh)),
        ),
    )


def neg(a: Var) -> Var:
    return Var(-a.value, ((a, neg),))


def mul(a: Var, b: Var) -> Var:
    return Var(
        a.value * b.value,
        (
            (a, lambda g: sum_to(mul(g, b), a.value.shape)),
            (b, lambda g: sum_to(mul(g, a), b.value.shape)),
        ),
    )


def div(a: Var, b: Var) -> Var:
    return Var(
        a.value / b.value,
        (
            (a, lambda g: sum_to(div(g, b), a.value.shape)),
            (b, lambda g: sum_to(neg(mul(g, div(a, mul(b, b)))), b.value.shape)),
        ),
    )


def mulc(a: Var, c) -> Var:
    """Multiply by a constant (no gradient through c)."""
    return Var(a.value * c, ((a, lambda g: sum_to(mulc(g, c), a.value.shape)),))


def addc(a: Var, c) -> Var:
    return Var(a.value + c, ((a, lambda g: sum_to(g, a.value.shape)),))


def exp(a: Var) -> Var:
    out = Var(np.exp(a.value))
    out.parents = ((a, lambda g: mul(g, out)),)
    return out


def log(a: Var) -> Var:
    return Var(np.log(a.value), ((a, lambda g: div(g, a)),))


def relu(a: Var) -> Var:
    mask = (a.value > 0).astype(a.value.dtype)
    return Var(a.value * mask, ((a, lambda g: mulc(g, mask)),))


# -- linear algebra and shape ops -----------------------------------------


def matmul(a: Var, b: Var) -> Var:
    return Var(
        a.value @ b.value,
        (
            (a, lambda g: matmul(g, transpose(b))),
            (b, lambda g: matmul(transpose(a), g)),
        ),
    )


def transpose(a: Var) -> Var:
    return Var(a.value.T, ((a, transpose),))


def permute(a: Var, axes) -> Var:
    inverse = tuple(np.argsort(axes))
    return Var(
        np.transpose(a.value, axes),
        ((a, lambda g: permute(g, inverse)),),
    )


def reshape(a: Var, shape) -> Var:
    return Var(
        a.value.reshape(shape),
        ((a, lambda g, sh=a.value.shape: reshape(g, sh)),),
    )


def sumall(a: Var) -> Var:
    return Var(
        np.asarray(a.value.sum()),
        ((a, lambda g, sh=a.value.shape: broadcast_to(g, sh)),),
    )


def sum_axes(a: Var, axes) -> Var:
    """Sum over `axes` with keepdims=True."""
    axes = tuple(axes)
    return Var(
        a.value.sum(axis=axes, keepdims=True),
        ((a, lambda g, sh=a.value.shape: broadcast_to(g, sh)),),
    )


def sum_last(a: Var) -> Var:
    return sum_axes(a, (a.value.ndim - 1,))


# -- im2col convolution support (linear ops, zero padding 1 built in) -------


def im2col3(a: Var) -> Var:
    """3x3 patch matrix [b*h*w, c*9] from a [b, c, h, w] input (padding 1)."""
    b, c, h, w = a.value.shape
    padded = np.zeros((b, c, h + 2, w + 2), dtype=a.value.dtype)
    padded[:, :, 1 : 1 + h, 1 : 1 + w] = a.value
    windows = np.lib.stride_tricks.sliding_window_view(padded, (3, 3), axis=(2, 3))
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(b * h * w, c * 9)
    return Var(cols, ((a, lambda g: col2im3(g, b, c, h, w)),))


def col2im3(a: Var, b: int, c: int, h: int, w: int) -> Var:
    """Adjoint of im2col3: nine shifted slice-adds, then the padding cropped."""
    g = a.value.reshape(b, h, w, c, 3, 3).transpose(0, 3, 1, 2, 4, 5)
    out = np.zeros((b, c, h + 2, w + 2), dtype=a.value.dtype)
    for di in range(3):
        for dj in range(3):
            out[:, :, di : di + h, dj : dj + w] += g[:, :, :, :, di, dj]
    return Var(out[:, :, 1 : 1 + h, 1 : 1 + w], ((a, im2col3),))


# -- fused nonlinear primitives ---------------------------------------------
# Their vjps are built from engine ops (often referencing the output node),
# so second derivatives remain exact.


def avgpool2(a: Var) -> Var:
    """2x2 average pooling of a [b, c, h, w] array (h, w even)."""
    b, c, h, w = a.value.shape
    value = a.value.reshape(b, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))
    return Var(value, ((a, pool2_expand),))


def pool2_expand(a: Var) -> Var:
    """Adjoint of avgpool2: 2x2 nearest upsample scaled by 1/4."""
    b, c, h2, w2 = a.value.shape
    value = np.repeat(np.repeat(a.value, 2, axis=2), 2, axis=3) * a.value.dtype.type(0.25)
    return Var(value, ((a, avgpool2),))


def _softmax_array(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax_var(a: Var) -> Var:
    """Row-wise softmax; vjp s*(g - sum(g*s)) reuses the output node."""
    out = Var(_softmax_array(a.value))
    out.parents = ((a, lambda g: mul(out, sub(g, sum_last(mul(g, out))))),)
    return out


def logsumexp(a: Var) -> Var:
    """Row-wise stabilized logsumexp over the last axis, keepdims."""
    m = a.value.max(axis=-1, keepdims=True)
    value = np.log(np.exp(a.value - m).sum(axis=-1, keepdims=True)) + m
    return Var(value, ((a, lambda g: mul(g, softmax_var(a))),))


def cross_entropy_mean(logits: Var, targets: Var) -> Var:
    """Mean over rows of -sum_j targets_j * log_softmax(logits)_j."""
    z, t = logits.value, targets.value
    m = z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z - m).sum(axis=-1, keepdims=True)) + m
    inv_b = 1.0 / z.shape[0]
    value = np.asarray(((lse[:, 0] * t.sum(axis=-1)) - (t * z).sum(axis=-1)).sum() * inv_b)

    def vjp_logits(g):
        # d/dz: (softmax(z) * sum_t - t) / b, with sum_t = 1 for distributions
        row_t = sum_last(targets)
        return mul(g, mulc(sub(mul(softmax_var(logits), row_t), targets), inv_b))

    def vjp_targets(g):
        return mul(g, mulc(sub(logsumexp(logits), logits), inv_b))

    return Var(value, ((logits, vjp_logits), (targets, vjp_targets)))
