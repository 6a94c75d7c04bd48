"""Unrolled SGD on synthetic data and exact reverse-mode meta-gradients.

The tape records every intermediate parameter vector of the unroll plus
frozen copies of the synthetic inputs. The backward pass walks the steps in
reverse and, for each one, rebuilds that single step's graph to form the
scalar s = (inner gradient . adjoint); differentiating s gives the
Hessian-vector product (for the adjoint recursion) and the mixed partials
w.r.t. images and logits. Only one step's graph is alive at a time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numkit.errors import DivergentUnroll, ShapeError
from ..numkit.tensor import ParamVector
from . import autodiff as ad
from .arch import ArchSpec
from .network import get_network

DIVERGENCE_LIMIT = 1e6


@dataclass
class GradTape:
    """Recorded inner unroll, sufficient to backpropagate to the synthetic set."""

    arch: ArchSpec
    theta_steps: list      # flat parameter arrays, length steps+1
    batch_plan: list       # per-step index arrays
    images: np.ndarray     # [count, c, h, w], frozen copy
    logits: np.ndarray     # [count, k], frozen copy
    alpha: float
    layout: tuple
    arch_id: str

    @property
    def steps(self) -> int:
        return len(self.theta_steps) - 1

    def final_params(self) -> ParamVector:
        return ParamVector(self.theta_steps[-1].copy(), self.layout, self.arch_id)

    def replay(self) -> ParamVector:
        """Re-run the recorded steps; bit-exact against the recorded output."""
        net = get_network(self.arch)
        theta = self.theta_steps[0].copy()
        for idx in self.batch_plan:
            g = _inner_grad(net, theta, self.images[idx], self.logits[idx])
            theta = theta - np.asarray(self.alpha, dtype=theta.dtype) * g
        return ParamVector(theta, self.layout, self.arch_id)


@dataclass
class MetaGrads:
    d_images: np.ndarray
    d_logits: np.ndarray
    d_alpha: float
    d_theta0: np.ndarray  # adjoint at the unroll start (diagnostic)


def _inner_grad(net, theta_flat, x_batch, logit_batch) -> np.ndarray:
    """Flat gradient of the soft-label cross-entropy at theta."""
    leaves = net.leaves(theta_flat)
    targets = ad.softmax_var(ad.constant(logit_batch))
    loss = ad.cross_entropy_mean(net.forward_vars(leaves, ad.Var(x_batch)), targets)
    grads = ad.grad(loss, leaves)
    return net.flatten_vars(grads)


def unroll_record(
    theta0: ParamVector,
    syn,
    steps: int,
    batch_plan,
    alpha: float | None = None,
):
    """Run `steps` plain-SGD updates on the synthetic set; returns (theta, tape).

    `syn` provides images, logits and (unless overridden) the trainable inner
    learning rate. Soft labels are softmax(logits), recomputed each step so
    the tape captures the exact forward dynamics.
    """
    arch = syn.arch
    net = get_network(arch)
    if theta0.arch_id != arch.arch_id:
        raise ShapeError(f"theta for {theta0.arch_id!r}, synthetic set for {arch.arch_id!r}")
    alpha = float(syn.alpha if alpha is None else alpha)
    if alpha < 0:
        raise ShapeError("alpha must be positive")
    batch_plan = [np.asarray(idx, dtype=np.int64) for idx in batch_plan]
    if len(batch_plan) != steps:
        raise ShapeError(f"batch plan covers {len(batch_plan)} steps, need {steps}")
    for i, idx in enumerate(batch_plan):
        if idx.size == 0:
            raise ShapeError(f"empty batch at step {i}")

    images = syn.images.array.copy()
    logits = syn.logits.array.copy()
    theta = theta0.values.copy()
    theta_steps = [theta.copy()]
    a = np.asarray(alpha, dtype=theta.dtype)
    for i, idx in enumerate(batch_plan):
        g = _inner_grad(net, theta, images[idx], logits[idx])
        theta = theta - a * g
        if not np.all(np.isfinite(theta)) or np.abs(theta).max() > DIVERGENCE_LIMIT:
            raise DivergentUnroll(i)
        theta_steps.append(theta.copy())

    tape = GradTape(
        arch=arch,
        theta_steps=theta_steps,
        batch_plan=batch_plan,
        images=images,
        logits=logits,
        alpha=alpha,
        layout=theta0.layout,
        arch_id=theta0.arch_id,
    )
    return ParamVector(theta.copy(), theta0.layout, theta0.arch_id), tape


def meta_backward(tape: GradTape, dloss_dtheta_final: ParamVector) -> MetaGrads:
    """Reverse-mode derivatives of the outer scalar through the whole unroll.

    Seeds the adjoint at the final parameters and accumulates, per reverse
    step: d_alpha -= g.v, adjoint v -= alpha*Hv, and the mixed partials
    -alpha * d(g.v)/d(images|logits) into the synthetic gradients.
    """
    if dloss_dtheta_final.arch_id != tape.arch_id or dloss_dtheta_final.layout != tape.layout:
        raise ShapeError("seed gradient layout does not match tape")
    net = get_network(tape.arch)
    v = dloss_dtheta_final.values.copy()
    d_images = np.zeros_like(tape.images)
    d_logits = np.zeros_like(tape.logits)
    d_alpha = 0.0
    for i in reversed(range(tape.steps)):
        idx = tape.batch_plan[i]
        theta_leaves = net.leaves(tape.theta_steps[i])
        x_leaf = ad.Var(tape.images[idx])
        l_leaf = ad.Var(tape.logits[idx])
        targets = ad.softmax_var(l_leaf)
        loss = ad.cross_entropy_mean(net.forward_vars(theta_leaves, x_leaf), targets)
        g_vars = ad.grad(loss, theta_leaves)

        # s = (inner gradient . adjoint); its gradients are Hv and the mixed partials
        v_slots = [
            v[o : o + l].reshape(g.value.shape)
            for g, (_, o, l) in zip(g_vars, tape.layout)
        ]
        s = None
        for g_var, v_slot in zip(g_vars, v_slots):
            term = ad.sumall(ad.mulc(g_var, v_slot))
            s = term if s is None else ad.add(s, term)
        second = ad.grad(s, theta_leaves + [x_leaf, l_leaf])
        hv = net.flatten_vars(second[:-2])

        d_alpha -= float(s.value)
        np.add.at(d_images, idx, -tape.alpha * second[-2].value)
        np.add.at(d_logits, idx, -tape.alpha * second[-1].value)
        v = v - tape.alpha * hv
    return MetaGrads(d_images=d_images, d_logits=d_logits, d_alpha=d_alpha, d_theta0=v)
