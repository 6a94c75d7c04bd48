import numpy as np
import pytest

from datm import numkit as nk
from datm.models import (
    ArchSpec,
    Dense,
    Flatten,
    Relu,
    TIERS,
    forward,
    get_network,
    init_network,
    loss_grad,
    make_arch,
    parse_arch_id,
    zoo,
)

from oracles import central_diff, max_rel_error, probe_indices


class TestArchSpec:
    def test_descriptor_roundtrip(self):
        for desc in ("mlp-64", "conv3-8", "conv2-4"):
            arch = make_arch(desc, (1, 8, 8), 10)
            again = parse_arch_id(arch.arch_id)
            assert again.arch_id == arch.arch_id
            assert again.param_count == arch.param_count

    def test_bad_descriptor(self):
        with pytest.raises(nk.ShapeError):
            make_arch("resnet-18", (1, 8, 8), 10)
        with pytest.raises(nk.ShapeError):
            make_arch("mlp-x", (1, 8, 8), 10)

    def test_shape_composition_checked(self):
        with pytest.raises(nk.ShapeError):
            ArchSpec("bad:1x2x2:3", (1, 2, 2), 3, [Flatten(), Dense(5, 3)])

    def test_capacity_ordering(self):
        z = zoo((1, 8, 8), 10)
        counts = [z[t].param_count for t in ("small", "medium", "large")]
        assert counts[0] < counts[1] < counts[2]

    def test_tiers_cover_expected_families(self):
        assert TIERS["small"].startswith("mlp")
        assert TIERS["medium"].startswith("conv")
        assert TIERS["large"].startswith("conv")


class TestInit:
    def test_deterministic(self):
        arch = make_arch("conv2-4", (1, 8, 8), 10)
        a = init_network(arch, nk.Rng(3))
        b = init_network(arch, nk.Rng(3))
        assert np.array_equal(a.values, b.values)

    def test_biases_zero(self):
        arch = make_arch("conv2-4", (1, 8, 8), 10)
        params = init_network(arch, nk.Rng(3))
        for name, _, _ in params.layout:
            if name.endswith(".b"):
                assert np.all(params.slice(name) == 0.0)

    def test_kaiming_scale(self):
        # fan_in = 64 for the hidden layer of mlp-64 on 8x8 inputs
        arch = make_arch("mlp-64", (1, 8, 8), 10)
        params = init_network(arch, nk.Rng(4))
        w = params.slice("dense1.w")
        expected = np.sqrt(2.0 / 64)
        assert abs(w.std() - expected) / expected < 0.2


class TestForward:
    def test_zero_params_zero_logits(self):
        arch = make_arch("conv2-4", (1, 8, 8), 10)
        params = init_network(arch, nk.Rng(1))
        params.values[:] = 0.0
        out = forward(arch, params, nk.Rng(2).normal((5, 1, 8, 8)))
        assert np.all(out == 0.0)

    def test_batch_row_independence(self):
        arch = make_arch("conv2-4", (1, 8, 8), 10)
        params = init_network(arch, nk.Rng(1))
        x = nk.Rng(2).normal((6, 1, 8, 8))
        out = forward(arch, params, x)
        perm = np.array([3, 1, 5, 0, 2, 4])
        assert np.allclose(forward(arch, params, x[perm]), out[perm])

    def test_hand_evaluated_linear_model(self):
        # 2-parameter linear head on a fixed 1-pixel input
        arch = ArchSpec("lin:1x1x1:2", (1, 1, 1), 2, [Flatten(), Dense(1, 2, bias=False)])
        params = nk.ParamVector(
            np.array([0.5, -2.0], dtype=np.float32), get_network(arch).layout, arch.arch_id
        )
        out = forward(arch, params, np.full((1, 1, 1, 1), 3.0, dtype=np.float32))
        assert np.allclose(out, [[1.5, -6.0]], atol=1e-6)

    def test_shape_mismatch_rejected(self):
        arch = make_arch("conv2-4", (1, 8, 8), 10)
        params = init_network(arch, nk.Rng(1))
        with pytest.raises(nk.ShapeError):
            forward(arch, params, np.zeros((2, 1, 4, 4), dtype=np.float32))


class TestLossGrad:
    @pytest.mark.parametrize("desc", ["mlp-8", "conv2-3", "conv3-4"])
    def test_matches_finite_differences(self, desc):
        with nk.precision("f64"):
            arch = make_arch(desc, (1, 4, 4), 3)
            params = init_network(arch, nk.Rng(5))
            images = nk.Rng(6).normal((6, 1, 4, 4))
            targets = nk.softmax(nk.Rng(7).normal((6, 3)))
            _, grad = loss_grad(arch, params, images, targets)

            def f(v):
                pv = nk.ParamVector(v, params.layout, params.arch_id)
                return loss_grad(arch, pv, images, targets)[0]

            idx = probe_indices(params.size, 80, seed=1)
            numeric = central_diff(f, params.values, idx)
            assert max_rel_error(grad.values, numeric) < 1e-5

    def test_stationary_point_of_linear_model(self):
        # symmetric +/- x data with targets equal to the model's own softmax
        with nk.precision("f64"):
            arch = ArchSpec("lin2:1x1x2:2", (1, 1, 2), 2, [Flatten(), Dense(2, 2, bias=False)])
            params = nk.ParamVector(
                np.array([0.3, -0.1, 0.2, 0.4]), get_network(arch).layout, arch.arch_id
            )
            x = np.array([[[[1.0, -0.5]]], [[[-1.0, 0.5]]]])
            targets = nk.softmax(forward(arch, params, x))
            _, grad = loss_grad(arch, params, x, targets)
            assert np.linalg.norm(grad.values) < 1e-8

    def test_uniform_targets_move_loss_toward_ln_k(self):
        arch = make_arch("mlp-8", (1, 2, 2), 4)
        params = init_network(arch, nk.Rng(8))
        images = nk.Rng(9).normal((5, 1, 2, 2))
        logits = forward(arch, params, images)
        sharp = nk.softmax(logits * 4.0)
        uniform = np.full_like(sharp, 0.25)
        loss_sharp, _ = loss_grad(arch, params, images, sharp)
        loss_uniform, _ = loss_grad(arch, params, images, uniform)
        lnk = np.log(4.0)
        assert abs(loss_uniform - lnk) < abs(loss_sharp - lnk)
