import numpy as np
import pytest

from datm import numkit as nk
from datm.experts import (
    ExpertTrainConfig,
    generate_expert_buffer,
    load_expert_buffer,
    sample_segment,
    train_expert,
)


class TestTrainExpert:
    def test_checkpoint_count_and_init(self, blobs_train, small_arch):
        cfg = ExpertTrainConfig(epochs=1, seed=3)
        traj = train_expert(blobs_train, small_arch, cfg)
        assert len(traj.checkpoints) == 2
        from datm.models import init_network

        init = init_network(small_arch, nk.Rng(3).split("init"))
        assert np.array_equal(traj.checkpoints[0].values, init.values)

    def test_deterministic_given_seed(self, blobs_train, small_arch):
        cfg = ExpertTrainConfig(epochs=2, seed=9)
        a = train_expert(blobs_train, small_arch, cfg)
        b = train_expert(blobs_train, small_arch, cfg)
        for ca, cb in zip(a.checkpoints, b.checkpoints):
            assert np.array_equal(ca.values, cb.values)

    def test_loss_improves_over_run(self, small_buffer):
        log = small_buffer.trajectories[0].epoch_log
        assert log[-1][1] < log[0][1]

    def test_blobs_default_reaches_high_train_accuracy(self, blobs_train):
        # default config on the toy blobs set; threshold recorded from runs
        from datm.models import make_arch

        arch = make_arch("conv3-8", blobs_train.image_shape, blobs_train.num_classes)
        traj = train_expert(blobs_train, arch, ExpertTrainConfig())
        assert traj.epoch_log[-1][2] > 0.9

    def test_config_validation(self):
        with pytest.raises(nk.ShapeError):
            ExpertTrainConfig(epochs=0)
        with pytest.raises(nk.ShapeError):
            ExpertTrainConfig(lr=0.0)


class TestBuffer:
    def test_manifest_marks_last_held_out(self, small_buffer):
        assert small_buffer.held_out_index == 2
        assert small_buffer.trajectories[2].held_out
        assert small_buffer.training_indices == [0, 1]

    def test_distinct_seeds_distinct_inits(self, small_buffer):
        inits = [t.checkpoints[0].values for t in small_buffer.trajectories]
        assert not np.array_equal(inits[0], inits[1])
        assert not np.array_equal(inits[1], inits[2])

    def test_roundtrip_via_manifest(self, tmp_path, blobs_train, small_arch):
        cfg = ExpertTrainConfig(epochs=1)
        buf = generate_expert_buffer(
            blobs_train, small_arch, cfg, count=2, base_seed=50, out_dir=tmp_path
        )
        loaded = load_expert_buffer(tmp_path)
        assert loaded.held_out_index == 1
        for a, b in zip(buf.trajectories, loaded.trajectories):
            assert a.seed == b.seed
            for ca, cb in zip(a.checkpoints, b.checkpoints):
                assert np.array_equal(ca.values.astype(np.float32), cb.values)

    def test_requires_two_experts(self, blobs_train, small_arch, tmp_path):
        with pytest.raises(nk.ShapeError):
            generate_expert_buffer(
                blobs_train, small_arch, ExpertTrainConfig(epochs=1),
                count=1, base_seed=0, out_dir=tmp_path,
            )


class TestSampleSegment:
    def test_full_span(self, small_buffer):
        traj = small_buffer.trajectories[0]
        n = traj.horizon
        start, target = sample_segment(traj, 0, n)
        assert start is traj.checkpoints[0]
        assert target is traj.checkpoints[n]

    def test_zero_span_identical_pair(self, small_buffer):
        traj = small_buffer.trajectories[0]
        start, target = sample_segment(traj, 3, 0)
        assert start is target

    def test_boundary(self, small_buffer):
        traj = small_buffer.trajectories[0]
        n = traj.horizon
        sample_segment(traj, n - 2, 2)
        with pytest.raises(nk.ShapeError, match="segment out of range"):
            sample_segment(traj, n - 1, 2)
