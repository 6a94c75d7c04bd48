import numpy as np
import pytest

from datm import numkit as nk
from datm.distill import load_synthetic, save_synthetic
from datm.experts import load_trajectory, save_trajectory


def _flip_bit(path, offset_from_start=100):
    blob = bytearray(path.read_bytes())
    blob[offset_from_start % len(blob)] ^= 0x01
    path.write_bytes(bytes(blob))


class TestDset:
    def test_roundtrip(self, tmp_path):
        ds = nk.gaussian_blobs(24, nk.Rng(3))
        path = tmp_path / "a.dset"
        nk.save_dset(ds, path)
        back = nk.load_dset(path)
        assert back.n == ds.n and back.num_classes == ds.num_classes
        assert np.array_equal(back.labels, ds.labels)
        assert np.array_equal(
            back.images.data, ds.images.array.astype(np.float32).reshape(-1)
        )

    def test_single_bit_corruption_detected(self, tmp_path):
        ds = nk.gaussian_blobs(8, nk.Rng(4))
        path = tmp_path / "a.dset"
        nk.save_dset(ds, path)
        _flip_bit(path)
        with pytest.raises(nk.ChecksumError, match="checksum mismatch"):
            nk.load_dset(path)

    def test_bad_magic(self, tmp_path):
        ds = nk.gaussian_blobs(8, nk.Rng(4))
        path = tmp_path / "a.dset"
        nk.save_dset(ds, path)
        blob = bytearray(path.read_bytes())
        # corrupt the magic and fix the CRC so only the magic check can fire
        import struct
        import zlib

        blob[:4] = b"XSET"
        payload = bytes(blob[:-4])
        blob[-4:] = struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
        path.write_bytes(bytes(blob))
        with pytest.raises(nk.FormatError, match="bad magic"):
            nk.load_dset(path)


class TestIdx:
    def test_roundtrip(self, tmp_path):
        ds = nk.gaussian_blobs(16, nk.Rng(5))
        nk.write_idx(ds.images.array, ds.labels, tmp_path / "im.idx", tmp_path / "lb.idx")
        back = nk.load_idx(tmp_path / "im.idx", tmp_path / "lb.idx")
        assert back.n == 16
        assert np.array_equal(back.labels, ds.labels)
        # u8 quantization bounds the pixel error
        assert np.abs(back.images.array - ds.images.array).max() <= 1.0 / 255.0 + 1e-9

    def test_magic_checked(self, tmp_path):
        (tmp_path / "bad.idx").write_bytes(b"\x00\x00\x08\x04" + b"\x00" * 12)
        with pytest.raises(nk.FormatError, match="bad magic"):
            nk.load_idx(tmp_path / "bad.idx", tmp_path / "bad.idx")


class TestTrajectoryFile:
    def test_roundtrip_bit_exact(self, tmp_path, small_buffer):
        traj = small_buffer.trajectories[0]
        path = tmp_path / "t.dtrj"
        save_trajectory(traj, path)
        back = load_trajectory(path)
        assert back.arch_id == traj.arch_id
        assert back.seed == traj.seed
        assert back.config_digest == traj.config_digest
        assert len(back.checkpoints) == len(traj.checkpoints)
        for a, b in zip(back.checkpoints, traj.checkpoints):
            assert np.array_equal(a.values, b.values.astype(np.float32))
        # save -> load -> save produces byte-identical files
        path2 = tmp_path / "t2.dtrj"
        save_trajectory(back, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_corruption_detected(self, tmp_path, small_buffer):
        path = tmp_path / "t.dtrj"
        save_trajectory(small_buffer.trajectories[0], path)
        _flip_bit(path, 2000)
        with pytest.raises(nk.ChecksumError):
            load_trajectory(path)


class TestSyntheticFile:
    def _synset(self, small_buffer, blobs_train, small_arch):
        from datm.distill import build_correct_subset, init_synthetic

        labeling = small_buffer.trajectories[0].checkpoints[-1]
        subset = build_correct_subset(blobs_train, labeling, arch=small_arch)
        return init_synthetic(
            blobs_train, subset, 1, labeling, "soft-learned", nk.Rng(8),
            arch=small_arch, labeling_id="expert0:epoch12",
        )

    def test_roundtrip(self, tmp_path, small_buffer, blobs_train, small_arch):
        syn = self._synset(small_buffer, blobs_train, small_arch)
        path = tmp_path / "s.dsyn"
        save_synthetic(syn, path)
        back = load_synthetic(path)
        assert back.label_mode == syn.label_mode
        assert back.alpha == syn.alpha
        assert np.array_equal(back.images.data, syn.images.data)
        assert np.array_equal(back.logits.data, syn.logits.data)
        assert np.array_equal(back.target_classes, syn.target_classes)
        assert back.provenance["labeling_checkpoint"] == "expert0:epoch12"
        assert back.provenance["source_indices"] == syn.provenance["source_indices"]
        path2 = tmp_path / "s2.dsyn"
        save_synthetic(back, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_corruption_detected(self, tmp_path, small_buffer, blobs_train, small_arch):
        syn = self._synset(small_buffer, blobs_train, small_arch)
        path = tmp_path / "s.dsyn"
        save_synthetic(syn, path)
        _flip_bit(path, 321)
        with pytest.raises(nk.ChecksumError, match="checksum mismatch"):
            load_synthetic(path)
