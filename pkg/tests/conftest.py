import numpy as np
import pytest

from datm import numkit as nk
from datm.experts import ExpertTrainConfig, generate_expert_buffer
from datm.models import make_arch


@pytest.fixture(autouse=True)
def reset_precision():
    nk.set_precision("f32")
    yield
    nk.set_precision("f32")


@pytest.fixture(scope="session")
def blobs_train():
    return nk.standardize(nk.gaussian_blobs(800, nk.Rng(42).split("train")))


@pytest.fixture(scope="session")
def blobs_test(blobs_train):
    raw = nk.gaussian_blobs(400, nk.Rng(42).split("test"))
    return nk.standardize(
        raw, stats=(blobs_train.meta["norm_mean"], blobs_train.meta["norm_std"])
    )


@pytest.fixture(scope="session")
def small_arch(blobs_train):
    return make_arch("conv2-4", blobs_train.image_shape, blobs_train.num_classes)


@pytest.fixture(scope="session")
def small_buffer(tmp_path_factory, blobs_train, small_arch):
    """Three quick experts (last held out) shared across unit tests."""
    out = tmp_path_factory.mktemp("experts")
    cfg = ExpertTrainConfig(epochs=12, batch_size=64, lr=0.05)
    return generate_expert_buffer(
        blobs_train, small_arch, cfg, count=3, base_seed=500, out_dir=out
    )
