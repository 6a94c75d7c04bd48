"""Counter-based splittable random streams.

Built on Philox so that (seed, call sequence) fully determines the stream and
child streams derived by `split(tag)` are independent and reproducible. Child
keys are derived by hashing the parent key with the tag, so the tree of
streams is stable no matter in which order branches are consumed.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .precision import storage_dtype


def _derive_key(parent: bytes, tag: str) -> bytes:
    h = hashlib.blake2b(digest_size=16, person=b"datm-rng-tree")
    h.update(parent)
    h.update(tag.encode("utf-8"))
    return h.digest()


class Rng:
    """Deterministic random stream with reproducible splitting."""

    def __init__(self, seed: int, _key: bytes | None = None):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        if _key is None:
            _key = _derive_key(self.seed.to_bytes(8, "little"), "root")
        self._key = _key
        self._gen = np.random.Generator(
            np.random.Philox(key=int.from_bytes(_key, "little"))
        )

    def split(self, tag: str) -> "Rng":
        """Independent child stream; same (seed, tag) always gives the same child."""
        return Rng(self.seed, _key=_derive_key(self._key, tag))

    # -- draws ------------------------------------------------------------

    def normal(self, shape, scale=1.0, dtype=None):
        dtype = dtype or storage_dtype()
        return (self._gen.standard_normal(shape) * scale).astype(dtype)

    def uniform(self, low, high, shape=None, dtype=None):
        dtype = dtype or storage_dtype()
        return self._gen.uniform(low, high, size=shape).astype(dtype)

    def integer(self, low, high) -> int:
        """One integer uniform on [low, high] inclusive."""
        return int(self._gen.integers(low, high + 1))

    def integers(self, low, high, size):
        """Integers uniform on [low, high) exclusive of high."""
        return self._gen.integers(low, high, size=size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def choice(self, n, size, replace=False):
        return self._gen.choice(n, size=size, replace=replace)

    # -- state (for resumable runs) ---------------------------------------

    def get_state(self):
        return {"seed": self.seed, "key": self._key, "bg": self._gen.bit_generator.state}

    @classmethod
    def from_state(cls, state) -> "Rng":
        rng = cls(state["seed"], _key=state["key"])
        rng._gen.bit_generator.state = state["bg"]
        return rng
