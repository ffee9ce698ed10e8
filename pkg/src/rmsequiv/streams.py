"""Counter-based random streams for reproducible (and parallelizable) simulation.

A :class:`RandomStream` is an immutable *address* into a family of independent
random sequences: a root seed plus a path of substream indices.  The address is
hashed (SHA-256, truncated to 128 bits) into a Philox key, so every variate is
fully determined by ``(seed, substream path, position)`` regardless of thread
or process scheduling.  Streams carry no mutable state; drawing twice from the
same stream yields the same values.  To get fresh randomness, descend into a
new substream.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

__all__ = ["RandomStream"]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RandomStream:
    """Address of one independent random sequence.

    Parameters
    ----------
    seed : int
        Root seed shared by the whole stream family.
    path : tuple of int
        Substream indices accumulated through :meth:`substream`.
    """

    seed: int
    path: tuple[int, ...] = ()

    def substream(self, *indices: int) -> "RandomStream":
        """Return the child stream addressed by appending ``indices`` to the path."""
        return RandomStream(self.seed, self.path + tuple(int(i) for i in indices))

    def key(self) -> int:
        """128-bit Philox key derived from (seed, path)."""
        h = hashlib.sha256()
        h.update((self.seed & _MASK64).to_bytes(8, "little"))
        for idx in self.path:
            h.update((idx & _MASK64).to_bytes(8, "little"))
        return int.from_bytes(h.digest()[:16], "little")

    def generator(self) -> np.random.Generator:
        """Fresh NumPy generator positioned at the start of this stream."""
        return np.random.Generator(np.random.Philox(key=self.key()))
