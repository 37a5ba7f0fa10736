"""Counter-based random streams.

Every sampler takes an :class:`RngStream` rather than a live generator, so a
batch is a pure function of ``(seed, stream_id, path, counter)``.  Streams are
backed by numpy's Philox bit generator keyed through a ``SeedSequence``; two
streams that differ in ``stream_id`` or ``path`` get unrelated keys.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0
    counter: int = 0
    path: tuple[int, ...] = field(default=())

    def __post_init__(self):
        for name in ("seed", "stream_id", "counter"):
            value = getattr(self, name)
            if not 0 <= int(value) <= _MASK64:
                raise ValueError(f"{name} must fit in an unsigned 64-bit integer, got {value}")

    def child(self, index: int) -> "RngStream":
        """Independent sub-stream, e.g. one per factor of a product sampler."""
        return RngStream(self.seed, self.stream_id, 0, self.path + (int(index),))

    def with_stream(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, int(stream_id), 0, ())

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),) + self.path)
        key = seq.generate_state(2, dtype=np.uint64)
        bitgen = np.random.Philox(key=key)
        if self.counter:
            bitgen = bitgen.advance(int(self.counter))
        return np.random.Generator(bitgen)

    def snapshot(self) -> dict:
        return {
            "seed": int(self.seed),
            "stream_id": int(self.stream_id),
            "counter": int(self.counter),
            "path": list(self.path),
        }

    @classmethod
    def from_snapshot(cls, snap: dict) -> "RngStream":
        return cls(int(snap["seed"]), int(snap["stream_id"]), int(snap.get("counter", 0)),
                   tuple(int(p) for p in snap.get("path", ())))


def as_stream(rng) -> RngStream:
    """Accept an RngStream or a bare integer seed."""
    if isinstance(rng, RngStream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    raise TypeError(f"expected RngStream or int seed, got {type(rng).__name__}")
