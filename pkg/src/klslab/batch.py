"""Sample batches with provenance, and their CSV / binary serializations."""
from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import RngStream

# magic, version, dim, count, seed: little-endian, 32 bytes total
_HEADER = struct.Struct("<4sIQQQ")
_MAGIC = b"KLSB"
_VERSION = 1


@dataclass(frozen=True)
class Provenance:
    generator: str
    stream: RngStream
    approximate: bool = False
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "generator": self.generator,
            "stream": self.stream.snapshot(),
            "approximate": self.approximate,
            "extra": self.extra,
        }


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """``count`` i.i.d. (or MCMC, see ``provenance.approximate``) draws in R^dim."""

    data: np.ndarray
    provenance: Provenance

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2:
            raise ValueError(f"batch data must be 2-D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("batch contains NaN or Inf entries")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def count(self) -> int:
        return self.data.shape[0]

    def __len__(self) -> int:
        return self.count

    def with_data(self, data, generator: str | None = None) -> "SampleBatch":
        prov = self.provenance
        if generator is not None:
            prov = Provenance(generator, prov.stream, prov.approximate, dict(prov.extra))
        return SampleBatch(data, prov)

    # -- CSV ---------------------------------------------------------------
    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"x{i + 1}" for i in range(self.dim)])
        for row in self.data:
            writer.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "SampleBatch":
        return cls.parse_csv(Path(path).read_text())

    @classmethod
    def parse_csv(cls, text: str, generator: str = "csv-import") -> "SampleBatch":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        if header != [f"x{i + 1}" for i in range(len(header))]:
            raise ValueError(f"unexpected CSV header {header[:4]}")
        data = np.array([[float(v) for v in row] for row in body], dtype=np.float64)
        return cls(data.reshape(len(body), len(header)), Provenance(generator, RngStream(0)))

    # -- binary ------------------------------------------------------------
    def to_bytes(self) -> bytes:
        header = _HEADER.pack(_MAGIC, _VERSION, self.dim, self.count, int(self.provenance.stream.seed))
        return header + self.data.astype("<f8").tobytes(order="C")

    def to_binary(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, raw: bytes, generator: str = "binary-import") -> "SampleBatch":
        if len(raw) < _HEADER.size:
            raise ValueError("truncated batch header")
        magic, version, dim, count, seed = _HEADER.unpack_from(raw)
        if magic != _MAGIC or version != _VERSION:
            raise ValueError("not a klslab binary batch")
        payload = raw[_HEADER.size:]
        if len(payload) != 8 * dim * count:
            raise ValueError(f"payload has {len(payload)} bytes, header promises {8 * dim * count}")
        data = np.frombuffer(payload, dtype="<f8").reshape(count, dim)
        return cls(data.astype(np.float64), Provenance(generator, RngStream(seed)))

    @classmethod
    def from_binary(cls, path) -> "SampleBatch":
        return cls.from_bytes(Path(path).read_bytes())

    def provenance_json(self) -> str:
        return json.dumps(self.provenance.to_dict(), sort_keys=True)


def concat(batches, generator: str = "concat") -> SampleBatch:
    """Concatenate worker partitions in the given order."""
    batches = list(batches)
    if not batches:
        raise ValueError("nothing to concatenate")
    data = np.concatenate([b.data for b in batches], axis=0)
    first = batches[0].provenance
    extra = {"parts": [b.provenance.stream.snapshot() for b in batches]}
    approx = any(b.provenance.approximate for b in batches)
    return SampleBatch(data, Provenance(generator, first.stream, approx, extra))
