"""Immutable bit strings and their on-disk format.

Key files start with a 16-byte little-endian header::

    offset  size  field
    0       4     magic  b"LQKY"
    4       2     format version (1)
    6       2     reserved, zero
    8       8     bit length

followed by the bits packed little-endian within each byte (bit ``i`` of the
key is bit ``i % 8`` of byte ``i // 8``); unused trailing bits are zero.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"LQKY"
VERSION = 1
_HEADER = struct.Struct("<4sHHQ")


class KeyFileError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BitKey:
    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 1:
            raise ValueError("a key is a 1-D bit vector")
        if b.size and (b.min() < 0 or b.max() > 1):
            raise ValueError("key entries must be 0 or 1")
        b = b.astype(np.uint8, copy=True)
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @classmethod
    def random(cls, length: int, rng) -> "BitKey":
        return cls(rng.integers(0, 2, size=length, dtype=np.uint8))

    @property
    def length(self) -> int:
        return int(self.bits.size)

    def __len__(self):
        return self.length

    def __eq__(self, other):
        if not isinstance(other, BitKey):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __xor__(self, other: "BitKey") -> "BitKey":
        return BitKey(self.bits ^ other.bits)

    def __getitem__(self, sl) -> "BitKey":
        return BitKey(self.bits[sl])

    def pack(self) -> bytes:
        return np.packbits(self.bits, bitorder="little").tobytes()

    @classmethod
    def unpack(cls, data: bytes, length: int) -> "BitKey":
        raw = np.frombuffer(data, dtype=np.uint8)
        if raw.size * 8 < length:
            raise KeyFileError("payload shorter than the declared bit length")
        return cls(np.unpackbits(raw, bitorder="little", count=length))

    def to_bytes(self) -> bytes:
        return _HEADER.pack(MAGIC, VERSION, 0, self.length) + self.pack()

    @classmethod
    def from_bytes(cls, data: bytes) -> "BitKey":
        if len(data) < _HEADER.size:
            raise KeyFileError("file shorter than the 16-byte header")
        magic, version, _, length = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise KeyFileError(f"bad magic {magic!r}")
        if version != VERSION:
            raise KeyFileError(f"unsupported key file version {version}")
        payload = data[_HEADER.size :]
        if len(payload) != (length + 7) // 8:
            raise KeyFileError("payload size does not match the declared bit length")
        return cls.unpack(payload, length)

    def write(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def read(cls, path) -> "BitKey":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def concat(keys) -> BitKey:
    keys = list(keys)
    if not keys:
        return BitKey(np.zeros(0, dtype=np.uint8))
    return BitKey(np.concatenate([k.bits for k in keys]))
