"""Classic Bloom filter: sizing math, double hashing, build/query and the
``LBF1`` binary format.

Bit ``i`` lives in byte ``i >> 3`` at position ``i & 7`` (LSB first).  Probe
indices come from a keyed BLAKE2b digest split into two 64-bit halves and
combined by double hashing in wrapping 64-bit arithmetic::

    i_j = ((h1 + j * h2) mod 2**64) mod m        j = 0 .. k-1,  h2 odd
"""

from __future__ import annotations

import enum
import hashlib
import math
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import CorruptBlobError, DomainError

__all__ = [
    "BloomFilter",
    "Layer",
    "bf_build",
    "bf_optimal_k",
    "bf_query",
    "bf_size_for",
    "base_hashes",
    "hash_indices",
]

MAGIC = b"LBF1"
VERSION = 1
_MASK64 = (1 << 64) - 1
_LN2 = math.log(2.0)
# magic, version, layer, m_bits, k, seed, n_inserted
_HEADER = struct.Struct("<4sBBQIQQ")
HEADER_BYTES = _HEADER.size


class Layer(enum.IntEnum):
    """Role of a filter inside a (possibly learned) structure."""

    CLASSIC = 0
    INITIAL = 1
    BACKUP = 2
    # zero-payload sentinels used by learned filters
    REJECT_ALL = 3
    ACCEPT_ALL = 4


def bf_size_for(n_keys: int, target_fpr: float) -> int:
    """Bits needed to hold ``n_keys`` at false-positive rate ``target_fpr``.

    ``ceil(n * ln(1/eps) / (ln 2)^2)``.
    """
    if n_keys < 1:
        raise DomainError(f"n_keys must be >= 1, got {n_keys}")
    if not 0.0 < target_fpr < 1.0:
        raise DomainError(f"target_fpr must lie in (0, 1), got {target_fpr}")
    return math.ceil(n_keys * math.log(1.0 / target_fpr) / (_LN2 * _LN2))


def bf_optimal_k(m_bits: int, n_keys: int) -> int:
    """Hash count ``max(1, round(m/n * ln 2))``."""
    if m_bits < 1 or n_keys < 1:
        raise DomainError(f"m_bits and n_keys must be >= 1, got {m_bits}, {n_keys}")
    return max(1, round(m_bits / n_keys * _LN2))


def base_hashes(key: bytes, seed: int) -> tuple[int, int]:
    """The two 64-bit base hashes ``(h1, h2)`` of ``key``; ``h2`` is odd."""
    digest = hashlib.blake2b(key, digest_size=16, key=(seed & _MASK64).to_bytes(8, "little")).digest()
    h1 = int.from_bytes(digest[:8], "little")
    h2 = int.from_bytes(digest[8:], "little") | 1
    return h1, h2


def hash_indices(key: bytes, k: int, m_bits: int, seed: int) -> list[int]:
    if m_bits < 1:
        raise DomainError("m_bits must be >= 1")
    h1, h2 = base_hashes(key, seed)
    return [((h1 + j * h2) & _MASK64) % m_bits for j in range(k)]


def _indices_many(keys: Sequence[bytes], k: int, m_bits: int, seed: int) -> np.ndarray:
    """Vectorized :func:`hash_indices`, shape ``(len(keys), k)``."""
    hs = np.array([base_hashes(key, seed) for key in keys], dtype=np.uint64).reshape(-1, 2)
    j = np.arange(k, dtype=np.uint64)
    # uint64 arithmetic wraps modulo 2**64, matching the scalar path
    return (hs[:, :1] + j[None, :] * hs[:, 1:2]) % np.uint64(m_bits)


@dataclass(frozen=True)
class BloomFilter:
    """An immutable Bloom filter.

    ``bits`` is the packed payload of ``ceil(m_bits / 8)`` bytes.  A filter
    with ``layer`` set to one of the sentinel layers has no payload and
    answers every query with a constant.
    """

    bits: bytes
    m_bits: int
    k: int
    seed: int
    n_inserted: int
    layer: Layer = Layer.CLASSIC

    @classmethod
    def sentinel(cls, accept: bool, seed: int = 0) -> "BloomFilter":
        layer = Layer.ACCEPT_ALL if accept else Layer.REJECT_ALL
        return cls(bits=b"", m_bits=0, k=1, seed=seed, n_inserted=0, layer=layer)

    @property
    def is_sentinel(self) -> bool:
        return self.layer in (Layer.REJECT_ALL, Layer.ACCEPT_ALL)

    @property
    def payload_bytes(self) -> int:
        return len(self.bits)

    def __contains__(self, key: bytes) -> bool:
        return bf_query(self, key)

    def query_many(self, keys: Sequence[bytes]) -> np.ndarray:
        """Boolean verdicts for a batch of keys; agrees with :func:`bf_query`."""
        if self.layer is Layer.ACCEPT_ALL:
            return np.ones(len(keys), dtype=bool)
        if self.layer is Layer.REJECT_ALL or len(keys) == 0:
            return np.zeros(len(keys), dtype=bool)
        idx = _indices_many(keys, self.k, self.m_bits, self.seed)
        arr = np.frombuffer(self.bits, dtype=np.uint8)
        hit = (arr[idx >> np.uint64(3)] >> (idx & np.uint64(7)).astype(np.uint8)) & 1
        return hit.all(axis=1)

    def fill_ratio(self) -> float:
        if self.m_bits == 0:
            return 0.0
        ones = int(np.unpackbits(np.frombuffer(self.bits, dtype=np.uint8)).sum())
        return ones / self.m_bits

    def to_bytes(self) -> bytes:
        head = _HEADER.pack(MAGIC, VERSION, int(self.layer), self.m_bits, self.k, self.seed, self.n_inserted)
        return head + self.bits

    @classmethod
    def from_bytes(cls, blob: bytes) -> "BloomFilter":
        if len(blob) < HEADER_BYTES:
            raise CorruptBlobError("corrupt filter: truncated header")
        magic, version, layer, m_bits, k, seed, n = _HEADER.unpack_from(blob)
        if magic != MAGIC:
            raise CorruptBlobError(f"corrupt filter: bad magic {magic!r}")
        if version != VERSION:
            raise CorruptBlobError(f"corrupt filter: unsupported version {version}")
        try:
            layer = Layer(layer)
        except ValueError:
            raise CorruptBlobError(f"corrupt filter: unknown layer tag {layer}") from None
        payload = blob[HEADER_BYTES:]
        if len(payload) != (m_bits + 7) // 8:
            raise CorruptBlobError(f"corrupt filter: payload is {len(payload)} bytes, header says {(m_bits + 7) // 8}")
        if k < 1:
            raise CorruptBlobError("corrupt filter: k must be >= 1")
        return cls(bits=bytes(payload), m_bits=m_bits, k=k, seed=seed, n_inserted=n, layer=layer)


def bf_build(
    keys: Iterable[bytes],
    target_fpr: float,
    seed: int = 0,
    layer: Layer = Layer.CLASSIC,
) -> BloomFilter:
    """Build a filter holding ``keys`` sized for ``target_fpr``.

    Duplicate keys are counted once.
    """
    unique = list(dict.fromkeys(keys))
    if not unique:
        raise DomainError("cannot build a Bloom filter over an empty key set")
    m = bf_size_for(len(unique), target_fpr)
    k = bf_optimal_k(m, len(unique))
    bits = bytearray((m + 7) // 8)
    for key in unique:
        for i in hash_indices(key, k, m, seed):
            bits[i >> 3] |= 1 << (i & 7)
    return BloomFilter(bits=bytes(bits), m_bits=m, k=k, seed=seed, n_inserted=len(unique), layer=layer)


def bf_query(bf: BloomFilter, key: bytes) -> bool:
    """``False`` means definitely absent; ``True`` means possibly present."""
    if bf.m_bits == 0:
        return bf.layer is Layer.ACCEPT_ALL
    h1, h2 = base_hashes(key, bf.seed)
    bits, m = bf.bits, bf.m_bits
    for j in range(bf.k):
        i = ((h1 + j * h2) & _MASK64) % m
        if not bits[i >> 3] >> (i & 7) & 1:
            return False
    return True
