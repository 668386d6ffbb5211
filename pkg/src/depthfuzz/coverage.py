"""Edge coverage map, hit-count buckets and virgin-bit novelty checks.

The map follows the classic AFL scheme: an edge is ``cur ^ prev`` and
``prev`` becomes ``cur >> 1`` after every hit. Only the indices touched during
a run are tracked alongside the dense counter array, so reset and
classification cost scales with the edges a run actually hits.
"""

from __future__ import annotations

import enum
import hashlib
from collections.abc import Iterable

import numpy as np

MAP_SIZE = 1 << 16


def _bucket(count: int) -> int:
    if count == 0:
        return 0
    if count <= 3:
        return 1 << (count - 1)
    if count <= 7:
        return 1 << 3
    if count <= 15:
        return 1 << 4
    if count <= 31:
        return 1 << 5
    if count <= 127:
        return 1 << 6
    return 1 << 7


#: raw hit count -> one-hot bucket mask
COUNT_CLASS = bytes(_bucket(c) for c in range(256))


class Novelty(enum.IntEnum):
    NOTHING = 0
    NEW_BUCKET = 1
    NEW_EDGE = 2


class CoverageMap:
    __slots__ = ("counts", "prev_location", "touched")

    def __init__(self):
        self.counts = bytearray(MAP_SIZE)
        self.prev_location = 0
        self.touched: list[int] = []

    def record_edge(self, location_id: int) -> None:
        idx = location_id ^ self.prev_location
        c = self.counts[idx]
        if c == 0:
            self.touched.append(idx)
            self.counts[idx] = 1
        elif c < 255:
            self.counts[idx] = c + 1
        self.prev_location = location_id >> 1

    def reset(self) -> None:
        counts = self.counts
        for idx in self.touched:
            counts[idx] = 0
        self.touched.clear()
        self.prev_location = 0

    def edges(self) -> tuple[tuple[int, int], ...]:
        """``(index, raw count)`` pairs for every nonzero counter, in first-hit order."""
        counts = self.counts
        return tuple([(i, counts[i]) for i in self.touched])

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[int, int]]) -> CoverageMap:
        m = cls()
        for idx, count in edges:
            if count:
                if not m.counts[idx]:
                    m.touched.append(idx)
                m.counts[idx] = count
        return m


def record_edge(cov: CoverageMap, location_id: int) -> CoverageMap:
    if not 0 <= location_id < MAP_SIZE:
        raise ValueError(f"location id {location_id} outside [0, {MAP_SIZE})")
    cov.record_edge(location_id)
    return cov


def classify_counts(counts: bytes | bytearray) -> bytes:
    return bytes(counts).translate(COUNT_CLASS)


def classify_edges(edges: Iterable[tuple[int, int]]) -> tuple[tuple[int, int], ...]:
    """Sparse form of :func:`classify_counts`."""
    cls = COUNT_CLASS
    return tuple((i, cls[c]) for i, c in edges)


class VirginMap:
    """Every bucket bit observed so far in the campaign; bits are never cleared."""

    __slots__ = ("seen", "_bits")

    def __init__(self):
        self.seen = bytearray(MAP_SIZE)
        self._bits = 0

    def update(self, bucketed: Iterable[tuple[int, int]]) -> Novelty:
        """Sparse novelty check over ``(index, bucket mask)`` pairs."""
        seen = self.seen
        result = Novelty.NOTHING
        for idx, b in bucketed:
            old = seen[idx]
            new = b & ~old
            if new:
                if old == 0:
                    result = Novelty.NEW_EDGE
                elif result is Novelty.NOTHING:
                    result = Novelty.NEW_BUCKET
                seen[idx] = old | b
                self._bits += bin(new).count("1")
        return result

    def popcount(self) -> int:
        return self._bits


def has_new_bits(virgin: VirginMap, bucketed: bytes | bytearray) -> Novelty:
    """Dense novelty check over a full ``MAP_SIZE`` bucketed array."""
    arr = np.frombuffer(bytes(bucketed), dtype=np.uint8)
    idx = np.flatnonzero(arr)
    return virgin.update(zip(idx.tolist(), arr[idx].tolist()))


def fingerprint(bucketed: Iterable[tuple[int, int]]) -> str:
    """Stable hash of a sparse bucketed map, independent of insertion order."""
    h = hashlib.blake2b(digest_size=8)
    for idx, b in sorted(bucketed):
        h.update(idx.to_bytes(2, "big"))
        h.update(bytes((b,)))
    return h.hexdigest()
