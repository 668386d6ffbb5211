"""Deterministic and havoc stages over a :class:`MutationView`.

All mutations act on the view's bits only, so restored inputs can differ from
the seed inside fuzzable fields and nowhere else. View "bytes" are the whole
8-bit groups counted from view bit 0; trailing bits that do not fill a byte
are reachable only through the bit-level operators.
"""

from __future__ import annotations

import random
from collections.abc import Iterator
from dataclasses import dataclass

from .codec import MutationView

INTERESTING_8 = (0, 1, 16, 32, 127, 128, 255)
ARITH_DET_MAX = 16
ARITH_HAVOC_MAX = 35
MAX_COPY_BITS = 16

# primitive ids: 0 bit flip, 1 random byte, 2 byte arithmetic, 3 interesting
# byte, 4 bit-range copy; random byte is listed twice, as in AFL's havoc table
HAVOC_OPS = (0, 1, 1, 2, 3, 4)

# stack depth per candidate: half the candidates carry a single primitive, so
# a seed whose fields are mostly solved is not shredded by long stacks
STACK_SIZES = (1, 1, 1, 1, 2, 2, 4, 8)


@dataclass
class MutationBudget:
    energy: int
    rng: random.Random


def _byte_shift(nbits: int, j: int) -> int:
    return nbits - 8 * j - 8


def deterministic_stage(view: MutationView) -> Iterator[MutationView]:
    bits, n, segs = view.bits, view.nbits, view.segments
    if n == 0:
        return
    for width in (1, 2, 4):
        mask = (1 << width) - 1
        for pos in range(n - width + 1):
            yield MutationView(bits ^ (mask << (n - pos - width)), n, segs)

    nbytes = n // 8
    for j in range(nbytes):
        yield MutationView(bits ^ (0xFF << _byte_shift(n, j)), n, segs)

    for j in range(nbytes):
        shift = _byte_shift(n, j)
        cur = (bits >> shift) & 0xFF
        cleared = bits & ~(0xFF << shift)
        for i in range(1, ARITH_DET_MAX + 1):
            yield MutationView(cleared | (((cur + i) & 0xFF) << shift), n, segs)
            yield MutationView(cleared | (((cur - i) & 0xFF) << shift), n, segs)

    for j in range(nbytes):
        shift = _byte_shift(n, j)
        cleared = bits & ~(0xFF << shift)
        for value in INTERESTING_8:
            yield MutationView(cleared | (value << shift), n, segs)


def deterministic_count(nbits: int) -> int:
    """Number of candidates :func:`deterministic_stage` yields for ``nbits``."""
    flips = sum(max(0, nbits - w + 1) for w in (1, 2, 4))
    return flips + (nbits // 8) * (1 + 2 * ARITH_DET_MAX + len(INTERESTING_8))


def havoc_mutate(bits: int, n: int, rng: random.Random) -> int:
    """Apply one stacked havoc mutation to ``n`` view bits."""
    nbytes = n >> 3
    rand = rng.random  # int(rand() * k) is far cheaper than randrange(k)
    for _ in range(STACK_SIZES[int(rand() * len(STACK_SIZES))]):
        op = HAVOC_OPS[int(rand() * len(HAVOC_OPS))]
        if op and not nbytes and op != 4:
            op = 0
        if op == 0:
            bits ^= 1 << int(rand() * n)
        elif op == 4:
            length = int(rand() * min(MAX_COPY_BITS, max(1, n >> 1))) + 1
            span = n - length + 1
            src = int(rand() * span)
            dst = int(rand() * span)
            mask = (1 << length) - 1
            chunk = (bits >> (n - src - length)) & mask
            shift = n - dst - length
            bits = (bits & ~(mask << shift)) | (chunk << shift)
        else:
            shift = n - 8 * int(rand() * nbytes) - 8
            if op == 1:
                value = int(rand() * 256)
            elif op == 2:
                delta = int(rand() * ARITH_HAVOC_MAX) + 1
                cur = (bits >> shift) & 0xFF
                value = (cur + delta if rand() < 0.5 else cur - delta) & 0xFF
            else:
                value = INTERESTING_8[int(rand() * len(INTERESTING_8))]
            bits = (bits & ~(0xFF << shift)) | (value << shift)
    return bits


def havoc_stage(view: MutationView, budget: MutationBudget) -> Iterator[MutationView]:
    if view.nbits == 0:
        raise ValueError("cannot mutate an empty view")
    bits, n, segs = view.bits, view.nbits, view.segments
    rng = budget.rng
    for _ in range(budget.energy):
        yield MutationView(havoc_mutate(bits, n, rng), n, segs)
