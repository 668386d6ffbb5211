import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depthfuzz.codec import FieldSpec, LayoutSpec, Mode, MutationView, Segment, extract, restore
from depthfuzz.mutator import (
    MutationBudget,
    deterministic_count,
    deterministic_stage,
    havoc_stage,
)
from oracles import int_from_bitlist, to_bits, view_bits


def make_view(bits: int, n: int) -> MutationView:
    return MutationView(bits, n, (Segment(0, 0, n),))


def oracle_deterministic(bits: list[int]) -> list[list[int]]:
    """Independent enumeration of the deterministic stage over a bit list."""
    n = len(bits)
    out = []
    for width in (1, 2, 4):
        for pos in range(n - width + 1):
            c = list(bits)
            for k in range(pos, pos + width):
                c[k] ^= 1
            out.append(c)
    nbytes = n // 8

    def with_byte(j, value):
        c = list(bits)
        c[8 * j : 8 * j + 8] = to_bits(bytes([value]))
        return c

    def byte_at(j):
        return int_from_bitlist(bits[8 * j : 8 * j + 8])

    for j in range(nbytes):
        out.append(with_byte(j, byte_at(j) ^ 0xFF))
    for j in range(nbytes):
        for i in range(1, 17):
            out.append(with_byte(j, (byte_at(j) + i) % 256))
            out.append(with_byte(j, (byte_at(j) - i) % 256))
    for j in range(nbytes):
        for value in (0, 1, 16, 32, 127, 128, 255):
            out.append(with_byte(j, value))
    return out


class TestDeterministic:
    def test_first_candidate_flips_msb(self):
        first = next(deterministic_stage(make_view(0x00, 8)))
        assert first.bits == 0x80

    def test_five_bit_view(self):
        cands = list(deterministic_stage(make_view(0b10110, 5)))
        assert len(cands) == 5 + 4 + 2 == 11

    def test_sixteen_bit_count(self):
        cands = list(deterministic_stage(make_view(0xBEEF, 16)))
        expected = oracle_deterministic([(0xBEEF >> (15 - i)) & 1 for i in range(16)])
        assert len(cands) == len(expected) == 124
        assert deterministic_count(16) == 124

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 40), st.data())
    def test_matches_oracle(self, n, data):
        bits = data.draw(st.integers(0, (1 << n) - 1))
        view = make_view(bits, n)
        got = [view_bits(c) for c in deterministic_stage(view)]
        assert got == oracle_deterministic(view_bits(view))
        assert len(got) == deterministic_count(n)

    def test_empty_view_yields_nothing(self):
        assert list(deterministic_stage(MutationView(0, 0, ()))) == []


class TestHavoc:
    def test_exact_energy(self):
        cands = list(havoc_stage(make_view(0x1234, 16), MutationBudget(100, random.Random(1))))
        assert len(cands) == 100

    def test_deterministic_under_seed(self):
        view = make_view(0xDEADBEEF, 32)
        a = [c.bits for c in havoc_stage(view, MutationBudget(500, random.Random(9)))]
        b = [c.bits for c in havoc_stage(view, MutationBudget(500, random.Random(9)))]
        assert a == b
        c = [c.bits for c in havoc_stage(view, MutationBudget(500, random.Random(10)))]
        assert a != c

    @pytest.mark.parametrize("n", [1, 3, 7, 8, 13, 128])
    def test_shape_preserved(self, n):
        view = make_view((1 << n) - 1, n)
        for c in havoc_stage(view, MutationBudget(300, random.Random(n))):
            assert c.nbits == n and c.segments == view.segments
            assert 0 <= c.bits < 1 << n

    def test_mutates_something(self):
        view = make_view(0, 64)
        changed = sum(c.bits != 0 for c in havoc_stage(view, MutationBudget(200, random.Random(0))))
        assert changed > 150

    def test_empty_view_rejected(self):
        with pytest.raises(ValueError):
            list(havoc_stage(MutationView(0, 0, ()), MutationBudget(1, random.Random(0))))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.binary(min_size=6, max_size=6))
def test_view_confinement(seed, data):
    spec = LayoutSpec(
        48,
        (
            FieldSpec("a", 0, 5, Mode.KEEP),
            FieldSpec("b", 5, 11, Mode.FUZZ),
            FieldSpec("c", 16, 8, Mode.KEEP),
            FieldSpec("d", 30, 10, Mode.FUZZ),
        ),
    )
    fuzz_positions = set(range(5, 16)) | set(range(30, 40))
    original = to_bits(data)
    view = extract(spec, data)
    cands = list(deterministic_stage(view))
    cands += list(havoc_stage(view, MutationBudget(50, random.Random(seed))))
    for c in cands:
        out = to_bits(restore(spec, data, c))
        for i, (x, y) in enumerate(zip(original, out)):
            if i not in fuzz_positions:
                assert x == y
