"""Field layouts and the extract/restore round trip for partial-input fuzzing.

A fixed-layout input is treated as one big-endian bit string. Bit 0 is the
most significant bit of byte 0. Fields marked ``fuzz`` are concatenated into a
compact :class:`MutationView`; mutators only ever touch the view, and
:func:`restore` splices it back so ``keep`` fields come through untouched.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass
from typing import NamedTuple


class Mode(enum.Enum):
    FUZZ = "fuzz"
    KEEP = "keep"


class SpecError(ValueError):
    """Raised for malformed or inconsistent layout specs."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class CodecError(ValueError):
    """Raised when an input or view does not match the layout."""


@dataclass(frozen=True)
class FieldSpec:
    name: str
    offset_bits: int
    length_bits: int
    mode: Mode

    @property
    def end_bits(self) -> int:
        return self.offset_bits + self.length_bits


@dataclass(frozen=True)
class LayoutSpec:
    total_len_bits: int
    fields: tuple[FieldSpec, ...]

    def __post_init__(self):
        if self.total_len_bits % 8:
            raise SpecError(f"total length {self.total_len_bits} bits is not whole bytes")
        _validate_fields(self.fields, self.total_len_bits)

    @property
    def total_len_bytes(self) -> int:
        return self.total_len_bits // 8

    @property
    def fuzz_fields(self) -> tuple[FieldSpec, ...]:
        return tuple(f for f in self.fields if f.mode is Mode.FUZZ)

    @property
    def fuzz_bits(self) -> int:
        return sum(f.length_bits for f in self.fuzz_fields)

    def to_text(self, comment: str | None = None) -> str:
        """Render in the line format accepted by :func:`parse_spec`."""
        lines = [f"len {self.total_len_bytes}"]
        if comment:
            lines.append(f"# {comment}")
        width = max((len(f.name) for f in self.fields), default=4)
        for f in self.fields:
            lines.append(
                f"{f.name:<{width}}  {f.offset_bits:>5} {f.length_bits:>5}  {f.mode.value}"
            )
        return "\n".join(lines) + "\n"


class Segment(NamedTuple):
    view_offset: int
    source_offset: int
    length: int


class MutationView(NamedTuple):
    """Concatenated bits of every fuzzable field.

    ``bits`` holds the view as an integer whose most significant of ``nbits``
    bits is view bit 0.
    """

    bits: int
    nbits: int
    segments: tuple[Segment, ...]

    def to_bytes(self) -> bytes:
        """Left-aligned byte form, zero padded at the tail."""
        pad = -self.nbits % 8
        return (self.bits << pad).to_bytes((self.nbits + pad) // 8, "big")

    @classmethod
    def from_bytes(cls, data: bytes, nbits: int, segments: tuple[Segment, ...]) -> MutationView:
        pad = len(data) * 8 - nbits
        if pad < 0 or pad >= 8:
            raise CodecError(f"{len(data)} bytes cannot hold exactly {nbits} bits")
        return cls(int.from_bytes(data, "big") >> pad, nbits, segments)


def _validate_fields(fields: tuple[FieldSpec, ...], total_bits: int, linenos=None) -> None:
    seen: dict[str, int] = {}
    prev: FieldSpec | None = None
    for i, f in enumerate(fields):
        lineno = linenos[i] if linenos else None
        if f.length_bits < 1:
            raise SpecError(f"field {f.name!r} has zero length", lineno)
        if f.offset_bits < 0:
            raise SpecError(f"field {f.name!r} has negative offset", lineno)
        if f.end_bits > total_bits:
            raise SpecError(
                f"field {f.name!r} [{f.offset_bits}, {f.end_bits}) exceeds total length of "
                f"{total_bits} bits",
                lineno,
            )
        if f.name in seen:
            raise SpecError(f"duplicate field name {f.name!r}", lineno)
        seen[f.name] = i
        if prev is not None:
            if f.offset_bits < prev.offset_bits:
                raise SpecError("fields are not sorted by offset", lineno)
            if f.offset_bits < prev.end_bits:
                raise SpecError(
                    f"field {f.name!r} [{f.offset_bits}, {f.end_bits}) overlaps {prev.name!r} "
                    f"[{prev.offset_bits}, {prev.end_bits})",
                    lineno,
                )
        prev = f


def parse_spec(text: str) -> LayoutSpec:
    total_bytes: int | None = None
    entries: list[tuple[int, FieldSpec]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if total_bytes is None:
            if parts[0] != "len" or len(parts) != 2:
                raise SpecError("expected 'len <bytes>' as the first declaration", lineno)
            total_bytes = _parse_uint(parts[1], "length", lineno)
            continue
        if parts[0] == "len":
            raise SpecError("'len' declared twice", lineno)
        if len(parts) != 4:
            raise SpecError(
                "expected '<name> <offset_bits> <length_bits> <fuzz|keep>'", lineno
            )
        name, off, length, mode = parts
        try:
            fmode = Mode(mode.lower())
        except ValueError:
            raise SpecError(f"unknown mode {mode!r} (expected fuzz or keep)", lineno) from None
        entries.append(
            (
                lineno,
                FieldSpec(
                    name,
                    _parse_uint(off, "offset", lineno),
                    _parse_uint(length, "length", lineno),
                    fmode,
                ),
            )
        )
    if total_bytes is None:
        raise SpecError("empty spec: missing 'len' declaration")

    entries.sort(key=lambda e: e[1].offset_bits)
    fields = tuple(f for _, f in entries)
    _validate_fields(fields, total_bytes * 8, [n for n, _ in entries])
    return LayoutSpec(total_bytes * 8, fields)


def _parse_uint(token: str, what: str, lineno: int) -> int:
    if not token.isdigit():
        raise SpecError(f"{what} {token!r} is not an unsigned integer", lineno)
    return int(token)


class Codec:
    """Precomputed extract/restore for one layout.

    Used on the hot path; :func:`extract` and :func:`restore` wrap a cached
    instance.
    """

    def __init__(self, spec: LayoutSpec):
        self.spec = spec
        self.total_bits = spec.total_len_bits
        self.total_bytes = spec.total_len_bytes
        segments = []
        voff = 0
        for f in spec.fuzz_fields:
            segments.append(Segment(voff, f.offset_bits, f.length_bits))
            voff += f.length_bits
        self.nbits = voff
        self.segments = tuple(segments)

        keep_mask = (1 << self.total_bits) - 1
        # (view shift, mask, source shift) per segment
        plan = []
        for seg in self.segments:
            mask = (1 << seg.length) - 1
            vshift = self.nbits - seg.view_offset - seg.length
            sshift = self.total_bits - seg.source_offset - seg.length
            plan.append((vshift, mask, sshift))
            keep_mask &= ~(mask << sshift)
        self._plan = tuple(plan)
        self._keep_mask = keep_mask

    def extract(self, data: bytes) -> MutationView:
        if len(data) != self.total_bytes:
            raise CodecError(
                f"input is {len(data)} bytes, layout expects {self.total_bytes}"
            )
        x = int.from_bytes(data, "big")
        bits = 0
        for vshift, mask, sshift in self._plan:
            bits |= ((x >> sshift) & mask) << vshift
        return MutationView(bits, self.nbits, self.segments)

    def restore(self, original: bytes, view: MutationView) -> bytes:
        if len(original) != self.total_bytes:
            raise CodecError(
                f"original is {len(original)} bytes, layout expects {self.total_bytes}"
            )
        if view.nbits != self.nbits or view.segments != self.segments:
            raise CodecError("view segments do not match this layout")
        return self.splice(int.from_bytes(original, "big") & self._keep_mask, view.bits)

    def splice(self, kept: int, bits: int) -> bytes:
        """Unchecked restore: ``kept`` is the original with fuzz bits cleared."""
        for vshift, mask, sshift in self._plan:
            kept |= ((bits >> vshift) & mask) << sshift
        return kept.to_bytes(self.total_bytes, "big")

    def kept_bits(self, original: bytes) -> int:
        return int.from_bytes(original, "big") & self._keep_mask


@functools.lru_cache(maxsize=64)
def codec_for(spec: LayoutSpec) -> Codec:
    return Codec(spec)


def extract(spec: LayoutSpec, data: bytes) -> MutationView:
    return codec_for(spec).extract(data)


def restore(spec: LayoutSpec, original: bytes, view: MutationView) -> bytes:
    return codec_for(spec).restore(original, view)
