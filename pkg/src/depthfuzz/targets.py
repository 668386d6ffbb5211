"""Synthetic in-process targets shaped like a driver behind validity checks.

``nested4``/``nested8`` stack parameter checks: each 16-bit gate field must
match a key before the next, deeper function is called. Comparisons are
split per byte with an edge on the first byte match, the way compare-splitting
instrumentation exposes partial progress. ``magic32`` is a depth-flat control
and ``spin`` loops for an input-controlled number of iterations.
"""

from __future__ import annotations

import hashlib
import random

from .codec import FieldSpec, LayoutSpec, Mode
from .executor import ProbeContext, TargetCrash

HEADER = b"MDRV"
NESTED_LEN = 64
MAGIC_LEN = 16
SPIN_LEN = 8


def site_id(target: str, label: str) -> int:
    """Fixed 16-bit location id for one instrumentation site."""
    digest = hashlib.blake2b(f"{target}/{label}".encode(), digest_size=2).digest()
    return int.from_bytes(digest, "big")


class NestedGateTarget:
    """Header check followed by ``n_gates`` nested 16-bit key comparisons.

    Gate ``i`` reads the big-endian 16-bit field at byte ``4 + 2*i``. The
    first gate runs at depth 1 and each passed gate calls the next one inside
    a fresh depth guard, so a non-crashing run reaches depth
    ``1 + gates passed``. Passing the last gate raises ``deep_bug`` from
    inside that gate's frame, at depth ``n_gates``.
    """

    def __init__(self, name: str, n_gates: int, gate_keys: list[int]):
        if len(gate_keys) != n_gates:
            raise ValueError("need one key per gate")
        if 4 + 2 * n_gates > NESTED_LEN:
            raise ValueError(f"{n_gates} gates do not fit in {NESTED_LEN} bytes")
        self.name = name
        self.n_gates = n_gates
        self.gate_keys = list(gate_keys)
        self._key_bytes = [((k >> 8) & 0xFF, k & 0xFF) for k in gate_keys]
        self._sites = [
            (
                site_id(name, f"gate{i}"),
                site_id(name, f"gate{i}/hi"),
                site_id(name, f"gate{i}/pass"),
            )
            for i in range(n_gates)
        ]
        self._entry = site_id(name, "entry")
        self._bad_header = site_id(name, "bad_header")
        gate_end = 4 + 2 * n_gates
        self.layout = LayoutSpec(
            NESTED_LEN * 8,
            (
                FieldSpec("header", 0, 32, Mode.KEEP),
                FieldSpec("gates", 32, 16 * n_gates, Mode.FUZZ),
                FieldSpec("payload", gate_end * 8, (NESTED_LEN - gate_end) * 8, Mode.KEEP),
            ),
        )

    def run(self, data: bytes, ctx: ProbeContext) -> None:
        ctx.record_edge(self._entry)
        if data[:4] != HEADER:
            ctx.record_edge(self._bad_header)
            return
        self._gate(0, data, ctx)

    def _gate(self, i: int, data: bytes, ctx: ProbeContext) -> None:
        with ctx.call():
            site, site_hi, site_pass = self._sites[i]
            ctx.record_edge(site)
            hi, lo = self._key_bytes[i]
            pos = 4 + 2 * i
            if data[pos] != hi:
                return
            ctx.record_edge(site_hi)
            if data[pos + 1] != lo:
                return
            ctx.record_edge(site_pass)
            if i + 1 == self.n_gates:
                raise TargetCrash("deep_bug")
            self._gate(i + 1, data, ctx)

    def solution(self, depth: int | None = None) -> bytes:
        """An input passing the first ``depth`` gates (all of them by default)."""
        n = self.n_gates if depth is None else depth
        buf = bytearray(self.initial_corpus()[0])
        for i in range(n):
            buf[4 + 2 * i : 6 + 2 * i] = self.gate_keys[i].to_bytes(2, "big")
        return bytes(buf)

    def initial_corpus(self) -> list[bytes]:
        return [HEADER + bytes(NESTED_LEN - len(HEADER))]


class Magic32Target:
    """Single 4-byte magic comparison at depth 1, checked byte by byte."""

    def __init__(self, name: str, magic: bytes):
        self.name = name
        self.magic = magic
        self._entry = site_id(name, "entry")
        self._sites = [site_id(name, f"byte{i}") for i in range(4)]
        self.layout = LayoutSpec(
            MAGIC_LEN * 8,
            (
                FieldSpec("magic", 0, 32, Mode.FUZZ),
                FieldSpec("body", 32, (MAGIC_LEN - 4) * 8, Mode.KEEP),
            ),
        )

    def run(self, data: bytes, ctx: ProbeContext) -> None:
        with ctx.call():
            ctx.record_edge(self._entry)
            for i in range(4):
                if data[i] != self.magic[i]:
                    return
                ctx.record_edge(self._sites[i])
            raise TargetCrash("magic_hit")

    def initial_corpus(self) -> list[bytes]:
        return [bytes(MAGIC_LEN)]


class SpinTarget:
    """Loops ``count`` times where ``count`` is the leading big-endian u32."""

    CHECK_EVERY = 256

    def __init__(self, name: str, salt: int):
        self.name = name
        self.salt = salt
        self._entry = site_id(name, "entry")
        self._loop = site_id(name, "loop")
        self.layout = LayoutSpec(
            SPIN_LEN * 8,
            (
                FieldSpec("count", 0, 32, Mode.FUZZ),
                FieldSpec("pad", 32, 32, Mode.KEEP),
            ),
        )

    def run(self, data: bytes, ctx: ProbeContext) -> None:
        with ctx.call():
            ctx.record_edge(self._entry)
            count = int.from_bytes(data[:4], "big")
            check = self.CHECK_EVERY
            for i in range(count):
                if i % check == 0:
                    ctx.check_deadline()
                if i < 256:
                    ctx.record_edge(self._loop)

    def initial_corpus(self) -> list[bytes]:
        return [bytes(SPIN_LEN)]


TARGET_NAMES = ("nested4", "nested8", "magic32", "spin")


def make_target(name: str, rng_seed: int = 0):
    rng = random.Random(f"{name}:{rng_seed}")
    if name in ("nested4", "nested8"):
        n = int(name[len("nested"):])
        # keys never collide with the all-zero seed bytes
        keys = [rng.randrange(0x0101, 0x10000) for _ in range(n)]
        keys = [k if k & 0xFF else k | 1 for k in keys]
        return NestedGateTarget(name, n, keys)
    if name == "magic32":
        return Magic32Target(name, bytes(rng.randrange(1, 256) for _ in range(4)))
    if name == "spin":
        return SpinTarget(name, rng_seed)
    raise ValueError(f"unknown target {name!r}; choose from {', '.join(TARGET_NAMES)}")
