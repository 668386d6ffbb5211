"""Running one input against a harness and reading back coverage and depth.

Harnesses are plain objects with ``name``, ``layout`` and
``run(data, ctx)``. During a run they report control flow through the
:class:`ProbeContext`: ``ctx.record_edge(site)`` for coverage and
``with ctx.call():`` around every function whose nesting depth should count.
A crash is signalled by raising :class:`TargetCrash`.
"""

from __future__ import annotations

import enum
import logging
import os
import re
import shlex
import subprocess
import tempfile
import time
from typing import NamedTuple, Protocol

from .codec import LayoutSpec
from .coverage import CoverageMap

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT_US = 100_000


class Status(enum.Enum):
    OK = "ok"
    CRASH = "crash"
    TIMEOUT = "timeout"


class TargetCrash(Exception):
    """Raised by a harness to report a fault with a stable kind identifier."""

    def __init__(self, kind: str):
        super().__init__(kind)
        self.kind = kind


class ExecTimeout(Exception):
    pass


class HarnessError(RuntimeError):
    """The harness broke the probe contract, e.g. unbalanced depth guards."""


class ExecResult(NamedTuple):
    status: Status
    edges: tuple[tuple[int, int], ...]
    max_depth: int
    duration_us: int
    crash_kind: str | None = None
    cost: int = 0  # probe events during the run; deterministic stand-in for time
    duration_ns: int = 0

    @property
    def coverage(self) -> CoverageMap:
        return CoverageMap.from_edges(self.edges)


class DepthGuard:
    __slots__ = ("ctx",)

    def __init__(self, ctx: ProbeContext):
        self.ctx = ctx

    def __enter__(self):
        self.ctx.enter_call()
        return self

    def __exit__(self, *exc):
        self.ctx.exit_call()
        return False


class ProbeContext:
    """Per-executor instrumentation state, reset before every run."""

    __slots__ = ("coverage", "depth", "max_depth", "deadline_ns", "events", "_guard")

    def __init__(self):
        self.coverage = CoverageMap()
        self.depth = 0
        self.max_depth = 0
        self.deadline_ns = 0
        self.events = 0
        self._guard = DepthGuard(self)

    def reset(self, deadline_ns: int) -> None:
        self.coverage.reset()
        self.depth = 0
        self.max_depth = 0
        self.events = 0
        self.deadline_ns = deadline_ns

    def record_edge(self, site_id: int) -> None:
        # inlined CoverageMap.record_edge; this is the hottest call in a run
        self.events += 1
        cov = self.coverage
        counts = cov.counts
        idx = site_id ^ cov.prev_location
        c = counts[idx]
        if c == 0:
            cov.touched.append(idx)
            counts[idx] = 1
        elif c < 255:
            counts[idx] = c + 1
        cov.prev_location = site_id >> 1

    def enter_call(self) -> None:
        self.events += 1
        d = self.depth + 1
        self.depth = d
        if d > self.max_depth:
            self.max_depth = d

    def exit_call(self) -> None:
        if self.depth <= 0:
            raise HarnessError("exit_call without matching enter_call")
        self.depth -= 1

    def call(self) -> DepthGuard:
        # the guard holds no per-use state, so one instance serves every nesting level
        return self._guard

    def note_depth(self, depth: int) -> None:
        """Record a depth observed out of band (subprocess logs)."""
        if depth > self.max_depth:
            self.max_depth = depth

    def check_deadline(self) -> None:
        if time.perf_counter_ns() > self.deadline_ns:
            raise ExecTimeout


def depth_guard(ctx: ProbeContext) -> DepthGuard:
    return DepthGuard(ctx)


class Harness(Protocol):
    name: str
    layout: LayoutSpec

    def run(self, data: bytes, ctx: ProbeContext) -> None: ...


class Executor:
    """Serial executor owning one probe context."""

    def __init__(self, harness: Harness, timeout_us: int = DEFAULT_TIMEOUT_US):
        self.harness = harness
        self.timeout_us = timeout_us
        self.ctx = ProbeContext()
        self._reset_hook = getattr(harness, "reset", None)

    def run(self, data: bytes) -> ExecResult:
        ctx = self.ctx
        if self._reset_hook is not None:
            self._reset_hook()
        start = time.perf_counter_ns()
        ctx.reset(start + self.timeout_us * 1000)
        kind = None
        try:
            self.harness.run(data, ctx)
            status = Status.OK
        except TargetCrash as e:
            status, kind = Status.CRASH, e.kind
        except ExecTimeout:
            status = Status.TIMEOUT
        except (HarnessError, RecursionError):
            raise
        except Exception as e:  # an unexpected fault in the target is still a crash
            status, kind = Status.CRASH, f"exception:{type(e).__name__}"
        elapsed = time.perf_counter_ns() - start
        if ctx.depth != 0:
            raise HarnessError(f"{ctx.depth} depth guard(s) left open after run")
        return ExecResult(
            status,
            ctx.coverage.edges(),
            ctx.max_depth,
            max(1, elapsed // 1000),
            kind,
            ctx.events,
            elapsed,
        )


def run_target(harness: Harness, data: bytes, timeout_us: int = DEFAULT_TIMEOUT_US) -> ExecResult:
    return Executor(harness, timeout_us).run(data)


_DEPTH_RE = re.compile(r"MF_DEPTH=(\S*)")


def parse_depth_from_log(log_text: str) -> int:
    best = 0
    for line in log_text.splitlines():
        m = _DEPTH_RE.match(line.strip())
        if not m:
            continue
        value = m.group(1)
        if not value.isdigit():
            log.warning("skipping malformed depth marker: %r", line)
            continue
        best = max(best, int(value))
    return best


class SubprocessHarness:
    """Runs an external command per input.

    ``@@`` in the command template is replaced by the path of a file holding
    the input; without ``@@`` the input goes to standard input. Exit code 0 is
    a clean run, anything else a crash named after the code. There is no edge
    coverage, so each distinct depth reached is reported as its own edge.
    """

    def __init__(self, command: str, layout: LayoutSpec, name: str = "cmd"):
        self.argv = shlex.split(command)
        self.layout = layout
        self.name = name
        self._uses_file = any("@@" in a for a in self.argv)
        fd, self._path = tempfile.mkstemp(prefix="depthfuzz-input-")
        os.close(fd)

    def run(self, data: bytes, ctx: ProbeContext) -> None:
        argv = [a.replace("@@", self._path) for a in self.argv]
        if self._uses_file:
            with open(self._path, "wb") as f:
                f.write(data)
        timeout = max(0.0, (ctx.deadline_ns - time.perf_counter_ns()) / 1e9)
        try:
            proc = subprocess.run(
                argv,
                input=None if self._uses_file else data,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                timeout=timeout,
            )
        except subprocess.TimeoutExpired:
            raise ExecTimeout from None
        depth = parse_depth_from_log(proc.stdout.decode("utf-8", "replace"))
        ctx.note_depth(depth)
        ctx.record_edge((0x4D46 + depth * 0x9E37) & 0xFFFF)
        if proc.returncode != 0:
            raise TargetCrash(f"exit{proc.returncode}")

    def close(self) -> None:
        try:
            os.unlink(self._path)
        except FileNotFoundError:
            pass
