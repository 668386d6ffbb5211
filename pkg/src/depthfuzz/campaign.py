"""The fuzzing loop: seed queue, scheduled passes, corpus growth and stats."""

from __future__ import annotations

import csv
import logging
import random
import re
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path

from .codec import Codec, LayoutSpec
from .coverage import COUNT_CLASS, Novelty, VirginMap, fingerprint
from .executor import DEFAULT_TIMEOUT_US, Executor, ExecResult, Harness, Status
from .mutator import MutationBudget, deterministic_stage, havoc_stage
from .scheduler import EnergyConfig, QueueStats, Scheduler

log = logging.getLogger(__name__)

PLOT_HEADER = "time,execs,paths,max_depth,unique_crashes"
LOGICAL_SAMPLE_EXECS = 1000


class CorpusError(ValueError):
    pass


@dataclass
class Seed:
    id: int
    input: bytes
    exec_us: int
    bucket_popcount: int
    last_depth: int
    fingerprint: str
    discovery_execs: int
    discovery_time: float
    parent_id: int | None = None
    deterministic_done: bool = False
    discovery_depth: int = 0

    @property
    def filename(self) -> str:
        src = "init" if self.parent_id is None else f"{self.parent_id:06d}"
        return f"id:{self.id:06d},src:{src},depth:{self.discovery_depth}"


@dataclass
class CampaignConfig:
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    timeout_us: int = DEFAULT_TIMEOUT_US
    rng_seed: int = 0
    logical_time: bool = False
    out_dir: Path | None = None
    #: stop as soon as a crash of this kind is saved
    stop_on_crash: str | None = None
    on_status: Callable[[CampaignStats], None] | None = None
    status_interval_s: float = 1.0


@dataclass
class CampaignStats:
    execs_total: int = 0
    paths_total: int = 0
    crashes_unique: int = 0
    max_depth_global: int = 0
    elapsed_us: int = 0
    timeouts: int = 0
    #: wall time spent inside executions only, for overhead comparisons
    exec_wall_ns: int = 0
    rows: list[tuple] = field(default_factory=list)
    #: exec count at which each queued path was found, in discovery order
    path_execs: list[int] = field(default_factory=list)
    #: exec count of the first unique crash of each kind
    first_crash_execs: dict[str, int] = field(default_factory=dict)

    @property
    def mean_exec_us(self) -> float:
        return self.exec_wall_ns / 1000 / self.execs_total if self.execs_total else 0.0

    @property
    def execs_per_sec(self) -> float:
        return self.execs_total / (self.elapsed_us / 1e6) if self.elapsed_us else 0.0


def _safe_name(kind: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", kind)


class Campaign:
    def __init__(self, spec: LayoutSpec, harness: Harness, cfg: CampaignConfig | None = None):
        self.cfg = cfg or CampaignConfig()
        if not spec.fuzz_fields:
            raise ValueError("layout has no fuzz fields; nothing to mutate")
        layout = getattr(harness, "layout", None)
        if layout is not None and layout.total_len_bits != spec.total_len_bits:
            raise ValueError(
                f"spec describes {spec.total_len_bytes}-byte inputs but target "
                f"{harness.name!r} takes {layout.total_len_bytes} bytes"
            )
        self.spec = spec
        self.harness = harness
        self.codec = Codec(spec)
        self.executor = Executor(harness, self.cfg.timeout_us)
        self.virgin = VirginMap()
        self.scheduler = Scheduler(self.cfg.energy)
        self.rng = random.Random(self.cfg.rng_seed)
        self.queue: list[Seed] = []
        self.crashes: dict[tuple[str, str], int] = {}
        self.stats = CampaignStats()

        self.last_energy = 0
        self.last_havoc_execs = 0

        self._sum_exec_us = 0
        self._sum_popcount = 0
        self._max_execs: int | None = None
        self._deadline: float | None = None
        self._stopped = False
        self._t0 = time.perf_counter()
        self._next_sample = 0.0
        self._next_status = self._t0 + self.cfg.status_interval_s
        self._plot = None
        if self.cfg.out_dir is not None:
            out = Path(self.cfg.out_dir)
            (out / "queue").mkdir(parents=True, exist_ok=True)
            (out / "crashes").mkdir(parents=True, exist_ok=True)
            self._plot = open(out / "plot_data.csv", "w")
            self._plot.write(PLOT_HEADER + "\n")

    # -- clocks and budgets ------------------------------------------------

    def _clock(self) -> float:
        if self.cfg.logical_time:
            return self.stats.execs_total
        return time.perf_counter() - self._t0

    @property
    def exhausted(self) -> bool:
        if self._stopped:
            return True
        if self._max_execs is not None and self.stats.execs_total >= self._max_execs:
            return True
        if self._deadline is not None and time.perf_counter() >= self._deadline:
            return True
        return False

    def queue_stats(self) -> QueueStats:
        n = len(self.queue)
        return QueueStats(self._sum_exec_us / n, self._sum_popcount / n)

    # -- execution ---------------------------------------------------------

    def _execute(self, data: bytes, parent: Seed | None, initial: bool = False) -> ExecResult:
        res = self.executor.run(data)
        stats = self.stats
        stats.exec_wall_ns += res.duration_ns
        stats.execs_total += 1
        self.scheduler.ledger.observe(res.max_depth)
        if res.max_depth > stats.max_depth_global:
            stats.max_depth_global = res.max_depth

        if res.status is Status.OK:
            cls = COUNT_CLASS
            bucketed = [(i, cls[c]) for i, c in res.edges]
            if self.virgin.update(bucketed) is not Novelty.NOTHING:
                self._add_seed(data, res, bucketed, None if initial else parent)
        elif res.status is Status.CRASH:
            self._save_crash(data, res)
        else:
            stats.timeouts += 1

        now = stats.execs_total if self.cfg.logical_time else time.perf_counter() - self._t0
        if now >= self._next_sample:
            self._sample()
        if self.cfg.on_status is not None and stats.execs_total & 0x3FF == 0:
            now = time.perf_counter()
            if now >= self._next_status:
                self._next_status = now + self.cfg.status_interval_s
                stats.elapsed_us = int((now - self._t0) * 1e6)
                self.cfg.on_status(stats)
        return res

    def _cost(self, res: ExecResult) -> int:
        # logical mode needs a machine-independent cost so energy stays reproducible
        return max(1, res.cost) if self.cfg.logical_time else res.duration_us

    def _add_seed(self, data, res, bucketed, parent: Seed | None) -> Seed:
        stats = self.stats
        seed = Seed(
            id=len(self.queue),
            input=data,
            exec_us=self._cost(res),
            bucket_popcount=len(bucketed),
            last_depth=res.max_depth,
            fingerprint=fingerprint(bucketed),
            discovery_execs=stats.execs_total,
            discovery_time=self._clock(),
            parent_id=None if parent is None else parent.id,
            discovery_depth=res.max_depth,
        )
        self.queue.append(seed)
        self._sum_exec_us += seed.exec_us
        self._sum_popcount += seed.bucket_popcount
        stats.paths_total = len(self.queue)
        stats.path_execs.append(stats.execs_total)
        if self.cfg.out_dir is not None:
            (Path(self.cfg.out_dir) / "queue" / seed.filename).write_bytes(data)
        return seed

    def _save_crash(self, data: bytes, res: ExecResult) -> None:
        key = (res.crash_kind, fingerprint((i, COUNT_CLASS[c]) for i, c in res.edges))
        if key in self.crashes:
            return
        stats = self.stats
        crash_id = len(self.crashes)
        self.crashes[key] = crash_id
        stats.crashes_unique = len(self.crashes)
        stats.first_crash_execs.setdefault(res.crash_kind, stats.execs_total)
        log.info("crash %s after %d execs", res.crash_kind, stats.execs_total)
        if self.cfg.out_dir is not None:
            name = f"id:{crash_id:06d},kind:{_safe_name(res.crash_kind)}"
            (Path(self.cfg.out_dir) / "crashes" / name).write_bytes(data)
        if self.cfg.stop_on_crash is not None and res.crash_kind == self.cfg.stop_on_crash:
            self._stopped = True

    def _sample(self) -> None:
        s = self.stats
        now = self._clock()
        if self.cfg.logical_time:
            t = str(now)
            self._next_sample = (now // LOGICAL_SAMPLE_EXECS + 1) * LOGICAL_SAMPLE_EXECS
        else:
            t = f"{now:.3f}"
            self._next_sample = now + 1.0
        row = (t, s.execs_total, s.paths_total, s.max_depth_global, s.crashes_unique)
        if s.rows and s.rows[-1][1:] == row[1:]:
            return
        s.rows.append(row)
        if self._plot is not None:
            self._plot.write(",".join(map(str, row)) + "\n")

    # -- corpus and passes -------------------------------------------------

    def load_corpus(self, inputs: list[tuple[str, bytes]]) -> None:
        if not inputs:
            raise CorpusError("initial corpus is empty")
        size = self.spec.total_len_bytes
        for name, data in inputs:
            if len(data) != size:
                raise CorpusError(
                    f"corpus file {name!r} is {len(data)} bytes, layout expects {size}"
                )
        for _, data in inputs:
            self._execute(data, None, initial=True)
        if not self.queue:
            raise CorpusError("no initial input ran cleanly; every seed crashed or timed out")
        self._sample()

    def fuzz_one(self, seed: Seed) -> None:
        if self.exhausted:
            return
        res = self._execute(seed.input, seed)
        self.scheduler.observe_execution(seed, res)
        energy = self.scheduler.energy(seed, self.queue_stats())
        self.last_energy = energy
        self.last_havoc_execs = 0

        codec = self.codec
        view = codec.extract(seed.input)
        kept = codec.kept_bits(seed.input)
        if not seed.deterministic_done:
            for cand in deterministic_stage(view):
                if self.exhausted:
                    return
                self._execute(codec.splice(kept, cand.bits), seed)
            seed.deterministic_done = True

        for cand in havoc_stage(view, MutationBudget(energy, self.rng)):
            if self.exhausted:
                return
            self._execute(codec.splice(kept, cand.bits), seed)
            self.last_havoc_execs += 1

    def run(self, max_execs: int | None = None, max_seconds: float | None = None) -> CampaignStats:
        self._max_execs = max_execs
        self._deadline = None if max_seconds is None else time.perf_counter() + max_seconds
        cursor = 0
        try:
            while not self.exhausted:
                self.fuzz_one(self.queue[cursor])
                cursor += 1
                if cursor >= len(self.queue):
                    cursor = 0
        finally:
            self.finish()
        return self.stats

    def finish(self) -> None:
        self.stats.elapsed_us = max(1, int((time.perf_counter() - self._t0) * 1e6))
        self._sample()
        if self.cfg.out_dir is None:
            return
        out = Path(self.cfg.out_dir)
        if self._plot is not None:
            self._plot.flush()
        s = self.stats
        summary = {
            "target": self.harness.name,
            "schedule": self.cfg.energy.schedule.value,
            "max_energy": self.cfg.energy.max_energy,
            "rng_seed": self.cfg.rng_seed,
            "execs_total": s.execs_total,
            "paths_total": s.paths_total,
            "crashes_unique": s.crashes_unique,
            "max_depth_global": s.max_depth_global,
            "timeouts": s.timeouts,
            "elapsed_us": s.elapsed_us,
            "execs_per_sec": f"{s.execs_per_sec:.1f}",
            "mean_exec_us": f"{s.mean_exec_us:.3f}",
        }
        (out / "fuzzer_stats").write_text("".join(f"{k}={v}\n" for k, v in summary.items()))
        with open(out / "queue_index.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(("file", "fingerprint", "discovery_execs"))
            for seed in self.queue:
                w.writerow((seed.filename, seed.fingerprint, seed.discovery_execs))

    def close(self) -> None:
        if self._plot is not None:
            self._plot.close()
            self._plot = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_corpus_dir(corpus_dir: Path) -> list[tuple[str, bytes]]:
    corpus_dir = Path(corpus_dir)
    if not corpus_dir.is_dir():
        raise CorpusError(f"corpus directory {str(corpus_dir)!r} does not exist")
    files = sorted(p for p in corpus_dir.iterdir() if p.is_file() and not p.name.startswith("."))
    return [(p.name, p.read_bytes()) for p in files]


def init_campaign(corpus_dir: Path, spec: LayoutSpec, harness: Harness, cfg: CampaignConfig | None = None) -> Campaign:
    camp = Campaign(spec, harness, cfg)
    try:
        camp.load_corpus(read_corpus_dir(corpus_dir))
    except Exception:
        camp.close()
        raise
    return camp


def run_campaign(camp: Campaign, max_execs: int | None = None, max_seconds: float | None = None) -> CampaignStats:
    try:
        return camp.run(max_execs=max_execs, max_seconds=max_seconds)
    finally:
        camp.close()

