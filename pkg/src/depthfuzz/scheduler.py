"""Seed energy: an AFL-style base score and the call-depth power schedule."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field


class Schedule(enum.Enum):
    AFL = "afl"
    DEPTH = "depth"


@dataclass(frozen=True)
class EnergyConfig:
    max_energy: int = 1600
    schedule: Schedule = Schedule.DEPTH

    def __post_init__(self):
        if self.max_energy < 2:
            raise ValueError(f"max energy must be at least 2, got {self.max_energy}")


@dataclass(frozen=True)
class QueueStats:
    avg_exec_us: float
    avg_popcount: float


@dataclass
class DepthLedger:
    """Campaign-wide historical maximum call depth."""

    global_max_depth: int = 0

    def observe(self, depth: int) -> None:
        if depth > self.global_max_depth:
            self.global_max_depth = depth


SPEED_STEPS = ((4.0, 3.0), (2.0, 2.0), (1.0, 1.0), (0.5, 0.5))
COVERAGE_STEPS = ((1.5, 1.5), (1.0, 1.0))


def _step(ratio: float, table, floor: float) -> float:
    for threshold, factor in table:
        if ratio >= threshold:
            return factor
    return floor


def base_energy(seed, stats: QueueStats, max_energy: int = 1600) -> int:
    """Two-factor approximation of AFL's ``calculate_score``.

    Faster-than-average seeds and seeds with above-average coverage score
    higher; a perfectly average seed scores 100. ``seed`` needs ``exec_us``
    and ``bucket_popcount``.
    """
    speed = _step(stats.avg_exec_us / max(seed.exec_us, 1e-9), SPEED_STEPS, 0.25)
    cover = 1.0
    if stats.avg_popcount:
        cover = _step(seed.bucket_popcount / stats.avg_popcount, COVERAGE_STEPS, 0.75)
    p = math.floor(100 * speed * cover + 0.5)
    return min(max(p, 1), max_energy)


def validity(last_depth: int, global_max_depth: int) -> float:
    if global_max_depth == 0:
        return 1.0
    return last_depth / global_max_depth


def depth_energy(p: int, v: float, cfg: EnergyConfig) -> int:
    U = cfg.max_energy
    if v >= 0.5 and 2 * p <= U:
        return 2 * p
    if v < 0.5:
        return p
    return U


@dataclass
class Scheduler:
    cfg: EnergyConfig = field(default_factory=EnergyConfig)
    ledger: DepthLedger = field(default_factory=DepthLedger)

    def energy(self, seed, stats: QueueStats) -> int:
        p = base_energy(seed, stats, self.cfg.max_energy)
        if self.cfg.schedule is Schedule.AFL:
            return p
        return depth_energy(p, validity(seed.last_depth, self.ledger.global_max_depth), self.cfg)

    def observe_execution(self, seed, result) -> None:
        seed.last_depth = result.max_depth
        self.ledger.observe(result.max_depth)
