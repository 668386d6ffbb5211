"""A/B experiments comparing power schedules over repeated seeded trials.

Every trial is an isolated campaign on logical time, so path counts and
execs-to-crash are machine independent; only the per-exec wall time used for
the overhead comparison depends on the host.
"""

from __future__ import annotations

import bisect
import dataclasses
import io
import multiprocessing
import statistics
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats as sstats

from .campaign import Campaign, CampaignConfig, read_corpus_dir
from .executor import DEFAULT_TIMEOUT_US
from .scheduler import EnergyConfig, Schedule
from .targets import make_target

#: the crash each synthetic target hides behind its checks
TARGET_BUG = {"nested4": "deep_bug", "nested8": "deep_bug", "magic32": "magic_hit"}


class ExperimentError(ValueError):
    pass


@dataclass
class Experiment:
    target: str
    schedules: tuple[str, ...] = ("depth", "afl")
    trials: int = 20
    budget_execs: int = 2_000_000
    rng_seeds: list[int] | None = None
    out_dir: Path | None = None
    target_seed: int = 0
    max_energy: int = 1600
    timeout_us: int = DEFAULT_TIMEOUT_US
    corpus_dir: Path | None = None
    #: end a trial once the target's bug is found; paths are then counted at that point
    stop_at_bug: bool = False
    jobs: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ExperimentError("trials must be at least 1")
        if self.rng_seeds is None:
            self.rng_seeds = list(range(1, self.trials + 1))
        if len(self.rng_seeds) != self.trials:
            raise ExperimentError(
                f"{len(self.rng_seeds)} rng seeds given for {self.trials} trials"
            )
        for s in self.schedules:
            Schedule(s)
        if len(set(self.schedules)) != len(self.schedules):
            raise ExperimentError("schedules must be distinct")

    @property
    def bug_kind(self) -> str | None:
        return TARGET_BUG.get(self.target)

    def campaign_config(self, schedule: str, rng_seed: int, out_dir: Path | None = None) -> CampaignConfig:
        return CampaignConfig(
            energy=EnergyConfig(self.max_energy, Schedule(schedule)),
            timeout_us=self.timeout_us,
            rng_seed=rng_seed,
            logical_time=True,
            out_dir=out_dir,
            stop_on_crash=self.bug_kind if self.stop_at_bug else None,
        )


@dataclass
class TrialResult:
    schedule: str
    rng_seed: int
    execs: int
    paths: int
    max_depth: int
    crashes_unique: int
    execs_to_bug: int | None
    mean_exec_us: float
    path_execs: list[int] = field(repr=False, default_factory=list)


def run_trial(exp: Experiment, schedule: str, rng_seed: int) -> TrialResult:
    harness = make_target(exp.target, exp.target_seed)
    out = None
    if exp.out_dir is not None:
        out = Path(exp.out_dir) / schedule / f"trial_{rng_seed}"
    if exp.corpus_dir is not None:
        corpus = read_corpus_dir(exp.corpus_dir)
    else:
        corpus = [(f"seed{i}", data) for i, data in enumerate(harness.initial_corpus())]
    with Campaign(harness.layout, harness, exp.campaign_config(schedule, rng_seed, out)) as camp:
        camp.load_corpus(corpus)
        st = camp.run(max_execs=exp.budget_execs)
    bug = exp.bug_kind
    return TrialResult(
        schedule=schedule,
        rng_seed=rng_seed,
        execs=st.execs_total,
        paths=st.paths_total,
        max_depth=st.max_depth_global,
        crashes_unique=st.crashes_unique,
        execs_to_bug=st.first_crash_execs.get(bug) if bug else None,
        mean_exec_us=st.mean_exec_us,
        path_execs=list(st.path_execs),
    )


def _run_task(args) -> TrialResult:
    return run_trial(*args)


@dataclass(frozen=True)
class PathCurve:
    """Paths found as a step function of executions."""

    points: tuple[tuple[int, float], ...]
    budget: int

    @classmethod
    def from_discoveries(cls, path_execs: Sequence[int], budget: int) -> PathCurve:
        return cls(tuple((e, i + 1) for i, e in enumerate(sorted(path_execs))), budget)

    @classmethod
    def median_of(cls, trials: Sequence[Sequence[int]], budget: int) -> PathCurve:
        runs = [sorted(t) for t in trials]
        grid = sorted({e for t in runs for e in t})
        points = []
        for g in grid:
            value = statistics.median(bisect.bisect_right(t, g) for t in runs)
            if not points or value != points[-1][1]:
                points.append((g, value))
        return cls(tuple(points), budget)

    @property
    def final_paths(self) -> float:
        return self.points[-1][1] if self.points else 0

    def execs_to_reach(self, paths: float) -> int | None:
        for execs, value in self.points:
            if value >= paths:
                return execs
        return None


@dataclass(frozen=True)
class EfficiencyRatio:
    value: float
    censored: bool = False

    def __str__(self):
        return f"{'>' if self.censored else ''}{self.value:.2f}"


def efficiency_ratio(a: PathCurve, b: PathCurve, paths: float | None = None) -> EfficiencyRatio:
    """How many times more executions ``b`` needs to match ``a``'s path count.

    ``paths`` defaults to ``a``'s final count. When ``b`` never gets there the
    result is a lower bound, ``b``'s budget over ``a``'s executions.
    """
    target = a.final_paths if paths is None else paths
    t_a = a.execs_to_reach(target)
    if t_a is None:
        raise ValueError(f"curve a never reaches {target} paths")
    t_a = max(t_a, 1)
    t_b = b.execs_to_reach(target)
    if t_b is None:
        return EfficiencyRatio(b.budget / t_a, censored=True)
    return EfficiencyRatio(t_b / t_a)


def _median_iqr(values: Sequence[float]) -> tuple[float, float, float]:
    q1, med, q3 = np.percentile(np.asarray(values, dtype=float), [25, 50, 75])
    return float(med), float(q1), float(q3)


@dataclass
class ArmSummary:
    schedule: str
    budget: int
    trials: list[TrialResult]

    def _bug_execs(self) -> list[int]:
        # unfound bugs are censored at the budget
        return [t.execs_to_bug if t.execs_to_bug is not None else self.budget for t in self.trials]

    @property
    def paths(self) -> tuple[float, float, float]:
        return _median_iqr([t.paths for t in self.trials])

    @property
    def execs_to_bug(self) -> tuple[float, float, float]:
        return _median_iqr(self._bug_execs())

    @property
    def bugs_found(self) -> int:
        return sum(t.execs_to_bug is not None for t in self.trials)

    @property
    def mean_exec_us(self) -> float:
        return statistics.fmean(t.mean_exec_us for t in self.trials)

    @property
    def curve(self) -> PathCurve:
        return PathCurve.median_of([t.path_execs for t in self.trials], self.budget)


def rank_sum_p(x: Sequence[float], y: Sequence[float]) -> float:
    """Two-sided Mann-Whitney U p-value; 1.0 when every value ties."""
    if len(set(x) | set(y)) <= 1:
        return 1.0
    return float(sstats.mannwhitneyu(x, y, alternative="two-sided").pvalue)


@dataclass
class Comparison:
    treatment: str
    baseline: str
    bug_speedup: float | None  # baseline median execs-to-bug / treatment median
    bug_p: float | None
    paths_p: float
    efficiency: EfficiencyRatio | None
    overhead_pct: float


@dataclass
class ExperimentSummary:
    experiment: Experiment
    arms: dict[str, ArmSummary]
    comparisons: list[Comparison]

    def rows(self) -> list[dict]:
        rows = []
        for arm in self.arms.values():
            pm, pq1, pq3 = arm.paths
            row = {
                "schedule": arm.schedule,
                "trials": len(arm.trials),
                "paths_median": pm,
                "paths_q1": pq1,
                "paths_q3": pq3,
                "mean_exec_us": round(arm.mean_exec_us, 3),
            }
            if self.experiment.bug_kind:
                bm, bq1, bq3 = arm.execs_to_bug
                row.update(
                    bugs_found=arm.bugs_found,
                    execs_to_bug_median=bm,
                    execs_to_bug_q1=bq1,
                    execs_to_bug_q3=bq3,
                )
            rows.append(row)
        return rows

    def to_csv(self) -> str:
        rows = self.rows()
        cols = list(rows[0])
        buf = io.StringIO()
        buf.write(",".join(cols) + "\n")
        for r in rows:
            buf.write(",".join(str(r.get(c, "")) for c in cols) + "\n")
        return buf.getvalue()

    def to_table(self) -> str:
        rows = self.rows()
        cols = list(rows[0])
        cells = [[str(r[c]) for c in cols] for r in rows]
        widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
        lines = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
        lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
        exp = self.experiment
        lines.append("")
        lines.append(
            f"target={exp.target} budget={exp.budget_execs} execs "
            f"trials={exp.trials} stop_at_bug={exp.stop_at_bug}"
        )
        for c in self.comparisons:
            parts = [f"{c.treatment} vs {c.baseline}:"]
            if c.bug_speedup is not None:
                parts.append(f"execs-to-bug ratio={c.bug_speedup:.2f} (rank-sum p={c.bug_p:.4g})")
            parts.append(f"paths rank-sum p={c.paths_p:.4g}")
            if c.efficiency is not None:
                parts.append(f"equal-paths efficiency={c.efficiency}")
            parts.append(f"per-exec overhead={c.overhead_pct:+.2f}%")
            lines.append(" ".join(parts))
        return "\n".join(lines) + "\n"


def compare(exp: Experiment, treatment: ArmSummary, baseline: ArmSummary) -> Comparison:
    bug_speedup = bug_p = None
    if exp.bug_kind:
        t_med = treatment.execs_to_bug[0]
        b_med = baseline.execs_to_bug[0]
        bug_speedup = b_med / t_med if t_med else float("inf")
        bug_p = rank_sum_p(treatment._bug_execs(), baseline._bug_execs())
    paths_p = rank_sum_p([t.paths for t in treatment.trials], [t.paths for t in baseline.trials])
    efficiency = None
    if not exp.stop_at_bug:
        a, b = treatment.curve, baseline.curve
        efficiency = efficiency_ratio(a, b, paths=min(a.final_paths, b.final_paths))
    base_us = baseline.mean_exec_us
    overhead = 100.0 * (treatment.mean_exec_us - base_us) / base_us if base_us else 0.0
    return Comparison(
        treatment.schedule, baseline.schedule, bug_speedup, bug_p, paths_p, efficiency, overhead
    )


def _check_arms(exp: Experiment) -> None:
    configs = [exp.campaign_config(s, 0) for s in exp.schedules]
    stripped = [
        dataclasses.replace(c, energy=dataclasses.replace(c.energy, schedule=Schedule.AFL))
        for c in configs
    ]
    if any(c != stripped[0] for c in stripped):
        raise ExperimentError("arms differ in more than the schedule")


def run_experiment(exp: Experiment) -> ExperimentSummary:
    if exp.out_dir is not None:
        out = Path(exp.out_dir)
        if out.exists() and any(out.iterdir()):
            raise ExperimentError(f"output directory {str(out)!r} is not empty")
        out.mkdir(parents=True, exist_ok=True)
    _check_arms(exp)

    tasks = [(exp, s, seed) for s in exp.schedules for seed in exp.rng_seeds]
    if exp.jobs > 1:
        with multiprocessing.Pool(exp.jobs) as pool:
            results = pool.map(_run_task, tasks)
    else:
        results = [_run_task(t) for t in tasks]

    arms = {
        s: ArmSummary(s, exp.budget_execs, [r for r in results if r.schedule == s])
        for s in exp.schedules
    }
    baseline = arms[exp.schedules[-1]]
    comparisons = [compare(exp, arms[s], baseline) for s in exp.schedules[:-1]]
    summary = ExperimentSummary(exp, arms, comparisons)

    if exp.out_dir is not None:
        out = Path(exp.out_dir)
        (out / "summary.csv").write_text(summary.to_csv())
        (out / "summary.txt").write_text(summary.to_table())
        with open(out / "trials.csv", "w") as f:
            f.write("schedule,rng_seed,execs,paths,max_depth,crashes_unique,execs_to_bug,mean_exec_us\n")
            for r in results:
                bug = "" if r.execs_to_bug is None else r.execs_to_bug
                f.write(
                    f"{r.schedule},{r.rng_seed},{r.execs},{r.paths},{r.max_depth},"
                    f"{r.crashes_unique},{bug},{r.mean_exec_us:.3f}\n"
                )
        with open(out / "curves.csv", "w") as f:
            f.write("schedule,execs,median_paths\n")
            for arm in arms.values():
                for execs, paths in arm.curve.points:
                    f.write(f"{arm.schedule},{execs},{paths}\n")
    return summary
