from types import SimpleNamespace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from depthfuzz.scheduler import (
    DepthLedger,
    EnergyConfig,
    QueueStats,
    Schedule,
    Scheduler,
    base_energy,
    depth_energy,
    validity,
)
from oracles import piecewise_energy

CFG = EnergyConfig(1600)


def seed(exec_us=100, popcount=10, last_depth=0):
    return SimpleNamespace(exec_us=exec_us, bucket_popcount=popcount, last_depth=last_depth)


class TestBaseEnergy:
    STATS = QueueStats(avg_exec_us=100, avg_popcount=10)

    def test_average_seed(self):
        assert base_energy(seed(100, 10), self.STATS) == 100

    def test_fast_high_coverage(self):
        assert base_energy(seed(25, 15), self.STATS) == 450

    def test_slow_low_coverage(self):
        assert base_energy(seed(400, 5), self.STATS) == 19

    @pytest.mark.parametrize(
        "exec_us, speed", [(20, 3), (25, 3), (40, 2), (50, 2), (99, 1), (100, 1), (150, 0.5), (200, 0.5), (201, 0.25)]
    )
    def test_speed_steps(self, exec_us, speed):
        assert base_energy(seed(exec_us, 10), self.STATS) == round(100 * speed)

    def test_clamped_to_max(self):
        assert base_energy(seed(1, 100), self.STATS, max_energy=300) == 300

    def test_zero_avg_popcount(self):
        assert base_energy(seed(100, 0), QueueStats(100, 0)) == 100


class TestValidity:
    def test_full(self):
        assert validity(12, 12) == 1.0

    def test_half(self):
        assert validity(6, 12) == 0.5

    def test_no_probes(self):
        assert validity(0, 0) == 1.0

    @given(st.integers(1, 1000), st.data())
    def test_monotone_in_last_depth(self, gmax, data):
        a = data.draw(st.integers(0, gmax))
        b = data.draw(st.integers(a, gmax))
        assert validity(a, gmax) <= validity(b, gmax)
        assert 0.0 <= validity(a, gmax) <= 1.0


class TestDepthEnergy:
    @pytest.mark.parametrize(
        "p, v, expected",
        [(100, 0.7, 200), (100, 0.3, 100), (900, 0.9, 1600), (800, 0.5, 1600), (801, 0.5, 1600), (1, 0.49, 1)],
    )
    def test_cases(self, p, v, expected):
        assert depth_energy(p, v, CFG) == expected

    def test_exhaustive_against_transcription(self):
        for U in (2, 3, 1600, 1601):
            cfg = EnergyConfig(U)
            for p in range(1, U + 1):
                for v in (0, 0.25, 0.49, 0.5, 0.75, 1.0):
                    got = depth_energy(p, v, cfg)
                    assert got == piecewise_energy(p, v, U)
                    assert p <= got <= U

    @given(st.integers(1, 1599), st.floats(0.5, 1.0), st.floats(0.0, 0.4999))
    def test_validity_dominance(self, p, v_hi, v_lo):
        assert depth_energy(p, v_hi, CFG) > depth_energy(p, v_lo, CFG)

    @given(st.integers(1, 1600), st.floats(0.5, 1.0), st.floats(0.5, 1.0))
    def test_same_region_same_energy(self, p, v1, v2):
        assert depth_energy(p, v1, CFG) == depth_energy(p, v2, CFG)

    def test_max_energy_floor(self):
        with pytest.raises(ValueError):
            EnergyConfig(1)


class TestLedger:
    def test_observe_updates(self):
        sch = Scheduler(CFG, DepthLedger(5))
        s = seed()
        sch.observe_execution(s, SimpleNamespace(max_depth=9))
        assert sch.ledger.global_max_depth == 9 and s.last_depth == 9
        sch.observe_execution(s, SimpleNamespace(max_depth=3))
        assert sch.ledger.global_max_depth == 9 and s.last_depth == 3

    def test_fresh_zero_depth(self):
        sch = Scheduler(CFG)
        s = seed()
        sch.observe_execution(s, SimpleNamespace(max_depth=0))
        assert sch.ledger.global_max_depth == 0
        assert validity(s.last_depth, sch.ledger.global_max_depth) == 1.0

    @given(st.lists(st.integers(0, 50)))
    def test_global_max_non_decreasing(self, depths):
        ledger = DepthLedger()
        prev = 0
        for d in depths:
            ledger.observe(d)
            assert ledger.global_max_depth >= prev
            prev = ledger.global_max_depth
        assert ledger.global_max_depth == max(depths, default=0)


class TestScheduler:
    STATS = QueueStats(100, 10)

    def test_depth_doubles_valid_seed(self):
        sch = Scheduler(EnergyConfig(1600, Schedule.DEPTH), DepthLedger(10))
        assert sch.energy(seed(last_depth=6), self.STATS) == 200
        assert sch.energy(seed(last_depth=4), self.STATS) == 100

    def test_afl_ignores_ledger(self):
        sch = Scheduler(EnergyConfig(1600, Schedule.AFL), DepthLedger(10))
        assert sch.energy(seed(last_depth=10), self.STATS) == 100
        assert sch.energy(seed(last_depth=1), self.STATS) == 100
