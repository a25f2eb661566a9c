import pytest
from hypothesis import given, settings, strategies as st

from rtsched.ckpt import BandwidthModel, CkptScheme
from rtsched.experiment import audit
from rtsched.machine import MachineConfig
from rtsched.sim import simulate
from rtsched.wcjs import (
    MIRA_BASELINE_MEDIANS,
    MIRA_THRESHOLDS,
    CostWeights,
    Thresholds,
    category_medians,
    derive_thresholds,
    esd,
    route,
    wcjs_policy,
)
from rtsched.workload import CATEGORIES, Category, Job, Kind, select_rtjs, synthetic_trace

NS, NL, WS, WL = Category.NARROW_SHORT, Category.NARROW_LONG, Category.WIDE_SHORT, Category.WIDE_LONG
M2 = MachineConfig.reduced(2)
M16 = MachineConfig.reduced(16)
PFS16 = CkptScheme.jit(dsize_per_node=16.0, bandwidth_model=BandwidthModel.PFS_CAP)


def test_esd_examples():
    j = Job(1, 1000, 3600, 3600, 512)
    assert esd(j, 1000) == 1.0
    assert esd(j, 1000 + 1800) == pytest.approx(1.5)
    assert esd(j, 5000, running_for=4000) == pytest.approx(1.0)


def test_mira_thresholds():
    assert [MIRA_THRESHOLDS.rtj_enter[c] for c in (NS, NL, WS, WL)] == pytest.approx([1.1, 1.1, 2.0, 1.6])
    assert [MIRA_THRESHOLDS.bj_protect[c] for c in (NS, NL, WS, WL)] == pytest.approx([1.5, 1.5, 17.3, 4.8])
    assert derive_thresholds(MIRA_BASELINE_MEDIANS) == MIRA_THRESHOLDS


def test_threshold_clamps():
    t = derive_thresholds({c: 1.0 for c in CATEGORIES})
    assert set(t.rtj_enter.values()) == {1.1}
    assert derive_thresholds({c: 100.0 for c in CATEGORIES}).rtj_enter[WS] == 2.0
    assert derive_thresholds({}).bj_protect[NS] == 1.5


@given(st.dictionaries(st.sampled_from(CATEGORIES), st.floats(0.5, 50)))
def test_thresholds_always_valid(medians):
    t = derive_thresholds(medians)
    assert all(1.1 <= v <= 2.0 for v in t.rtj_enter.values())
    assert all(v >= 1 for v in t.bj_protect.values())


def test_thresholds_validation():
    with pytest.raises(ValueError):
        Thresholds({c: 1.0 for c in CATEGORIES}, {c: 2.0 for c in CATEGORIES})
    with pytest.raises(ValueError):
        Thresholds({NS: 1.5}, {c: 2.0 for c in CATEGORIES})
    with pytest.raises(ValueError):
        CostWeights(-1, 1, 1)


def test_category_medians():
    assert category_medians([(NS, 1.0), (NS, 3.0), (WL, 2.0)]) == {NS: 2.0, WL: 2.0}


def test_route():
    fresh = Job(1, 0, 600, 600, 512, Kind.REAL_TIME)
    waited = Job(2, 0, 1000, 1000, 512, Kind.REAL_TIME)
    later = Job(3, 0, 400, 400, 512, Kind.REAL_TIME)
    bj = Job(4, 0, 100, 100, 512)
    high, low = route([fresh, bj], 0, MIRA_THRESHOLDS)
    assert high == [] and low == [fresh, bj]
    high, low = route([waited, later, bj], 200, MIRA_THRESHOLDS)
    assert high == [later, waited]  # esd 1.5 before 1.2
    assert low == [bj]


def _two_victims(weights=None):
    # job 1 is 10 min from its walltime, job 2 is 100 min from it; job 4 only adds an event
    jobs = [Job(1, 0, 6000, 6000, 512), Job(2, 0, 11400, 11400, 512),
            Job(3, 5400, 600, 600, 512, Kind.REAL_TIME), Job(4, 5500, 60, 60, 512)]
    return simulate(jobs, M2, wcjs_policy(weights=weights), PFS16)


def test_time_remaining_steers_victim_choice():
    sim = _two_victims()
    (rec,) = sim.preemptions
    assert rec.victim == 2 and rec.time == 5500
    assert not audit(sim, MIRA_THRESHOLDS)


def test_free_placement_means_no_preemption():
    jobs = [Job(1, 0, 6000, 6000, 512), Job(2, 100, 600, 600, 512, Kind.REAL_TIME)]
    sim = simulate(jobs, M2, wcjs_policy(), PFS16)
    assert not sim.preemptions and sim.outcomes()[1].start_time == 100


def test_rtj_occupied_placements_block_preemption():
    jobs = [Job(1, 0, 6000, 6000, 512, Kind.REAL_TIME), Job(2, 0, 7000, 7000, 512, Kind.REAL_TIME),
            Job(3, 10, 600, 600, 512, Kind.REAL_TIME), Job(4, 1000, 60, 60, 512)]
    sim = simulate(jobs, M2, wcjs_policy(), PFS16)
    assert not sim.preemptions
    assert {o.job_id: o for o in sim.outcomes()}[3].start_time == 6000


def test_larger_jobs_are_protected():
    jobs = [Job(1, 0, 6000, 6000, 1024), Job(2, 10, 600, 600, 512, Kind.REAL_TIME), Job(3, 1000, 60, 60, 512)]
    sim = simulate(jobs, M2, wcjs_policy(), PFS16)
    assert not sim.preemptions


@pytest.mark.parametrize("walltime,preempted", [(2000, False), (4000, True)])
def test_slow_batch_jobs_are_protected(walltime, preempted):
    # both batch jobs wait 1100 s, so their running esd is 1.55 or 1.275 against a 1.5 threshold
    jobs = [Job(1, 0, 1100, 1100, 1024), Job(2, 0, walltime, walltime, 512), Job(3, 0, walltime, walltime, 512),
            Job(4, 1200, 600, 600, 512, Kind.REAL_TIME), Job(5, 1300, 60, 60, 512)]
    sim = simulate(jobs, M2, wcjs_policy(), PFS16)
    assert bool(sim.preemptions) is preempted
    assert audit(sim, MIRA_THRESHOLDS) == []


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 1000))
def test_weight_scaling_keeps_decisions(k):
    jobs = select_rtjs(synthetic_trace(120, 1.0, M16, seed=11), "default", 15, seed=4)
    w = CostWeights(1.0, 2.0, 0.5)
    ws = CostWeights(1.0 * k, 2.0 * k, 0.5 * k)
    a = simulate(jobs, M16, wcjs_policy(weights=w), CkptScheme.sys(1800))
    b = simulate(jobs, M16, wcjs_policy(weights=ws), CkptScheme.sys(1800))
    assert a.trace == b.trace


@settings(max_examples=12, deadline=None)
@given(st.integers(0, 5000), st.sampled_from([CkptScheme.no(), CkptScheme.sys(1800), PFS16]))
def test_protection_rules_hold(seed, scheme):
    jobs = select_rtjs(synthetic_trace(80, 1.1, M16, seed=seed), "default", 20, seed=seed)
    sim = simulate(jobs, M16, wcjs_policy(), scheme)
    assert audit(sim, MIRA_THRESHOLDS) == []
