import io
import random

import pytest
from hypothesis import given, settings, strategies as st

from rtsched.machine import MachineConfig
from rtsched.offline import (
    BudgetExceeded,
    Infeasible,
    JobPlan,
    OfflineInstance,
    build_model,
    check_feasible,
    count_lp_rows,
    dump_instance,
    exhaustive,
    export_lp,
    fill_slots,
    load_instance,
    objective,
    random_instance,
    row_violations,
    schedule_values,
    solve_exact,
    threshold_search,
    tiny_instance,
)
from rtsched.workload import Job, Kind

M1, M2, M4 = (MachineConfig.reduced(n) for n in (1, 2, 4))
RT = Kind.REAL_TIME


def inst(jobs, machine=M1, T=None, thresh=1.2):
    return OfflineInstance.create(jobs, machine, T, sd_rtj_thresh=thresh)


def greedy(instance, rng, early=0.0):
    """Random non-preemptive list schedule; ``early`` shifts starts before they are allowed."""
    free = {b: 0.0 for b in range(1, instance.machine.num_blocks + 1)}
    plans = {}
    for j in rng.sample(list(instance.jobs), len(instance.jobs)):
        p = rng.choice(instance.placements(j))
        start = max([j.submit_time] + [free[b] for b in p.blocks]) - early
        for b in p.blocks:
            free[b] = start + j.runtime
        plans[j.id] = JobPlan(j.id, p, start, start + j.runtime)
    return fill_slots(instance, plans)


# ---------------------------------------------------------------- hand examples

def test_single_batch_job():
    sol = solve_exact(inst([Job(1, 0, 100, 100, 512)]))
    assert sol.objective == pytest.approx(1.0)
    assert sol.rtj_sd == 0.0 and len(sol.schedule.plans) == 1


def test_two_jobs_one_block():
    i = inst([Job(1, 0, 1000, 1000, 512), Job(2, 0, 1000, 1000, 512)], T=2)
    sched, obj = solve_exact(i)
    assert obj == pytest.approx(1.5)
    assert check_feasible(i, sched) == []


def test_preemption_pays_off():
    # without a split the best mean is 1.5; with one, job 1's first part ends
    # exactly at 9000 s (512 s overhead each side) and job 1 ends at 12024 s
    i = inst([Job(1, 0, 10000, 10000, 512), Job(2, 9000, 1000, 1000, 512)], T=3)
    sol = solve_exact(i)
    assert sol.schedule.plans[1].preempted
    assert sol.objective == pytest.approx((1.2024 + 1.0) / 2, abs=1e-9)
    assert check_feasible(i, sol.schedule) == []
    assert exhaustive(i).objective == pytest.approx(sol.objective, abs=1e-9)


def test_rtj_cap_makes_infeasible():
    i = inst([Job(1, 0, 1000, 1000, 512, RT), Job(2, 0, 1000, 1000, 512, RT), Job(3, 0, 500, 500, 512)],
             T=3, thresh=1.2)
    with pytest.raises(Infeasible):
        solve_exact(i)
    assert exhaustive(i).objective is None


def test_budget_exceeded():
    big = random_instance(3, n_bj=6, n_rtj=2)
    with pytest.raises(BudgetExceeded):
        solve_exact(big, budget=1e-4)


def test_job_cap():
    jobs = [Job(i, 0, 100, 100, 512) for i in range(1, 10)]
    with pytest.raises(ValueError):
        solve_exact(inst(jobs, M4))


def test_double_preemption_violation():
    i = inst([Job(1, 0, 3000, 3000, 512), Job(2, 0, 100, 100, 512), Job(3, 0, 100, 100, 512)], T=5)
    p = i.placements(i.jobs[0])[0]
    plans = {
        1: JobPlan(1, p, 0, 3200 + 3 * i.ovhd(i.jobs[0]), (1100, 2200), (1 / 3, 1 / 3, 1 / 3)),
        2: JobPlan(2, p, 1000, 1100),
        3: JobPlan(3, p, 2100, 2200),
    }
    bad = check_feasible(i, fill_slots(i, plans))
    assert any("one-preemption" in str(v) for v in bad)


def test_rtj_cap_violation_named():
    # delaying the real-time job to SD 1.3 under a 1.2 cap
    i = inst([Job(1, 0, 1000, 1000, 512, RT), Job(2, 0, 300, 300, 512)], T=2)
    p = i.placements(i.jobs[0])[0]
    plans = {1: JobPlan(1, p, 300, 1300), 2: JobPlan(2, p, 0, 300)}
    bad = check_feasible(i, fill_slots(i, plans))
    assert [v.constraint for v in bad] == ["sdcap"]
    assert "1.3" in str(bad[0])


# ---------------------------------------------------------------- threshold search

def test_threshold_search_lower_bound_binds():
    i = inst([Job(1, 0, 1000, 1000, 512, RT), Job(2, 0, 1000, 1000, 512)], M2, T=2)
    th, sol = threshold_search(i)
    assert th == pytest.approx(1.1) and sol.rtj_sd <= 1.1


def test_threshold_search_forced_wait():
    # two identical real-time jobs on one block: one waits a full runtime, mean SD 1.5
    i = inst([Job(1, 0, 1000, 1000, 512, RT), Job(2, 0, 1000, 1000, 512, RT), Job(3, 0, 200, 200, 512)], T=3)
    th, sol = threshold_search(i, tol=0.01)
    assert abs(th - 1.5) <= 0.01 and sol.rtj_sd == pytest.approx(1.5)
    assert check_feasible(i.with_thresh(th), sol.schedule) == []


def test_threshold_search_infeasible_at_hi():
    jobs = [Job(k, 0, 1000, 1000, 512, RT) for k in range(1, 5)] + [Job(5, 0, 200, 200, 512)]
    with pytest.raises(Infeasible):
        threshold_search(inst(jobs, T=5))


def test_threshold_search_rejects_empty_interval():
    with pytest.raises(ValueError):
        threshold_search(inst([Job(1, 0, 10, 10, 512)]), lo=2.0, hi=1.5)


# ---------------------------------------------------------------- model export

def test_empty_model():
    m = build_model(OfflineInstance((), M1, 1))
    assert m.binary_count == 0 and not m.objective


def test_export_structure_and_determinism():
    m = build_model(random_instance(1, n_bj=2, n_rtj=1, blocks=4, T=3))
    a, b = io.StringIO(), io.StringIO()
    export_lp(m, a)
    export_lp(build_model(random_instance(1, n_bj=2, n_rtj=1, blocks=4, T=3)), b)
    text = a.getvalue()
    assert text == b.getvalue()
    assert text.count("Minimize") == 1 and "\nBinary" in text and text.rstrip().endswith("End")
    assert count_lp_rows(text) == len(m.rows)


def _count(n_bj, n_rtj, blocks, T):
    jobs = [Job(i, 0, 1000, 1000, 512) for i in range(1, n_bj + 1)]
    jobs += [Job(n_bj + i, 0, 1000, 1000, 512, RT) for i in range(1, n_rtj + 1)]
    return build_model(OfflineInstance(tuple(jobs), MachineConfig.reduced(blocks), T)).binary_count


def test_binary_counts_match_published_scale():
    m = build_model(OfflineInstance(
        tuple([Job(1, 0, 1, 1, 512), Job(2, 0, 1, 1, 512), Job(3, 0, 1, 1, 512, RT), Job(4, 0, 1, 1, 512, RT)]),
        M4, 5))
    primary = sum(1 for v in m.variables if v.kind == "B" and v.name.split("_")[0] in ("exB", "exR", "exPb", "exPrmpt"))
    assert primary == 98
    assert _count(3, 2, 16, 5) == 931


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 3), st.integers(0, 2), st.sampled_from([1, 2, 4, 8]), st.integers(1, 4))
def test_binary_count_monotone(n_bj, n_rtj, blocks, T):
    base = _count(n_bj, n_rtj, blocks, T)
    assert _count(n_bj + 1, n_rtj, blocks, T) >= base
    assert _count(n_bj, n_rtj + 1, blocks, T) >= base
    assert _count(n_bj, n_rtj, blocks * 2, T) >= base
    assert _count(n_bj, n_rtj, blocks, T + 1) >= base


def test_instance_roundtrip(tmp_path):
    i = random_instance(4, blocks=8, T=4, thresh=1.3)
    path = tmp_path / "inst.csv"
    path.write_text(dump_instance(i))
    back = load_instance(str(path))
    assert back.jobs == i.jobs and back.max_sequences == 4 and back.sd_rtj_thresh == 1.3
    assert back.machine.num_blocks == 8


def test_instance_validation():
    with pytest.raises(ValueError):
        OfflineInstance((), M1, 0)
    with pytest.raises(ValueError):
        OfflineInstance((), M1, 1, sd_rtj_thresh=0.9)
    with pytest.raises(ValueError):
        OfflineInstance((Job(1, 0, 10, 10, 512),), M1, 1, big_m=5.0)


# ---------------------------------------------------------------- fuzzing against oracles

@pytest.mark.parametrize("seed", range(200))
def test_solver_matches_exhaustive(seed):
    i = tiny_instance(seed)
    ref = exhaustive(i)
    try:
        sol = solve_exact(i)
    except Infeasible:
        assert ref.objective is None
        return
    assert ref.objective == pytest.approx(sol.objective, abs=1e-9)
    assert check_feasible(i, sol.schedule) == []
    assert row_violations(build_model(i), schedule_values(i, sol.schedule)) == []


@pytest.mark.parametrize("seed", range(60))
def test_random_schedules_never_beat_optimum(seed):
    i = tiny_instance(seed, max_jobs=4, max_blocks=2, max_T=4)
    rng = random.Random(seed)
    try:
        best = solve_exact(i).objective
    except Infeasible:
        best = None
    for _ in range(20):
        sched = greedy(i, rng)
        if not check_feasible(i, sched):
            assert best is not None and objective(i, sched) >= best - 1e-9


@pytest.mark.parametrize("seed", range(60))
def test_checker_agrees_with_linear_rows(seed):
    i = tiny_instance(seed, max_jobs=3, max_blocks=2, max_T=3)
    rng = random.Random(1000 + seed)
    model = build_model(i)
    for k in range(8):
        sched = greedy(i, rng, early=rng.choice([0.0, 0.0, 300.0]))
        assert (check_feasible(i, sched) == []) == (row_violations(model, schedule_values(i, sched)) == [])
