import gzip
import io
import math

import pytest
from hypothesis import given, strategies as st

from rtsched.machine import MIRA
from rtsched.workload import (
    Category,
    EmptyTraceError,
    InsufficientJobsError,
    Job,
    JobOutcome,
    Kind,
    TraceParseError,
    categorize,
    middle_window,
    normalize_sizes,
    parse_trace,
    select_rtjs,
    synthetic_trace,
    write_csv,
)


def swf_line(jid, submit, run, procs, req_time):
    fields = [jid, submit, 0, run, procs, -1, -1, procs, req_time] + [-1] * 9
    return " ".join(str(x) for x in fields)


@pytest.mark.parametrize("nodes,runtime,cat", [
    (512, 3600, Category.NARROW_SHORT),
    (4608, 121 * 60, Category.WIDE_LONG),
    (4096, 7200, Category.NARROW_SHORT),
    (1000, 7201, Category.NARROW_LONG),
    (8192, 60, Category.WIDE_SHORT),
])
def test_categorize(nodes, runtime, cat):
    assert categorize(Job(1, 0, runtime, runtime, nodes)) is cat


def test_job_validation():
    with pytest.raises(ValueError):
        Job(1, 0, 10, 20, 512)
    with pytest.raises(ValueError):
        Job(1, -1, 10, 10, 512)
    with pytest.raises(ValueError):
        Job(1, 0, 10, 10, 0)


def test_swf_field_mapping():
    (job,) = parse_trace(swf_line(7, 0, 3600, 512, 7200).encode())
    assert (job.id, job.submit_time, job.runtime, job.walltime, job.nodes) == (7, 0, 3600, 7200, 512)
    assert job.kind is Kind.BATCH


def test_swf_gzip_and_skips():
    text = "; comment\n" + swf_line(1, 10, 60, 512, 120) + "\n" + swf_line(2, 5, -1, 512, 60) + "\n"
    diag = []
    jobs = parse_trace(gzip.compress(text.encode()), diagnostics=diag)
    assert [j.id for j in jobs] == [1]
    assert len(diag) == 1 and "job 2" in diag[0]


def test_swf_walltime_never_below_runtime():
    (job,) = parse_trace(swf_line(1, 0, 500, 512, 300).encode())
    assert job.walltime == 500


def test_swf_procs_per_node():
    (job,) = parse_trace(swf_line(1, 0, 60, 1000, 60).encode(), procs_per_node=16)
    assert job.nodes == 63


def test_csv_roundtrip_and_sorting():
    jobs = [Job(2, 50, 100, 90, 1024, Kind.REAL_TIME), Job(1, 10, 100, 100, 512)]
    buf = io.StringIO()
    write_csv(jobs, buf)
    back = parse_trace(buf.getvalue().encode(), "csv")
    assert [j.id for j in back] == [1, 2]
    assert back[1] == jobs[0]


def test_csv_single_row():
    src = b"id,submit,walltime,runtime,nodes,kind\n1,0,60,60,512,batch\n"
    assert len(parse_trace(src, "csv")) == 1


def test_csv_bad_nodes_names_line():
    src = b"id,submit,walltime,runtime,nodes,kind\n1,0,60,60,512,batch\n2,0,60,60,abc,batch\n"
    with pytest.raises(TraceParseError) as exc:
        parse_trace(src, "csv")
    assert exc.value.line == 3


def test_empty_trace():
    with pytest.raises(EmptyTraceError):
        parse_trace(b"; nothing\n")


@pytest.mark.parametrize("nodes,source,want", [(5000, 5000, 49152), (100, 5000, 984), (1, 49152, 1)])
def test_normalize_sizes(nodes, source, want):
    (j,) = normalize_sizes([Job(1, 0, 10, 10, nodes)], source)
    assert j.nodes == want


@given(st.integers(1, 10000), st.integers(1, 10000), st.integers(1, 20000))
def test_normalize_monotone_and_idempotent(a, b, source):
    ja, jb = normalize_sizes([Job(1, 0, 1, 1, a), Job(2, 0, 1, 1, b)], source)
    assert (ja.nodes <= jb.nodes) == (a <= b) or ja.nodes == jb.nodes
    same = normalize_sizes([Job(1, 0, 1, 1, min(a, 49152))], 49152)
    assert same[0].nodes == min(a, 49152)


def _hundred():
    return [Job(i, i * 10.0, 7200, 600 * (1 + i % 12), 512) for i in range(1, 101)]


def test_select_default_and_walltime90():
    jobs = _hundred()
    d = select_rtjs(jobs, "default", 10, seed=7)
    assert sum(j.is_rtj for j in d) == 10
    w = select_rtjs(jobs, "walltime90", 10, seed=7)
    rt = [j for j in w if j.is_rtj]
    assert len(rt) == 10 and all(j.runtime < 5400 for j in rt)
    assert not any(j.is_rtj for j in select_rtjs(jobs, "default", 0, seed=3))


def test_select_reproducible_and_varied():
    jobs = _hundred()
    a = select_rtjs(jobs, "default", 10, seed=1)
    assert a == select_rtjs(jobs, "default", 10, seed=1)
    samples = {tuple(j.id for j in select_rtjs(jobs, "default", 10, seed=s) if j.is_rtj) for s in range(10)}
    assert len(samples) == 10


def test_select_rounding_half_up():
    jobs = _hundred()[:30]
    assert sum(j.is_rtj for j in select_rtjs(jobs, "default", 5, seed=0)) == 2  # 1.5 rounds up


def test_select_insufficient():
    jobs = [Job(i, 0, 9000, 9000, 512) for i in range(1, 11)]
    with pytest.raises(InsufficientJobsError):
        select_rtjs(jobs, "walltime90", 20, seed=0)


def test_select_external():
    jobs = _hundred()
    ext = [Job(1, 0, 300, 200, 1024)]
    out = select_rtjs(jobs, "external", 10, seed=4, external=ext)
    rt = [j for j in out if j.is_rtj]
    assert len(out) == 110 and len(rt) == 10
    assert all(10 <= j.submit_time <= 1000 for j in rt)
    assert len({j.id for j in out}) == 110
    with pytest.raises(InsufficientJobsError):
        select_rtjs(jobs, "external", 10, seed=4)


def test_middle_window():
    day = 86400.0
    jobs = [Job(i, i * day + 1, 10, 10, 512) for i in range(14)]
    outs = [JobOutcome(j.id, j.submit_time, j.submit_time + 10) for j in jobs]
    o, j = middle_window(outs, jobs, (4 * day, 11 * day))
    assert [x.id for x in j] == list(range(4, 11)) and len(o) == 7
    assert middle_window(outs, jobs, (0, 15 * day))[1] == jobs
    assert middle_window(outs, jobs, (5, 5)) == ([], [])


@given(st.integers(1, 20000), st.floats(1, 200000))
def test_categories_partition(nodes, runtime):
    j = Job(1, 0, runtime, runtime, min(nodes, 49152))
    assert categorize(j) in set(Category)


def test_synthetic_trace_load():
    jobs = synthetic_trace(500, 0.85, MIRA, seed=1)
    assert len(jobs) == 500 and jobs == synthetic_trace(500, 0.85, MIRA, seed=1)
    span = jobs[-1].submit_time - jobs[0].submit_time
    load = sum(j.runtime * j.nodes for j in jobs) / (span * MIRA.total_nodes)
    assert 0.6 < load < 1.2
    assert all(j.runtime <= j.walltime for j in jobs)
    assert math.isclose(min(j.submit_time for j in jobs), 0)
