import pytest
from hypothesis import given, strategies as st

from rtsched.ckpt import (
    CKPT,
    COMPUTE,
    READ,
    REDO,
    BandwidthModel,
    CkptScheme,
    OverheadEvent,
    OverheadLedger,
    Variant,
    account,
    checkpoint_positions,
    cut_segment,
    ovhd_formulation,
    plan_app_checkpoints,
    plan_segment,
    preempt_loss,
    write_time,
)
from rtsched.machine import MIRA

PFS16 = CkptScheme.jit(dsize_per_node=16.0, bandwidth_model=BandwidthModel.PFS_CAP)


def test_write_time_examples():
    assert write_time(512, PFS16) == pytest.approx(512.0)
    assert write_time(49152, PFS16) == pytest.approx(786432 / 216)
    assert write_time(4096, CkptScheme.jit(dsize_per_node=0.0)) == 0.0


def test_per_node_min_bandwidth():
    s = CkptScheme.sys(dsize_per_node=4.0)
    assert write_time(512, s) == pytest.approx(4 * 512 / min(512 * 2, 216))
    assert write_time(64, s) == pytest.approx(4 * 64 / 128)


@pytest.mark.parametrize("nodes,want", [(512, 512.0), (8192, 131072 / 216), (128, 512.0)])
def test_ovhd_formulation(nodes, want):
    assert ovhd_formulation(nodes) == pytest.approx(want)
    assert abs(ovhd_formulation(8192) - 606.8) < 0.1


@pytest.mark.parametrize("args,want", [
    ((7200, 300, 0.10), (2, 2400)),
    ((7200, 300, 0.05), (1, 3600)),
    ((7200, 1000, 0.05), (0, 7200)),
])
def test_plan_app_checkpoints(args, want):
    count, interval = plan_app_checkpoints(*args)
    assert count == want[0] and interval == pytest.approx(want[1])


@given(st.floats(1, 1e6), st.floats(0.01, 1e4), st.floats(0.01, 0.99))
def test_app_budget_never_exceeded(wall, write, pct):
    count, interval = plan_app_checkpoints(wall, write, pct)
    assert count * write <= pct * wall * (1 + 1e-9)
    assert interval == pytest.approx(wall / (count + 1))


def test_checkpoint_positions():
    sys30 = CkptScheme.sys(1800)
    assert checkpoint_positions(9000, 5400, 512, sys30) == [1800, 3600]
    assert checkpoint_positions(9000, 5401, 512, sys30) == [1800, 3600, 5400]
    frac = CkptScheme.app(app_interval_fraction=0.3)
    assert checkpoint_positions(10000, 10000, 512, frac) == pytest.approx([3000, 6000, 9000])
    assert checkpoint_positions(9000, 9000, 512, CkptScheme.jit()) == []


def test_preempt_loss_examples():
    no = preempt_loss(512, 1800, 0, 1800, CkptScheme.no())
    assert (no.redo, no.restart_read, no.rtj_wait) == (1800, 0, 0)
    sys = preempt_loss(512, 4200, 3600, 4200, CkptScheme.sys(1800))
    assert sys.redo == pytest.approx(600)
    jit = preempt_loss(512, 1000, 0, 1000, PFS16)
    assert jit.rtj_wait == pytest.approx(512) and jit.redo == 0 and jit.restart_read == pytest.approx(512)


def test_segment_plan_and_cut():
    spans = plan_segment(0, 0, 5000, 0, [1800, 3600], 100)
    assert [s.kind for s in spans] == [COMPUTE, CKPT, COMPUTE, CKPT, COMPUTE]
    assert spans[-1].t1 == pytest.approx(5200)
    cut = cut_segment(spans, 2500, Variant.SYS, 0.0)
    assert cut.saved == 1800 and cut.progress == pytest.approx(2400)
    assert cut.redo == pytest.approx(600)
    assert cut.spans[-1].kind == REDO
    # a checkpoint still being written saves nothing
    mid_write = cut_segment(spans, 1850, Variant.SYS, 0.0)
    assert mid_write.saved == 0.0 and mid_write.redo == pytest.approx(1800)
    jit = cut_segment(spans, 2500, Variant.JIT, 0.0)
    assert jit.redo == 0 and jit.saved == pytest.approx(2400)


def test_read_span_in_resumed_segment():
    spans = plan_segment(100, 1000, 3000, 50, [], 0)
    assert spans[0].kind == READ and spans[0].length == 50
    assert spans[-1].t1 == pytest.approx(100 + 50 + 2000)


def test_account():
    led = account(OverheadLedger(), OverheadEvent(CKPT, 1, 512), 512, PFS16)
    assert led.chr_sys_ckpt == pytest.approx(512 * 512 / 3600)
    assert abs(led.chr_sys_ckpt - 72.8) < 0.05
    app = account(OverheadLedger(), OverheadEvent(CKPT, 4, 360), 1024, CkptScheme.app())
    assert app.chr_sys_ckpt == 0 and app.chr_job_ckpt == {4: pytest.approx(102.4)}
    pre = account(OverheadLedger(), OverheadEvent(REDO, 2, 3600), 512, CkptScheme.no())
    assert pre.chr_sys_pre == pytest.approx(512) and pre.chr_sys_ckpt == 0
    with pytest.raises(ValueError):
        account(OverheadLedger(), OverheadEvent(CKPT, 1, 5), 512, CkptScheme.no())


def test_scheme_validation_and_labels():
    with pytest.raises(ValueError):
        CkptScheme.sys(0)
    with pytest.raises(ValueError):
        CkptScheme.app(1.5)
    assert [CkptScheme.no().label(), CkptScheme.sys().label(), CkptScheme.app(0.1).label(),
            CkptScheme.jit().label()] == ["no", "sys1800", "app10", "jit"]
    assert MIRA.mem_per_node == 16
