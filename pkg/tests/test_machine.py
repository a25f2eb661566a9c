import pytest
from hypothesis import given, strategies as st

from rtsched.machine import (
    MIRA,
    MIRA_PARTITION_SIZES,
    MachineConfig,
    PartitionTooLarge,
    UnknownPartitionSize,
    contains,
    is_buddy_machine,
    overlaps,
    part_dep,
    placement,
    placements_for,
    round_to_partition,
)


def test_mira_defaults():
    assert MIRA.num_blocks == 96
    assert MIRA.pfs_cap == pytest.approx(216.0)
    assert MIRA.legal_partition_sizes == MIRA_PARTITION_SIZES


@pytest.mark.parametrize("size,count", [(512, 96), (1024, 48), (16384, 3), (49152, 1), (8192, 6)])
def test_placement_counts(size, count):
    assert len(placements_for(size)) == count


def test_whole_machine_placement():
    (p,) = placements_for(49152)
    assert p.block_range == (1, 96)


def test_contiguous_tiling():
    p = placement(4096, 3)
    assert p.block_range == (17, 24)


def test_misaligned_32768_uses_midplane_stride():
    ps = placements_for(32768)
    assert [p.first_block for p in ps] == [1, 17, 33]
    assert overlaps(ps[0], ps[1]) and overlaps(ps[1], ps[2])


def test_unknown_size_and_rounding():
    with pytest.raises(UnknownPartitionSize):
        placements_for(1000)
    assert len(placements_for(1000, rounding=True)) == 48


@pytest.mark.parametrize("req,size", [(1000, 1024), (512, 512), (4097, 8192), (1, 512), (49152, 49152)])
def test_round_to_partition(req, size):
    assert round_to_partition(req) == size


def test_round_too_large():
    with pytest.raises(PartitionTooLarge):
        round_to_partition(49153)


@pytest.mark.parametrize("block,want", [(1, 1), (2, 1), (3, 0)])
def test_part_dep(block, want):
    assert part_dep(1024, 1, block) == want


def test_part_dep_out_of_range():
    with pytest.raises(IndexError):
        part_dep(1024, 49, 1)
    with pytest.raises(IndexError):
        part_dep(1024, 1, 97)


def test_overlap_examples():
    a, b, c = placement(1024, 1), placement(512, 2), placement(1024, 2)
    two_three = MachineConfig.reduced(4)
    assert overlaps(placement(1024, 1), placement(2048, 1))
    assert contains(placement(2048, 1), a) and not contains(a, placement(2048, 1))
    assert overlaps(a, b) and not overlaps(a, c)
    assert two_three.num_blocks == 4


def test_reduced_machine_sizes():
    m = MachineConfig.reduced(16)
    assert m.total_nodes == 8192
    assert m.legal_partition_sizes == (512, 1024, 2048, 4096, 8192)
    assert is_buddy_machine(m, m.legal_partition_sizes)
    assert not is_buddy_machine(MIRA, MIRA_PARTITION_SIZES)


def test_config_validation():
    with pytest.raises(ValueError):
        MachineConfig(total_nodes=1000)
    with pytest.raises(ValueError):
        MachineConfig(pfs_usable_fraction=0.0)


@given(st.sampled_from(MIRA_PARTITION_SIZES))
def test_same_size_placements_disjoint_unless_misaligned(size):
    ps = placements_for(size)
    covered = [b for p in ps for b in p.blocks]
    assert max(covered) <= 96
    if 96 % (size // 512) == 0:
        assert len(covered) == len(set(covered)) == 96


@given(st.sampled_from(MIRA_PARTITION_SIZES), st.data())
def test_part_dep_counts(size, data):
    ps = placements_for(size)
    i = data.draw(st.integers(1, len(ps)))
    assert sum(part_dep(size, i, b) for b in range(1, 97)) == size // 512


placements_st = st.sampled_from(MIRA_PARTITION_SIZES).flatmap(
    lambda s: st.integers(1, len(placements_for(s))).map(lambda i: placement(s, i)))


@given(placements_st, placements_st, placements_st)
def test_overlap_and_containment_laws(a, b, c):
    assert overlaps(a, b) == overlaps(b, a)
    if contains(a, b) and contains(b, a):
        assert a.block_range == b.block_range
    if contains(a, b) and contains(b, c):
        assert contains(a, c)
