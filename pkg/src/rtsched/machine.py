"""Partitioned machine model.

The machine is a row of 512-node blocks (96 of them on Mira).  A partition of
``k`` blocks may only sit at aligned offsets; two placements conflict when
their block ranges intersect.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

MIRA_PARTITION_SIZES = (512, 1024, 2048, 4096, 8192, 12288, 16384, 24576, 32768, 49152)


class UnknownPartitionSize(ValueError):
    pass


class PartitionTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class MachineConfig:
    total_nodes: int = 49152
    block_size: int = 512
    legal_partition_sizes: tuple[int, ...] = MIRA_PARTITION_SIZES
    mem_per_node: float = 16.0  # GB
    pfs_bandwidth: float = 240.0  # GB/s
    pfs_usable_fraction: float = 0.90
    io_node_ratio: int = 128  # compute nodes per I/O node
    io_node_bandwidth: float = 4.0  # GB/s per I/O node
    per_node_io_bandwidth: float = 2.0  # GB/s
    # placement stride (in blocks) for sizes that do not tile the machine
    misaligned_stride_blocks: int = 16

    def __post_init__(self):
        if self.block_size <= 0 or self.total_nodes <= 0 or self.total_nodes % self.block_size:
            raise ValueError("total_nodes must be a positive multiple of block_size")
        sizes = tuple(sorted(set(self.legal_partition_sizes)))
        if not sizes:
            raise ValueError("at least one legal partition size is required")
        for s in sizes:
            if s <= 0 or s % self.block_size or s > self.total_nodes:
                raise ValueError(f"illegal partition size {s}")
        object.__setattr__(self, "legal_partition_sizes", sizes)
        if not 0 < self.pfs_usable_fraction <= 1:
            raise ValueError("pfs_usable_fraction must lie in (0, 1]")
        if self.misaligned_stride_blocks <= 0:
            raise ValueError("misaligned_stride_blocks must be positive")

    @property
    def num_blocks(self) -> int:
        return self.total_nodes // self.block_size

    @property
    def pfs_cap(self) -> float:
        """Usable PFS bandwidth for checkpoint traffic (GB/s)."""
        return self.pfs_usable_fraction * self.pfs_bandwidth

    @classmethod
    def reduced(cls, num_blocks: int, **overrides) -> "MachineConfig":
        """A smaller machine keeping the Mira sizes that still fit."""
        block = overrides.get("block_size", 512)
        total = num_blocks * block
        sizes = tuple(s for s in MIRA_PARTITION_SIZES if s <= total) or (block,)
        overrides.setdefault("legal_partition_sizes", sizes)
        return cls(total_nodes=total, **overrides)


MIRA = MachineConfig()


@dataclass(frozen=True, order=True)
class PartitionPlacement:
    size_blocks: int
    placement_index: int  # 1-based, per size
    first_block: int  # 1-based, inclusive
    last_block: int = field(compare=False)

    @property
    def block_range(self) -> tuple[int, int]:
        return (self.first_block, self.last_block)

    @property
    def blocks(self) -> range:
        return range(self.first_block, self.last_block + 1)

    def __str__(self):
        return f"{self.size_blocks}x512@{self.first_block}-{self.last_block}"


def round_to_partition(requested_nodes: int, cfg: MachineConfig = MIRA) -> int:
    """Smallest legal partition size that holds ``requested_nodes``."""
    if requested_nodes <= 0:
        raise ValueError("requested_nodes must be positive")
    if requested_nodes > cfg.total_nodes:
        raise PartitionTooLarge(f"{requested_nodes} nodes exceed the {cfg.total_nodes}-node machine")
    for size in cfg.legal_partition_sizes:
        if size >= requested_nodes:
            return size
    raise PartitionTooLarge(f"no legal partition holds {requested_nodes} nodes")


@lru_cache(maxsize=None)
def _placements(size_nodes: int, cfg: MachineConfig) -> tuple[PartitionPlacement, ...]:
    k = size_nodes // cfg.block_size
    n = cfg.num_blocks
    stride = k if n % k == 0 else cfg.misaligned_stride_blocks
    offsets = range(0, n - k + 1, stride)
    return tuple(
        PartitionPlacement(k, i + 1, off + 1, off + k) for i, off in enumerate(offsets)
    )


def placements_for(size_nodes: int, cfg: MachineConfig = MIRA, *, rounding: bool = False) -> list[PartitionPlacement]:
    """All aligned placements for a partition of ``size_nodes`` nodes.

    With ``rounding`` a non-legal request is first rounded up to a legal size.
    """
    if size_nodes not in cfg.legal_partition_sizes:
        if not rounding:
            raise UnknownPartitionSize(f"{size_nodes} is not a legal partition size")
        size_nodes = round_to_partition(size_nodes, cfg)
    return list(_placements(size_nodes, cfg))


def placement(size_nodes: int, placement_index: int, cfg: MachineConfig = MIRA) -> PartitionPlacement:
    options = _placements(_legal(size_nodes, cfg), cfg)
    if not 1 <= placement_index <= len(options):
        raise IndexError(f"placement index {placement_index} out of range 1..{len(options)}")
    return options[placement_index - 1]


def part_dep(size_nodes: int, placement_index: int, block_index: int, cfg: MachineConfig = MIRA) -> int:
    """Partition-dependency matrix entry: 1 iff the placement covers the block."""
    p = placement(size_nodes, placement_index, cfg)
    if not 1 <= block_index <= cfg.num_blocks:
        raise IndexError(f"block index {block_index} out of range 1..{cfg.num_blocks}")
    return int(p.first_block <= block_index <= p.last_block)


def overlaps(a: PartitionPlacement, b: PartitionPlacement) -> bool:
    return a.first_block <= b.last_block and b.first_block <= a.last_block


def contains(parent: PartitionPlacement, child: PartitionPlacement) -> bool:
    return parent.first_block <= child.first_block and child.last_block <= parent.last_block


def _legal(size_nodes: int, cfg: MachineConfig) -> int:
    if size_nodes not in cfg.legal_partition_sizes:
        raise UnknownPartitionSize(f"{size_nodes} is not a legal partition size")
    return size_nodes


def is_buddy_machine(cfg: MachineConfig, sizes) -> bool:
    """True when the block count and every size (in blocks) are powers of two.

    Placements then form a complete binary buddy tree whose child swaps are
    machine automorphisms.
    """
    def pow2(x):
        return x > 0 and x & (x - 1) == 0

    return pow2(cfg.num_blocks) and all(pow2(s // cfg.block_size) for s in sizes)
