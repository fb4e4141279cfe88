"""Reordering measurement over single-flow arrival traces.

The reordered test follows the standard next-expected walk: the receiver
tracks the next expected sequence number; a packet at or above it is
in-order and advances the expectation to the end of its payload, a packet
below it counts as reordered.  A reordered packet's extent is the number
of greater-sequence packets that arrived before it.

All functions require duplicate-free traces (no two packets sharing a
payload byte); the walk is undefined otherwise and such traces are
rejected.  Variable payload lengths are fine — comparisons use the first
payload byte.
"""

from __future__ import annotations

from bisect import bisect_right, insort
from dataclasses import dataclass
from typing import Sequence

from .packets import Packet, SEQ_HALF, SEQ_MOD


class OverlappingSegmentsError(ValueError):
    """Trace contains packets with overlapping payload ranges."""


class PartitionError(ValueError):
    """Block partition does not cover the trace contiguously."""


@dataclass(frozen=True)
class ReorderReport:
    total_packets: int
    reordered_count: int
    ratio: float
    max_extent: int
    intra_block: int | None = None
    inter_block: int | None = None


def _unwrap(trace: Sequence[Packet]) -> list[int]:
    # Map 32-bit sequences to plain ints ordered like seq_cmp, anchored at
    # the first packet.  Valid while pairwise serial distances stay < 2**31.
    ref = trace[0].seq
    return [((p.seq - ref + SEQ_HALF) % SEQ_MOD) - SEQ_HALF for p in trace]


def _check_disjoint(offsets: list[int], trace: Sequence[Packet]) -> None:
    ranges = sorted(
        (off, off + p.payload_len) for off, p in zip(offsets, trace)
    )
    for (s1, e1), (s2, e2) in zip(ranges, ranges[1:]):
        if s2 < e1:
            raise OverlappingSegmentsError(
                f"payload ranges [{s1},{e1}) and [{s2},{e2}) overlap"
            )


def _reordered_flags(trace: Sequence[Packet]) -> tuple[list[int], list[bool]]:
    """Unwrapped offsets plus the per-packet reordered flag."""
    if not trace:
        return [], []
    offsets = _unwrap(trace)
    _check_disjoint(offsets, trace)
    flags: list[bool] = []
    next_exp = offsets[0] + trace[0].payload_len
    flags.append(False)
    for off, p in zip(offsets[1:], trace[1:]):
        if off >= next_exp:
            next_exp = off + p.payload_len
            flags.append(False)
        else:
            flags.append(True)
    return offsets, flags


def reordered_count(trace: Sequence[Packet]) -> tuple[int, float]:
    """Count of reordered packets and the reordering ratio (count/total)."""
    _, flags = _reordered_flags(trace)
    n = len(flags)
    count = sum(flags)
    return count, (count / n if n else 0.0)


def max_reordering_extent(trace: Sequence[Packet]) -> int:
    """Largest extent over all reordered packets, 0 when none."""
    offsets, flags = _reordered_flags(trace)
    seen: list[int] = []
    best = 0
    for off, reordered in zip(offsets, flags):
        if reordered:
            greater_before = len(seen) - bisect_right(seen, off)
            if greater_before > best:
                best = greater_before
        insort(seen, off)
    return best


def _block_index(partition: Sequence[int], n: int) -> list[int]:
    if any(b <= 0 for b in partition) or sum(partition) != n:
        raise PartitionError(
            f"block lengths {list(partition)} do not cover a {n}-packet trace"
        )
    idx: list[int] = []
    for b, length in enumerate(partition):
        idx.extend([b] * length)
    return idx


def classify_block_reordering(
    trace: Sequence[Packet], partition: Sequence[int]
) -> tuple[int, int]:
    """Split the reordered count into intra-block and inter-block parts.

    ``partition`` lists consecutive block lengths over the arrival order.
    A reordered packet is intra-block when every earlier-arriving packet
    with a greater sequence lies in the same block, inter-block otherwise.
    """
    offsets, flags = _reordered_flags(trace)
    blocks = _block_index(partition, len(trace))
    intra = inter = 0
    for i, reordered in enumerate(flags):
        if not reordered:
            continue
        cross = any(
            offsets[j] > offsets[i] and blocks[j] != blocks[i] for j in range(i)
        )
        if cross:
            inter += 1
        else:
            intra += 1
    return intra, inter


def reorder_report(
    trace: Sequence[Packet], partition: Sequence[int] | None = None
) -> ReorderReport:
    """Full report on one trace; block fields filled when a partition is given."""
    count, ratio = reordered_count(trace)
    extent = max_reordering_extent(trace)
    intra = inter = None
    if partition is not None:
        intra, inter = classify_block_reordering(trace, partition)
    return ReorderReport(
        total_packets=len(trace),
        reordered_count=count,
        ratio=ratio,
        max_extent=extent,
        intra_block=intra,
        inter_block=inter,
    )
