"""One level of the compactor hierarchy.

A compactor buffers items that all carry the same weight 2^h and, when
asked, compresses them pairwise: survivors move up one level with doubled
weight.  Four orthogonal behaviours are supported:

* full compaction of an even-length index range (the classic scheme),
* anti-correlated parity decisions (consecutive compactions at one level
  keep opposite parities),
* range randomization for odd buffers (prefix vs suffix, so a fixed query
  is inside the compacted range at most half the time),
* sweep mode, which compacts a single pair per call under a monotone
  threshold ``theta``.

Coin-draw order is part of the contract (sketches are reproducible
bit-for-bit from a seed):

* full compaction: range coin first (only when randomization applies),
  then the parity coin (only when not forced by anti-correlation);
* sweep start: theta coin first (only when randomization applies and the
  buffer holds at least 3 items), then the parity coin.
"""

from __future__ import annotations

import enum
from bisect import bisect_right, insort
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from .rng import SplitMix64


class CompactionError(ValueError):
    pass


class KeepParity(enum.IntEnum):
    """Which sorted positions survive a compaction.

    Positions are 1-indexed in the classic description: KEEP_ODD keeps the
    1st, 3rd, ... item of the compacted range (relative offsets 0, 2, ...),
    KEEP_EVEN keeps the 2nd, 4th, ... (offsets 1, 3, ...).  In a sweep,
    KEEP_ODD keeps the smaller item of the pair and KEEP_EVEN the larger.
    """

    KEEP_EVEN = 0
    KEEP_ODD = 1

    @property
    def offset(self) -> int:
        # relative index of the first survivor inside the range
        return 0 if self is KeepParity.KEEP_ODD else 1


def opposite(parity: KeepParity) -> KeepParity:
    return KeepParity(1 - int(parity))


@dataclass
class DirectionState:
    """Pending forced parity for the next compaction at this level."""

    pending: Optional[KeepParity] = None


def decide_parity(direction: DirectionState, rng: SplitMix64) -> KeepParity:
    """Draw a parity, pairing decisions into anti-correlated (d, not-d)."""
    if direction.pending is not None:
        forced = direction.pending
        direction.pending = None
        return forced
    drawn = KeepParity(rng.randbit())
    direction.pending = opposite(drawn)
    return drawn


class _NegInf:
    """Explicit below-everything marker for the sweep threshold.

    Kept separate from item values so string-keyed sketches work.
    """

    def __repr__(self) -> str:
        return "NEG_INF"


NEG_INF = _NegInf()


@dataclass
class SweepState:
    theta: object = None  # None (no active sweep), NEG_INF, or an item value
    parity: Optional[KeepParity] = None


@dataclass
class Compactor:
    level: int
    capacity: int = 2
    buffer: List = field(default_factory=list)
    direction: DirectionState = field(default_factory=DirectionState)
    sweep: SweepState = field(default_factory=SweepState)
    sorted: bool = True

    def __len__(self) -> int:
        return len(self.buffer)

    def append(self, item) -> None:
        self.buffer.append(item)
        self.sorted = False

    def sort(self) -> None:
        if not self.sorted:
            self.buffer.sort()
            self.sorted = True


def select_range(buffer_len: int, spreading: bool, rng: SplitMix64) -> Tuple[int, int]:
    """Pick the even-length index range [lo, hi) a full compaction covers.

    Even buffers (and all buffers with randomization off) compact the
    largest even-length prefix.  Odd buffers with randomization on leave
    out either the last item (prefix) or the first (suffix), equiprobably.
    """
    if buffer_len < 2:
        raise CompactionError("nothing to compact")
    if buffer_len % 2 == 0 or not spreading:
        return 0, buffer_len - (buffer_len % 2)
    if rng.randbit():  # 1 -> suffix
        return 1, buffer_len
    return 0, buffer_len - 1


def compact_full(c: Compactor, parity: KeepParity, rng_range: Tuple[int, int]) -> List:
    """Compact ``c.buffer[lo:hi]``; survivors are returned as the promoted
    run (already sorted), the rest of the range is dropped, items outside
    the range stay put."""
    lo, hi = rng_range
    if hi - lo < 2 or (hi - lo) % 2 != 0:
        raise CompactionError("range must have even length >= 2")
    if lo < 0 or hi > len(c.buffer):
        raise CompactionError("range out of bounds")
    buf = c.buffer
    promoted = buf[lo + parity.offset : hi : 2]
    c.buffer = buf[:lo] + buf[hi:]
    return promoted


def sweep_select(
    items,
    sweep: SweepState,
    direction: DirectionState,
    rng: SplitMix64,
    *,
    anti_correlated: bool,
    spreading: bool,
    on_sweep_start=None,
) -> Tuple[int, int]:
    """Locate the pair a sweep compacts next in a sorted buffer.

    Returns ``(pos, keep_offset)``: the pair is ``items[pos], items[pos+1]``
    and ``items[pos + keep_offset]`` survives.  Advances ``sweep.theta`` to
    the value of the larger pair member.  Starts a new sweep (drawing the
    theta and parity coins) whenever theta is unset or no pair lies above
    it; a sweep that immediately exhausts falls back to a below-everything
    threshold, so at most two starts happen per call.
    """
    n = len(items)
    if n < 2:
        raise CompactionError("nothing to compact")
    for attempt in (0, 1):
        if sweep.theta is None:
            theta = NEG_INF
            if spreading and attempt == 0 and n >= 3 and rng.randbit():
                theta = items[0]
            sweep.theta = theta
            if anti_correlated:
                sweep.parity = decide_parity(direction, rng)
            else:
                sweep.parity = KeepParity(rng.randbit())
            if on_sweep_start is not None:
                on_sweep_start()
        if sweep.theta is NEG_INF:
            pos = 0
        else:
            pos = bisect_right(items, sweep.theta)
        if pos <= n - 2:
            sweep.theta = items[pos + 1]
            # KEEP_ODD keeps the smaller pair member, KEEP_EVEN the larger.
            return pos, (0 if sweep.parity is KeepParity.KEEP_ODD else 1)
        sweep.theta = None  # sweep exhausted, start over
    raise AssertionError("sweep failed to find a pair")  # pragma: no cover


def sweep_compact_pair(
    c: Compactor,
    rng: SplitMix64,
    *,
    anti_correlated: bool = False,
    spreading: bool = False,
):
    """Compact one pair of ``c`` in sweep mode and return the promoted item."""
    pos, keep = sweep_select(
        c.buffer,
        c.sweep,
        c.direction,
        rng,
        anti_correlated=anti_correlated,
        spreading=spreading,
    )
    kept = c.buffer[pos + keep]
    del c.buffer[pos : pos + 2]
    return kept


__all__ = [
    "CompactionError",
    "KeepParity",
    "opposite",
    "DirectionState",
    "decide_parity",
    "NEG_INF",
    "SweepState",
    "Compactor",
    "select_range",
    "compact_full",
    "sweep_select",
    "sweep_compact_pair",
    "insort",
]
