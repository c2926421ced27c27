"""Packed item storage: every level lives inside one shared array.

Layout, left to right:

    [ free | level 0 | level 1 | ... | top level ]

Sorted levels are stored ascending in place.  Level 0 receives raw
stream items and grows leftward into the free region: the newest item
sits at the lowest index, so the *logical* (append-order) view of level
0 is the physical region reversed.  Compactions shrink a level and grow
its neighbour, shifting only the levels below the compaction point.

The store exposes the same operations as the per-level-list backend and
is given identical inputs (the sketch draws all coins), so the two
produce identical logical contents for identical seeds.
"""

from __future__ import annotations

from bisect import insort
from typing import List


class PackedStore:
    def __init__(self, min_slots: int):
        self.slots: List = [None] * min_slots
        self.starts: List[int] = [min_slots]
        self.lens: List[int] = [0]

    # ------------------------------------------------------------------
    # read side

    @property
    def n_levels(self) -> int:
        return len(self.lens)

    def length(self, i: int) -> int:
        return self.lens[i]

    def items(self, i: int) -> list:
        s, n = self.starts[i], self.lens[i]
        region = self.slots[s : s + n]
        return region[::-1] if i == 0 else region

    def export_levels(self) -> List[list]:
        return [self.items(i) for i in range(len(self.lens))]

    # ------------------------------------------------------------------
    # write side

    def append0(self, item) -> None:
        if self.starts[0] == 0:
            self._reallocate(1)
        self.starts[0] -= 1
        self.lens[0] += 1
        self.slots[self.starts[0]] = item

    def sort0(self) -> None:
        s, n = self.starts[0], self.lens[0]
        self.slots[s : s + n] = sorted(self.slots[s : s + n], reverse=True)

    def push_sorted(self, i: int, item) -> None:
        if self.starts[0] == 0:
            self._reallocate(1)
        lists = [self.items(j) for j in range(i + 1)]
        insort(lists[i], item)
        self._writeback(i, lists)

    def full_compact(self, i: int, lo: int, hi: int, keep_off: int) -> int:
        lists = [self.items(j) for j in range(i + 2)]
        buf = lists[i]
        promoted = buf[lo + keep_off : hi : 2]
        lists[i] = buf[:lo] + buf[hi:]
        lists[i + 1] = sorted(lists[i + 1] + promoted)
        self._writeback(i + 1, lists)
        return len(promoted)

    def sweep_promote(self, i: int, pos: int, keep_off: int) -> None:
        lists = [self.items(j) for j in range(i + 2)]
        kept = lists[i][pos + keep_off]
        del lists[i][pos : pos + 2]
        insort(lists[i + 1], kept)
        self._writeback(i + 1, lists)

    def add_top(self, min_slots: int) -> None:
        levels = self.export_levels()
        levels.append([])
        self.rebuild(levels, min_slots)

    def drop_bottom(self) -> list:
        levels = self.export_levels()
        dropped = levels.pop(0)
        self.rebuild(levels, len(self.slots))
        return dropped

    def rebuild(self, levels: List[list], min_slots: int) -> None:
        total = sum(len(lv) for lv in levels)
        size = max(min_slots, total + 1)
        self.slots = [None] * size
        self.starts = [0] * len(levels)
        self.lens = [0] * len(levels)
        pos = size
        for i in range(len(levels) - 1, -1, -1):
            li = levels[i]
            pos -= len(li)
            self.slots[pos : pos + len(li)] = li[::-1] if i == 0 else li
            self.starts[i] = pos
            self.lens[i] = len(li)

    # ------------------------------------------------------------------

    def _writeback(self, upto: int, lists: List[list]) -> None:
        """Replace levels 0..upto with ``lists`` (logical order); levels
        above ``upto`` do not move."""
        old_s0 = self.starts[0]
        pos = self.starts[upto] + self.lens[upto]
        for i in range(upto, -1, -1):
            li = lists[i]
            pos -= len(li)
            self.slots[pos : pos + len(li)] = li[::-1] if i == 0 else li
            self.starts[i] = pos
            self.lens[i] = len(li)
        if pos < 0:
            raise AssertionError("packed store overflow")  # pragma: no cover
        for j in range(old_s0, pos):  # clear freed slots
            self.slots[j] = None

    def _reallocate(self, extra: int) -> None:
        grow = max(extra, len(self.slots) // 2 + 1)
        self.rebuild(self.export_levels(), len(self.slots) + grow)
