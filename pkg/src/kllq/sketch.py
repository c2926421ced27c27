"""The compactor hierarchy: parameters, update paths, queries, merge.

A sketch is a stack of compactor levels over a weighted reservoir
sampler.  Level heights run from ``H_s`` (the sampler's emission
exponent) up to ``H``; items stored at height h represent weight 2^h of
the input stream.  Capacities decay geometrically from the top:
``cap(h) = max(2, ceil(k * c^(H-h)))``.

Item storage is pluggable: the default backend keeps one Python list per
level, the packed backend keeps every level inside one shared array (see
``packed.py``).  All random decisions are made here from the sketch's
single seeded generator, so the two backends produce identical states
for identical seeds.
"""

from __future__ import annotations

import math
from bisect import bisect_left, insort
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .compactor import (
    DirectionState,
    KeepParity,
    SweepState,
    decide_parity,
    select_range,
    sweep_select,
)
from .rng import SplitMix64
from .sampler import Sampler

INV_SQRT2 = 1.0 / math.sqrt(2.0)

# Tolerance for ceil() on products of floats that are mathematically
# integral (e.g. k * c^2 with c = 1/sqrt(2)).
_CEIL_EPS = 1e-9


def _ceil(x: float) -> int:
    return math.ceil(x - _CEIL_EPS)


@dataclass(frozen=True)
class VariantFlags:
    """The four practical improvements, encoded as the 4-digit names
    used throughout: digit order lazy, anti-correlated, spreading, sweep
    (so "0000" is the vanilla algorithm and "1111" enables everything)."""

    lazy: bool = True
    anti_correlated: bool = True
    spreading: bool = True
    sweep: bool = True

    @classmethod
    def from_string(cls, s: str) -> "VariantFlags":
        if len(s) != 4 or any(ch not in "01" for ch in s):
            raise ValueError(f"variant must match [01]{{4}}, got {s!r}")
        return cls(*(ch == "1" for ch in s))

    def to_string(self) -> str:
        return "".join(
            "1" if b else "0"
            for b in (self.lazy, self.anti_correlated, self.spreading, self.sweep)
        )

    def to_byte(self) -> int:
        return (
            int(self.lazy)
            | int(self.anti_correlated) << 1
            | int(self.spreading) << 2
            | int(self.sweep) << 3
        )

    @classmethod
    def from_byte(cls, b: int) -> "VariantFlags":
        return cls(bool(b & 1), bool(b & 2), bool(b & 4), bool(b & 8))


@dataclass
class RankEstimate:
    value: int
    n: int


def capacity_at(k: int, c: float, big_h: int, h: int) -> int:
    """Capacity of the level at height ``h`` when the top sits at ``big_h``."""
    if not 0 <= h <= big_h:
        raise ValueError("height out of range")
    return max(2, _ceil(k * c ** (big_h - h)))


def retained_levels(k: int, c: float) -> int:
    """How many levels keep capacity > 2; anything deeper is replaced by
    the sampler."""
    if k <= 2:
        return 1
    return max(1, _ceil(math.log(k / 2.0) / math.log(1.0 / c)))


def failure_probability(eps: float, k: int, c: float) -> float:
    """Upper bound on P(|rank error| > eps*n) for a single fixed query,
    2*exp(-C * eps^2 * k^2) with the corrected constant C = c^3(2c-1)/2."""
    if eps <= 0:
        raise ValueError("eps must be > 0")
    if k < 2:
        raise ValueError("k must be >= 2")
    if not 0.5 < c < 1.0:
        raise ValueError("c must be in (0.5, 1)")
    big_c = c ** 3 * (2.0 * c - 1.0) / 2.0
    return min(1.0, 2.0 * math.exp(-big_c * eps * eps * k * k))


def error_bound(delta: float, k: int, c: float) -> float:
    """The eps at which ``failure_probability`` equals ``delta``."""
    if not 0 < delta < 2:
        raise ValueError("delta must be in (0, 2)")
    big_c = c ** 3 * (2.0 * c - 1.0) / 2.0
    return math.sqrt(math.log(2.0 / delta) / big_c) / k


@dataclass
class LevelState:
    height: int
    direction: DirectionState = field(default_factory=DirectionState)
    sweep: SweepState = field(default_factory=SweepState)


@dataclass
class SketchStats:
    compactions: int = 0
    grows: int = 0
    sweep_starts: Dict[int, int] = field(default_factory=dict)


class ListStore:
    """Default backend: one Python list per level, index 0 = bottom."""

    def __init__(self):
        self._levels: List[list] = [[]]

    @property
    def n_levels(self) -> int:
        return len(self._levels)

    def length(self, i: int) -> int:
        return len(self._levels[i])

    def items(self, i: int) -> list:
        return self._levels[i]

    def append0(self, item) -> None:
        self._levels[0].append(item)

    def sort0(self) -> None:
        self._levels[0].sort()

    def push_sorted(self, i: int, item) -> None:
        insort(self._levels[i], item)

    def full_compact(self, i: int, lo: int, hi: int, keep_off: int) -> int:
        buf = self._levels[i]
        promoted = buf[lo + keep_off : hi : 2]
        self._levels[i] = buf[:lo] + buf[hi:]
        self._levels[i + 1] = sorted(self._levels[i + 1] + promoted)
        return len(promoted)

    def sweep_promote(self, i: int, pos: int, keep_off: int) -> None:
        buf = self._levels[i]
        kept = buf[pos + keep_off]
        del buf[pos : pos + 2]
        insort(self._levels[i + 1], kept)

    def add_top(self, min_slots: int) -> None:
        self._levels.append([])

    def drop_bottom(self) -> list:
        return self._levels.pop(0)

    def export_levels(self) -> List[list]:
        return [list(lv) for lv in self._levels]

    def rebuild(self, levels: List[list], min_slots: int) -> None:
        self._levels = [list(lv) for lv in levels]


class Sketch:
    """Streaming quantile sketch over a total order.

    ``budget`` is the total number of item slots; ``k`` (top-level
    capacity) is derived as ceil(budget * (1 - c)) so the geometric
    capacity series sums to roughly the budget at steady state.
    """

    def __init__(
        self,
        budget: int,
        c: float = INV_SQRT2,
        flags: VariantFlags = VariantFlags(),
        seed: int = 0,
        backend: str = "list",
        codec: str = "f64",
    ):
        if budget < 8:
            raise ValueError("budget must be >= 8")
        if not 0.5 < c < 1.0:
            raise ValueError("c must be in (0.5, 1)")
        if codec not in ("f64", "str"):
            raise ValueError("codec must be 'f64' or 'str'")
        self.budget = budget
        self.c = c
        self.k = max(2, _ceil(budget * (1.0 - c)))
        self.flags = flags
        self.codec = codec
        self.backend = backend
        self.rng = SplitMix64(seed)
        self.sampler = Sampler(self.rng, 0)
        self.H = 0
        self.H_s = 0
        self.n_total = 0
        self.items_n = 0
        self.levels: List[LevelState] = [LevelState(height=0)]
        if backend == "list":
            self.store = ListStore()
        elif backend == "packed":
            from .packed import PackedStore

            self.store = PackedStore(self._slots_needed())
        else:
            raise ValueError("backend must be 'list' or 'packed'")
        self._level0_sorted = True
        self._caps: List[int] = []
        self._recompute_caps()
        self.stats = SketchStats()

    # ------------------------------------------------------------------
    # capacities and growth

    def _recompute_caps(self) -> None:
        self._caps = [
            capacity_at(self.k, self.c, self.H, lv.height) for lv in self.levels
        ]

    def _slots_needed(self) -> int:
        total = sum(
            capacity_at(self.k, self.c, self.H, h) for h in range(self.H_s, self.H + 1)
        )
        return max(self.budget, total) + 1

    def _grow(self) -> None:
        self.H += 1
        self.levels.append(LevelState(height=self.H))
        self.stats.grows += 1
        self.store.add_top(self._slots_needed())
        target = max(0, self.H - retained_levels(self.k, self.c) + 1)
        while self.H_s < target:
            h = self.H_s
            self.H_s += 1
            self.sampler.raise_rate(self.H_s)
            drained = self.store.drop_bottom()
            self.levels.pop(0)
            self.items_n -= len(drained)
            for x in drained:
                for y, _w in self.sampler.offer(x, 1 << h):
                    self.store.append0(y)
                    self.items_n += 1
                    self._level0_sorted = False
        self._recompute_caps()

    # ------------------------------------------------------------------
    # update path

    def update(self, item) -> None:
        for x, _w in self.sampler.offer(item, 1):
            self.store.append0(x)
            self.items_n += 1
            self._level0_sorted = False
        self.n_total += 1
        while self.n_total > self.k << self.H:
            self._grow()
        self._compact_phase()

    def extend(self, items) -> None:
        for item in items:
            self.update(item)

    def _first_at_capacity(self) -> Optional[int]:
        for i in range(len(self.levels)):
            if self.store.length(i) >= self._caps[i]:
                return i
        return None

    def _fallback_level(self) -> Optional[int]:
        # Pool saturated but no level at individual capacity (possible
        # because levels share the slot pool): pick the fullest one.
        best, best_len = None, 1
        for i in range(len(self.levels)):
            n = self.store.length(i)
            if n > best_len:
                best, best_len = i, n
        return best

    def _compact_phase(self) -> None:
        if self.flags.lazy:
            if self.items_n > self.budget:
                self.compact_once()
        else:
            while True:
                i = self._first_at_capacity()
                if i is None:
                    break
                self._compact_level(i)

    def compact_once(self) -> None:
        i = self._first_at_capacity()
        if i is None:
            i = self._fallback_level()
        if i is not None:
            self._compact_level(i)

    def _compact_level(self, i: int) -> None:
        height = self.levels[i].height
        if i == len(self.levels) - 1:
            self._grow()
            i = height - self.H_s
            if i < 0:
                return  # the level was drained into the sampler
        if i == 0 and not self._level0_sorted:
            self.store.sort0()
            self._level0_sorted = True
        n = self.store.length(i)
        if n < 2:
            return
        lv = self.levels[i]
        if self.flags.sweep:
            pos, keep_off = sweep_select(
                self.store.items(i),
                lv.sweep,
                lv.direction,
                self.rng,
                anti_correlated=self.flags.anti_correlated,
                spreading=self.flags.spreading,
                on_sweep_start=lambda h=lv.height: self._count_sweep_start(h),
            )
            self.store.sweep_promote(i, pos, keep_off)
            self.items_n -= 1
        else:
            lo, hi = select_range(n, self.flags.spreading, self.rng)
            if self.flags.anti_correlated:
                parity = decide_parity(lv.direction, self.rng)
            else:
                parity = KeepParity(self.rng.randbit())
            promoted = self.store.full_compact(i, lo, hi, parity.offset)
            self.items_n -= promoted
        self.stats.compactions += 1

    def _count_sweep_start(self, height: int) -> None:
        self.stats.sweep_starts[height] = self.stats.sweep_starts.get(height, 0) + 1

    # Used by the weighted wrappers: place one item directly at a height.
    def _push_at_height(self, item, h: int) -> None:
        i = h - self.H_s
        if not 0 <= i < len(self.levels):
            raise ValueError(f"no level at height {h}")
        if i == 0:
            self.store.append0(item)
            self._level0_sorted = False
        else:
            self.store.push_sorted(i, item)
        self.items_n += 1

    # ------------------------------------------------------------------
    # queries

    def _weighted_pairs(self) -> List[Tuple[object, int]]:
        pairs = []
        if self.sampler.accum > 0:
            pairs.append((self.sampler.candidate, self.sampler.accum))
        for i, lv in enumerate(self.levels):
            w = 1 << lv.height
            for x in self.store.items(i):
                pairs.append((x, w))
        pairs.sort(key=lambda p: p[0])
        return pairs

    def rank(self, q) -> RankEstimate:
        r = 0
        if self.sampler.accum > 0 and self.sampler.candidate < q:
            r += self.sampler.accum
        for i, lv in enumerate(self.levels):
            w = 1 << lv.height
            items = self.store.items(i)
            if i == 0:
                r += w * sum(1 for x in items if x < q)
            else:
                r += w * bisect_left(items, q)
        return RankEstimate(r, self.n_total)

    def quantile(self, phi: float):
        if not 0.0 <= phi <= 1.0:
            raise ValueError("phi must be in [0, 1]")
        if self.n_total == 0:
            raise ValueError("empty sketch")
        target = math.ceil(phi * self.n_total)
        cum = 0
        pairs = self._weighted_pairs()
        for x, w in pairs:
            cum += w
            if cum >= target:
                return x
        return pairs[-1][0]

    def cdf(self, queries: Sequence) -> List[float]:
        for a, b in zip(queries, queries[1:]):
            if b < a:
                raise ValueError("queries must be sorted ascending")
        if not len(queries):
            return []
        if self.n_total == 0:
            return [0.0] * len(queries)
        pairs = self._weighted_pairs()
        out = []
        cum = 0
        j = 0
        for q in queries:
            while j < len(pairs) and pairs[j][0] < q:
                cum += pairs[j][1]
                j += 1
            out.append(cum / self.n_total)
        return out

    # ------------------------------------------------------------------
    # invariant helpers (used heavily by tests)

    def stored_weight(self) -> int:
        total = self.sampler.accum
        for i, lv in enumerate(self.levels):
            total += self.store.length(i) << lv.height
        return total

    def level_lengths(self) -> List[int]:
        return [self.store.length(i) for i in range(len(self.levels))]

    def serialize(self) -> bytes:
        from .serial import serialize_sketch

        return serialize_sketch(self)

    @classmethod
    def deserialize(cls, data: bytes, backend: str = "list") -> "Sketch":
        from .serial import deserialize_sketch

        return deserialize_sketch(data, backend=backend)


def merge(a: Sketch, b: Sketch) -> Sketch:
    """Combine two sketches built with identical parameters.

    Levels are aligned by height and concatenated; content below the
    result's sampler height is re-sampled; the smaller sketch's reservoir
    is offered to the larger's.  Over-full levels then compact under the
    active variant until the result is back within its space bound.
    """
    if a.c != b.c:
        raise ValueError("mismatched parameter: c")
    if a.flags != b.flags:
        raise ValueError("mismatched parameter: flags")
    if a.codec != b.codec:
        raise ValueError("mismatched parameter: codec")
    big, small = (a, b) if a.n_total >= b.n_total else (b, a)

    out = Sketch(
        budget=max(a.budget, b.budget),
        c=a.c,
        flags=a.flags,
        seed=0,
        backend=a.backend,
        codec=a.codec,
    )
    out.rng.setstate(big.rng.getstate())
    out.H = max(a.H, b.H)
    out.H_s = max(
        max(0, out.H - retained_levels(out.k, out.c) + 1), a.H_s, b.H_s
    )
    out.levels = [LevelState(height=h) for h in range(out.H_s, out.H + 1)]
    out.sampler = Sampler(out.rng, 0)
    out.sampler.raise_rate(out.H_s)
    out.sampler.candidate = big.sampler.candidate
    out.sampler.accum = big.sampler.accum

    level_items: List[list] = [[] for _ in out.levels]
    resample: List[Tuple[object, int]] = []
    for src in (big, small):
        for i, lv in enumerate(src.levels):
            items = src.store.items(i)
            if lv.height >= out.H_s:
                level_items[lv.height - out.H_s].extend(items)
            else:
                resample.extend((x, 1 << lv.height) for x in items)
    for i in range(1, len(level_items)):
        level_items[i].sort()
    if small.sampler.accum > 0:
        resample.append((small.sampler.candidate, small.sampler.accum))

    out.store.rebuild(level_items, out._slots_needed())
    out._level0_sorted = False
    out.items_n = sum(len(lv) for lv in level_items)
    out.n_total = a.n_total + b.n_total
    out._recompute_caps()
    for x, w in resample:
        for y, _w in out.sampler.offer(x, w):
            out.store.append0(y)
            out.items_n += 1

    while out.n_total > out.k << out.H:
        out._grow()
    while True:
        if out.flags.lazy:
            if out.items_n <= out.budget:
                break
            out.compact_once()
            continue
        i = out._first_at_capacity()
        if i is None:
            break
        out._compact_level(i)
    return out
