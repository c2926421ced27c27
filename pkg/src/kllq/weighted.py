"""Weighted streams, two ways.

``Base2Sketch`` treats the unweighted sketch as a black box: an update of
weight w is decomposed as w = w' + sum(a_h * 2^h), the w' part goes to
the sampler, single bits become one item per level, and the top-level
coefficient (up to k-1) is remembered as a multiplicity that expands
into physical copies only when the top level is about to compact.
Nothing is ever discarded, so weight conservation is exact.

``WeightedSketch`` stores (item, weight) pairs directly: level h accepts
weights in [2^h, 2^(h+1)) and compacts pairs in sweep mode, keeping the
lighter or heavier member with probability proportional to its weight so
rank estimates stay unbiased.  A single item heavier than k*2^H forces H
up; the bottom levels are then dropped outright and their weight counted
in ``discarded``.
"""

from __future__ import annotations

import struct
from bisect import bisect_right, insort
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

from .compactor import NEG_INF, CompactionError, SweepState
from .rng import SplitMix64
from .sampler import Sampler
from .sketch import (
    INV_SQRT2,
    RankEstimate,
    Sketch,
    VariantFlags,
    _ceil,
    capacity_at,
    retained_levels,
)

# ----------------------------------------------------------------------
# binary decomposition


@dataclass(frozen=True)
class Base2Decomposition:
    """w == w_prime + sum(a * 2^h for h, a in coeffs.items()); only
    nonzero coefficients are listed."""

    w_prime: int
    coeffs: Dict[int, int]


def base2_decompose(w: int, h_s: int, big_h: int, k: int = 2) -> Base2Decomposition:
    """Split a weight across the sampler and the levels.

    The sampler absorbs w mod 2^(h_s+1); bits of the remainder at
    positions h_s+1 .. H-1 give one copy each; everything at or above
    2^H becomes the top-level coefficient, which must stay below k.
    """
    if w < 1:
        raise ValueError("weight must be >= 1")
    if w >= k << big_h:
        raise ValueError("weight too large for current height: grow first")
    a_top = w >> big_h
    rest = w - (a_top << big_h)
    w_prime = rest & ((1 << (h_s + 1)) - 1)
    coeffs = {h: 1 for h in range(h_s + 1, big_h) if (rest >> h) & 1}
    if a_top:
        coeffs[big_h] = a_top
    return Base2Decomposition(w_prime, coeffs)


# ----------------------------------------------------------------------
# black-box wrapper


class Base2Sketch:
    """Weighted adapter around the unweighted sketch."""

    def __init__(
        self,
        budget: int,
        c: float = INV_SQRT2,
        flags: VariantFlags = VariantFlags(),
        seed: int = 0,
        backend: str = "list",
        codec: str = "f64",
    ):
        self.inner = Sketch(budget, c, flags, seed, backend, codec)
        self._pending: List[Tuple[object, int]] = []
        self.pushes_last_update = 0

    @property
    def total_weight(self) -> int:
        return self.inner.n_total

    def _pending_count(self) -> int:
        return sum(cnt for _x, cnt in self._pending)

    def _flush_pending(self) -> None:
        inner = self.inner
        top = len(inner.levels) - 1
        for item, count in self._pending:
            for _ in range(count):
                if top == 0:
                    inner.store.append0(item)
                    inner._level0_sorted = False
                else:
                    inner.store.push_sorted(top, item)
        self._pending.clear()

    def update(self, item, w: int = 1) -> None:
        if w < 1:
            raise ValueError("weight must be >= 1")
        inner = self.inner
        inner.n_total += w
        # >= keeps every single weight strictly below k * 2^H, the
        # precondition of the decomposition.
        while inner.n_total >= inner.k << inner.H:
            self._flush_pending()
            inner._grow()
        dec = base2_decompose(w, inner.H_s, inner.H, inner.k)
        pushes = 0
        if dec.w_prime:
            for y, _w in inner.sampler.offer(item, dec.w_prime):
                inner.store.append0(y)
                inner.items_n += 1
                inner._level0_sorted = False
            pushes += 1
        for h, a in dec.coeffs.items():
            if h == inner.H:
                self._pending.append((item, a))
                inner.items_n += a
            else:
                inner._push_at_height(item, h)
            pushes += 1
        self.pushes_last_update = pushes
        self._compact_phase()

    def _compact_phase(self) -> None:
        inner = self.inner
        if inner.flags.lazy:
            # One weighted update may insert many items; keep compacting
            # until the pool fits again (each sweep call frees one slot).
            while inner.items_n > inner.budget:
                self._flush_pending()
                before = inner.items_n
                inner.compact_once()
                if inner.items_n >= before:
                    break
            return
        while True:
            i = inner._first_at_capacity()
            top = len(inner.levels) - 1
            if i is None:
                if (
                    self._pending
                    and inner.store.length(top) + self._pending_count()
                    >= inner._caps[top]
                ):
                    self._flush_pending()
                    continue
                break
            if self._pending and i == top:
                self._flush_pending()
                continue
            inner._compact_level(i)

    def stored_weight(self) -> int:
        return self.inner.stored_weight() + (self._pending_count() << self.inner.H)

    def rank(self, q) -> RankEstimate:
        self._flush_pending()
        return self.inner.rank(q)

    def quantile(self, phi: float):
        self._flush_pending()
        return self.inner.quantile(phi)

    def cdf(self, queries):
        self._flush_pending()
        return self.inner.cdf(queries)

    def serialize(self) -> bytes:
        from .serial import serialize_sketch

        self._flush_pending()
        return serialize_sketch(self.inner, mode=1)

    @classmethod
    def deserialize(cls, data: bytes, backend: str = "list") -> "Base2Sketch":
        from .serial import deserialize_sketch

        out = cls.__new__(cls)
        out.inner = deserialize_sketch(data, backend=backend, expect_mode=1)
        out._pending = []
        out.pushes_last_update = 0
        return out


# ----------------------------------------------------------------------
# weight-aware compactors


@dataclass
class WALevel:
    height: int
    items: List[Tuple[object, int]] = field(default_factory=list)  # sorted
    sweep: SweepState = field(default_factory=SweepState)


def wa_sweep_select(items, sweep: SweepState, rng: SplitMix64, *, spreading: bool) -> int:
    """Pick the position of the next pair to compress under the sweep
    threshold; same contract as the unweighted version minus parity."""
    n = len(items)
    if n < 2:
        raise CompactionError("nothing to compact")
    for attempt in (0, 1):
        if sweep.theta is None:
            theta = NEG_INF
            if spreading and attempt == 0 and n >= 3 and rng.randbit():
                theta = items[0]
            sweep.theta = theta
        pos = 0 if sweep.theta is NEG_INF else bisect_right(items, sweep.theta)
        if pos <= n - 2:
            sweep.theta = items[pos + 1]
            return pos
        sweep.theta = None
    raise AssertionError("sweep failed to find a pair")  # pragma: no cover


def wa_compact_pair(
    level: WALevel, rng: SplitMix64, *, spreading: bool = False
) -> Tuple[object, int]:
    """Compress one pair: the survivor is chosen with probability
    proportional to its weight and carries the pair's combined weight."""
    pos = wa_sweep_select(level.items, level.sweep, rng, spreading=spreading)
    (a, wa), (b, wb) = level.items[pos], level.items[pos + 1]
    kept = a if rng.random() * (wa + wb) < wa else b
    del level.items[pos : pos + 2]
    return (kept, wa + wb)


class WeightedSketch:
    """Sketch over (item, weight) updates with weight-aware compaction.

    Always runs lazily in sweep mode; of the variant flags only
    ``spreading`` changes behaviour (it randomizes the sweep threshold's
    starting point), parity anti-correlation has no analogue here
    because survivor choice is weight-proportional.
    """

    def __init__(
        self,
        budget: int,
        c: float = INV_SQRT2,
        flags: VariantFlags = VariantFlags(),
        seed: int = 0,
        codec: str = "f64",
    ):
        if budget < 8:
            raise ValueError("budget must be >= 8")
        if not 0.5 < c < 1.0:
            raise ValueError("c must be in (0.5, 1)")
        self.budget = budget
        self.c = c
        self.k = max(2, _ceil(budget * (1.0 - c)))
        self.flags = flags
        self.codec = codec
        self.rng = SplitMix64(seed)
        self.sampler = Sampler(self.rng, 0)
        self.H = 0
        self.H_s = 0
        self.total_weight = 0
        self.items_n = 0
        self.discarded = 0
        self.levels: List[WALevel] = [WALevel(0)]

    # -- growth ---------------------------------------------------------

    def _grow(self) -> None:
        """Add one level of capacity; bottom content is re-sampled, not
        discarded."""
        self.H += 1
        self.levels.append(WALevel(self.H))
        target = max(0, self.H - retained_levels(self.k, self.c) + 1)
        while self.H_s < target:
            self.H_s += 1
            self.sampler.raise_rate(self.H_s)
            dropped = self.levels.pop(0)
            self.items_n -= len(dropped.items)
            for x, wx in dropped.items:
                for y, ew in self.sampler.offer(x, wx):
                    self._insert(0, y, ew)

    def _jump(self, h_new: int) -> None:
        """A single update outweighs the current hierarchy: shift the
        whole ladder up, discarding what falls off the bottom."""
        length = self.H - self.H_s + 1
        new_h_s = h_new - length + 1
        new_h_s = max(0, new_h_s)
        while self.levels and self.levels[0].height < new_h_s:
            dropped = self.levels.pop(0)
            self.items_n -= len(dropped.items)
            self.discarded += sum(wx for _x, wx in dropped.items)
        start = self.levels[-1].height + 1 if self.levels else new_h_s
        for h in range(start, h_new + 1):
            self.levels.append(WALevel(h))
        self.H = h_new
        self.H_s = new_h_s
        self.sampler.raise_rate(self.H_s)

    # -- update ---------------------------------------------------------

    def update(self, item, w: int = 1) -> None:
        if w < 1:
            raise ValueError("weight must be >= 1")
        self.total_weight += w
        if w >= self.k << self.H:
            h_new = self.H
            while self.k << h_new <= w:
                h_new += 1
            self._jump(h_new)
        while self.total_weight > self.k << self.H:
            self._grow()
        self._route(item, w)
        while self.items_n > self.budget:
            before = self.items_n
            self.compact_once()
            if self.items_n >= before:
                break

    def _insert(self, i: int, item, w: int) -> None:
        insort(self.levels[i].items, (item, w))
        self.items_n += 1

    def _route(self, item, w: int) -> None:
        if w < 1 << (self.H_s + 1):
            for y, ew in self.sampler.offer(item, w):
                self._insert(0, y, ew)
        elif w < 1 << (self.H + 1):
            h = w.bit_length() - 1
            self._insert(h - self.H_s, item, w)
        else:
            mult = w >> self.H
            for _ in range(mult):
                self._insert(self.H - self.H_s, item, 1 << self.H)
            rest = w - (mult << self.H)
            if rest:
                self._route(item, rest)

    def _cap(self, i: int) -> int:
        return capacity_at(self.k, self.c, self.H, self.levels[i].height)

    def compact_once(self) -> None:
        target = None
        for i in range(len(self.levels)):
            if len(self.levels[i].items) >= self._cap(i):
                target = i
                break
        if target is None:
            best_len = 1
            for i in range(len(self.levels)):
                if len(self.levels[i].items) > best_len:
                    target, best_len = i, len(self.levels[i].items)
        if target is not None:
            self._compact_level(target)

    def _compact_level(self, i: int) -> None:
        height = self.levels[i].height
        if i == len(self.levels) - 1:
            self._grow()
            i = height - self.H_s
            if i < 0:
                return
        lv = self.levels[i]
        if len(lv.items) < 2:
            return
        promoted = wa_compact_pair(lv, self.rng, spreading=self.flags.spreading)
        insort(self.levels[i + 1].items, promoted)
        self.items_n -= 1

    # -- queries --------------------------------------------------------

    def stored_weight(self) -> int:
        return self.sampler.accum + sum(
            wx for lv in self.levels for _x, wx in lv.items
        )

    def _weighted_pairs(self) -> List[Tuple[object, int]]:
        pairs = []
        if self.sampler.accum > 0:
            pairs.append((self.sampler.candidate, self.sampler.accum))
        for lv in self.levels:
            pairs.extend(lv.items)
        pairs.sort(key=lambda p: p[0])
        return pairs

    def rank(self, q) -> RankEstimate:
        r = 0
        if self.sampler.accum > 0 and self.sampler.candidate < q:
            r += self.sampler.accum
        for lv in self.levels:
            for x, wx in lv.items:
                if x < q:
                    r += wx
        return RankEstimate(r, self.total_weight)

    def quantile(self, phi: float):
        import math

        if not 0.0 <= phi <= 1.0:
            raise ValueError("phi must be in [0, 1]")
        if self.total_weight == 0:
            raise ValueError("empty sketch")
        target = math.ceil(phi * self.total_weight)
        cum = 0
        pairs = self._weighted_pairs()
        for x, wx in pairs:
            cum += wx
            if cum >= target:
                return x
        return pairs[-1][0]

    # -- serialization (mode 2) ----------------------------------------

    def serialize(self) -> bytes:
        from .serial import MAGIC, VERSION, _CODECS, _pack_item

        out: List[bytes] = [MAGIC]
        out.append(
            struct.pack(
                "<BBBBIdIIQQQB",
                VERSION,
                _CODECS[self.codec],
                2,
                self.flags.to_byte(),
                self.budget,
                self.c,
                self.H,
                self.H_s,
                self.total_weight,
                self.items_n,
                self.rng.getstate(),
                1,
            )
        )
        out.append(struct.pack("<Q", self.discarded))
        out.append(struct.pack("<Q", self.sampler.accum))
        if self.sampler.candidate is not None:
            out.append(b"\x01")
            _pack_item(out, self.codec, self.sampler.candidate)
        else:
            out.append(b"\x00")
        out.append(struct.pack("<I", len(self.levels)))
        for lv in self.levels:
            theta = lv.sweep.theta
            marker = 0 if theta is None else (1 if theta is NEG_INF else 2)
            out.append(struct.pack("<IB", len(lv.items), marker))
            if marker == 2:
                _pack_item(out, self.codec, theta[0])
                out.append(struct.pack("<Q", theta[1]))
            for x, wx in lv.items:
                _pack_item(out, self.codec, x)
                out.append(struct.pack("<Q", wx))
        return b"".join(out)

    @classmethod
    def deserialize(cls, data: bytes) -> "WeightedSketch":
        from .serial import FormatError, _Reader, read_header

        hdr = read_header(data)
        if hdr["mode"] != 2:
            raise FormatError(f"unexpected sketch mode {hdr['mode']}")
        sk = cls(
            budget=hdr["budget"],
            c=hdr["c"],
            flags=VariantFlags.from_byte(hdr["flags_byte"]),
            codec=hdr["codec"],
        )
        sk.H = hdr["H"]
        sk.H_s = hdr["H_s"]
        sk.total_weight = hdr["n_total"]
        sk.items_n = hdr["items_n"]
        sk.rng.setstate(hdr["rng_state"])
        r = _Reader(data)
        r.pos = hdr["body_pos"]
        sk.discarded = r.take("<Q")
        sk.sampler.rate_exp = sk.H_s
        sk.sampler.accum = r.take("<Q")
        sk.sampler.candidate = r.item(sk.codec) if r.take("<B") else None
        n_levels = r.take("<I")
        if n_levels != sk.H - sk.H_s + 1:
            raise FormatError("level count does not match heights")
        sk.levels = []
        for i in range(n_levels):
            count, marker = r.take("<IB")
            lv = WALevel(height=sk.H_s + i)
            if marker == 1:
                lv.sweep.theta = NEG_INF
            elif marker == 2:
                lv.sweep.theta = (r.item(sk.codec), r.take("<Q"))
            elif marker != 0:
                raise FormatError(f"bad theta marker {marker}")
            for _ in range(count):
                lv.items.append((r.item(sk.codec), r.take("<Q")))
            sk.levels.append(lv)
        r.done()
        return sk
