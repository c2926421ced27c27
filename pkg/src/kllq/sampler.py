"""Bottom-of-hierarchy weighted reservoir sampler.

Replaces the stack of capacity-2 compactors: it absorbs items of weight
up to (and beyond) its emission rate M = 2^rate_exp and emits items of
weight exactly M.  Incoming weight is consumed in chunks that never let
the accumulator exceed M, which makes weight conservation *exact*:

    total offered == total emitted + accum     (at all times)

Coin-draw order: one uniform per chunk, skipped whenever the decision is
forced (accumulator empty).
"""

from __future__ import annotations

from typing import List, Optional, Tuple

from .rng import SplitMix64


class Sampler:
    __slots__ = ("rate_exp", "candidate", "accum", "_rng")

    def __init__(self, rng: SplitMix64, rate_exp: int = 0):
        if rate_exp < 0:
            raise ValueError("rate_exp must be >= 0")
        self.rate_exp = rate_exp
        self.candidate = None
        self.accum = 0
        self._rng = rng

    @property
    def rate(self) -> int:
        return 1 << self.rate_exp

    def offer(self, item, w: int) -> List[Tuple[object, int]]:
        """Feed ``w`` units of ``item``; return the (item, M) emissions."""
        if w <= 0:
            raise ValueError("weight must be >= 1")
        emissions = []
        m = self.rate
        while w > 0:
            take = min(w, m - self.accum)
            w -= take
            if self.accum + take == m:
                # Chunk fills the accumulator: emit the candidate with
                # probability accum/M, else the new item (take/M).
                if self.accum == 0 or self._rng.random() * m < take:
                    emissions.append((item, m))
                else:
                    emissions.append((self.candidate, m))
                self.candidate = None
                self.accum = 0
            else:
                # Partial chunk: weighted reservoir update.
                if self.accum == 0 or self._rng.random() * (self.accum + take) < take:
                    self.candidate = item
                self.accum += take
        return emissions

    def raise_rate(self, new_exp: int) -> None:
        if new_exp < self.rate_exp:
            raise ValueError("rate may only grow")
        self.rate_exp = new_exp

    def state(self) -> Tuple[Optional[object], int]:
        return self.candidate, self.accum
