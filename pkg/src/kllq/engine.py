"""Vectorized many-trials simulator.

Monte-Carlo experiments need thousands of independent sketches over
long streams; the pure-Python sketch is far too slow for that.  The
trick exploited here: the *structure* of a run (level lengths, growth
points, which level compacts when) depends only on counts, never on
item values or coin outcomes, so any number of independent trials can
be run in lockstep.  Every item becomes a row vector (one entry per
trial) and every coin becomes a vector of coins, while the control flow
stays scalar and mirrors ``sketch.py`` operation for operation.

The simulator is distribution-equivalent to the sketch (same structure
trajectory, same per-trial randomness model), not bit-identical: it
draws its coins from numpy instead of the sketch's own generator.

Modes: "plain" is the unweighted sketch; "base2" is the binary-
decomposition wrapper fed unit weights (it grows one update earlier,
see weighted.py); "wa" is the weight-aware sketch fed unit weights
(always lazy sweep, survivor coin p=1/2 instead of parity).
"""

from __future__ import annotations

from typing import List, Optional

import numpy as np

from .sketch import INV_SQRT2, VariantFlags, capacity_at, retained_levels


class Engine:
    def __init__(
        self,
        n_rows: int,
        budget: int,
        c: float = INV_SQRT2,
        flags: VariantFlags = VariantFlags(),
        mode: str = "plain",
        seed: int = 0,
    ):
        if mode not in ("plain", "base2", "wa"):
            raise ValueError("mode must be plain, base2 or wa")
        self.S = n_rows
        self.budget = budget
        self.c = c
        self.k = max(2, int(np.ceil(budget * (1.0 - c) - 1e-9)))
        self.flags = flags
        self.mode = mode
        self.rng = np.random.default_rng(seed)
        self.H = 0
        self.H_s = 0
        self.n_total = 0
        self.items_n = 0
        self.compactions = 0
        self.sweep_starts = 0
        # level 0: preallocated buffer, grows leftover columns lazily
        self._b0 = np.empty((n_rows, budget + 2))
        self._n0 = 0
        self._sorted0 = True
        self._up: List[np.ndarray] = []  # levels 1.. (sorted rows)
        # per-level coin state, index-aligned with levels
        self._theta = [np.zeros(n_rows)]
        self._null = [np.ones(n_rows, dtype=bool)]
        self._parity = [np.zeros(n_rows, dtype=np.int8)]
        self._pend = [np.full(n_rows, -1, dtype=np.int8)]
        # sampler (accumulator is count-only, hence scalar)
        self._rate_exp = 0
        self._accum = 0
        self._cand = np.zeros(n_rows)
        self._caps = [capacity_at(self.k, c, 0, 0)]
        self._rows = np.arange(n_rows)
        self._grow_at = self.k  # k << H, kept in sync with H

    # -- level plumbing -------------------------------------------------

    def _n_levels(self) -> int:
        return 1 + len(self._up)

    def _len(self, i: int) -> int:
        return self._n0 if i == 0 else self._up[i - 1].shape[1]

    def _items(self, i: int) -> np.ndarray:
        return self._b0[:, : self._n0] if i == 0 else self._up[i - 1]

    def _set_items(self, i: int, arr: np.ndarray) -> None:
        if i == 0:
            n = arr.shape[1]
            if n > self._b0.shape[1]:
                self._b0 = np.empty((self.S, max(n + 8, 2 * self._b0.shape[1])))
            self._b0[:, :n] = arr
            self._n0 = n
        else:
            self._up[i - 1] = arr

    def _append0(self, col: np.ndarray) -> None:
        if self._n0 == self._b0.shape[1]:
            grown = np.empty((self.S, 2 * self._b0.shape[1]))
            grown[:, : self._n0] = self._b0[:, : self._n0]
            self._b0 = grown
        self._b0[:, self._n0] = col
        self._n0 += 1
        self._sorted0 = False
        self.items_n += 1

    # -- sampler --------------------------------------------------------

    def _offer(self, col: np.ndarray, w: int) -> None:
        m = 1 << self._rate_exp
        if w == m and self._accum == 0:  # hot path for unit streams
            self._append0(col)
            return
        while w > 0:
            take = min(w, m - self._accum)
            w -= take
            if self._accum + take == m:
                if self._accum == 0:
                    self._append0(col)
                else:
                    u = self.rng.random(self.S)
                    self._append0(np.where(u * m < take, col, self._cand))
                self._accum = 0
            else:
                if self._accum == 0:
                    self._cand = col.copy()
                else:
                    u = self.rng.random(self.S)
                    tot = self._accum + take
                    self._cand = np.where(u * tot < take, col, self._cand)
                self._accum += take

    # -- growth ---------------------------------------------------------

    def _recompute_caps(self) -> None:
        self._caps = [
            capacity_at(self.k, self.c, self.H, self.H_s + i)
            for i in range(self._n_levels())
        ]

    def _grow(self) -> None:
        self.H += 1
        self._grow_at = self.k << self.H
        self._up.append(np.empty((self.S, 0)))
        self._theta.append(np.zeros(self.S))
        self._null.append(np.ones(self.S, dtype=bool))
        self._parity.append(np.zeros(self.S, dtype=np.int8))
        self._pend.append(np.full(self.S, -1, dtype=np.int8))
        target = max(0, self.H - retained_levels(self.k, self.c) + 1)
        while self.H_s < target:
            h = self.H_s
            self.H_s += 1
            self._rate_exp = self.H_s
            drained = self._items(0).copy()
            self.items_n -= drained.shape[1]
            new0 = self._up.pop(0)
            for st in (self._theta, self._null, self._parity, self._pend):
                st.pop(0)
            self._set_items(0, new0)
            self._sorted0 = True
            for t in range(drained.shape[1]):
                self._offer(drained[:, t], 1 << h)
        self._recompute_caps()

    # -- compaction -----------------------------------------------------

    def _first_at_capacity(self) -> Optional[int]:
        for i in range(self._n_levels()):
            if self._len(i) >= self._caps[i]:
                return i
        return None

    def _fallback_level(self) -> Optional[int]:
        best, best_len = None, 1
        for i in range(self._n_levels()):
            n = self._len(i)
            if n > best_len:
                best, best_len = i, n
        return best

    def _compact_once(self) -> None:
        i = self._first_at_capacity()
        if i is None:
            i = self._fallback_level()
        if i is not None:
            self._compact_level(i)

    def _compact_level(self, i: int) -> None:
        height = self.H_s + i
        if i == self._n_levels() - 1:
            self._grow()
            i = height - self.H_s
            if i < 0:
                return
        if i == 0 and not self._sorted0:
            self._b0[:, : self._n0].sort(axis=1)
            self._sorted0 = True
        if self._len(i) < 2:
            return
        if self.mode == "wa" or self.flags.sweep:
            self._sweep_compact(i)
        else:
            self._full_compact(i)
        self.compactions += 1

    def _decide_parity_masked(self, i: int, mask: np.ndarray) -> None:
        """Refresh parity for rows in ``mask``, consuming or setting the
        paired (anti-correlated) pending value only for those rows."""
        coin = (self.rng.random(self.S) < 0.5).astype(np.int8)
        if self.flags.anti_correlated:
            pend = self._pend[i]
            use_pend = mask & (pend >= 0)
            drawn = np.where(use_pend, pend, coin)
            self._pend[i] = np.where(
                mask, np.where(use_pend, -1, 1 - coin), pend
            ).astype(np.int8)
        else:
            drawn = coin
        self._parity[i] = np.where(mask, drawn, self._parity[i]).astype(np.int8)

    def _sweep_compact(self, i: int) -> None:
        b = self._items(i)
        n = b.shape[1]
        theta, null = self._theta[i], self._null[i]
        pos = np.where(null, 0, np.sum(b <= theta[:, None], axis=1))
        need = null | (pos > n - 2)
        if need.any():
            self.sweep_starts += 1
            if self.flags.spreading and n >= 3:
                tcoin = self.rng.random(self.S) < 0.5
                theta_r = np.where(tcoin, b[:, 0], -np.inf)
            else:
                theta_r = np.full(self.S, -np.inf)
            if self.mode != "wa":
                self._decide_parity_masked(i, need)
            pos_r = np.sum(b <= theta_r[:, None], axis=1)
            still = need & (pos_r > n - 2)
            pos_r = np.where(still, 0, pos_r)
            pos = np.where(need, pos_r, pos)
            null[:] = False
        rows = self._rows
        self._theta[i] = b[rows, pos + 1]
        if self.mode == "wa":
            off = (self.rng.random(self.S) >= 0.5).astype(np.int8)
        else:
            off = 1 - self._parity[i]
        kept = b[rows, pos + off]
        keep_mask = np.ones((self.S, n), dtype=bool)
        keep_mask[rows, pos] = False
        keep_mask[rows, pos + 1] = False
        self._set_items(i, b[keep_mask].reshape(self.S, n - 2))
        nxt = self._up[i]  # level i+1 exists (top was grown first)
        self._up[i] = np.sort(np.concatenate([nxt, kept[:, None]], axis=1), axis=1)
        self.items_n -= 1

    def _full_compact(self, i: int) -> None:
        b = self._items(i)
        n = b.shape[1]
        if n % 2 == 0 or not self.flags.spreading:
            lo = np.zeros(self.S, dtype=np.int64)
            length = n - (n % 2)
            suffix = None
        else:
            suffix = self.rng.random(self.S) < 0.5
            lo = suffix.astype(np.int64)
            length = n - 1
        self._decide_parity_masked(i, np.ones(self.S, dtype=bool))
        start = lo + (1 - self._parity[i])
        m = length // 2
        idx = start[:, None] + 2 * np.arange(m)[None, :]
        promoted = np.take_along_axis(b, idx, axis=1)
        if length == n:
            rem = np.empty((self.S, 0))
        elif suffix is None:
            rem = b[:, n - 1 :].copy()
        else:
            rem = np.where(suffix, b[:, 0], b[:, n - 1])[:, None]
        self._set_items(i, rem)
        nxt = self._up[i]
        self._up[i] = np.sort(np.concatenate([nxt, promoted], axis=1), axis=1)
        self.items_n -= m

    # -- update ---------------------------------------------------------

    def update(self, col: np.ndarray) -> None:
        if self.mode == "base2":
            self.n_total += 1
            while self.n_total >= self._grow_at:
                self._grow()
            self._offer(col, 1)
        else:
            self._offer(col, 1)
            self.n_total += 1
            while self.n_total > self._grow_at:
                self._grow()
        if self.mode == "wa" or self.flags.lazy:
            if self.items_n > self.budget:
                self._compact_once()
        else:
            while True:
                i = self._first_at_capacity()
                if i is None:
                    break
                self._compact_level(i)

    def feed(self, rows: np.ndarray) -> None:
        """Consume a stream given as an (n, S) array, one row per step."""
        for t in range(rows.shape[0]):
            self.update(rows[t])

    # -- queries --------------------------------------------------------

    def rank_matrix(self, queries: np.ndarray) -> np.ndarray:
        """Estimated rank for each (trial, query); ``queries`` is (Q,)
        shared or (S, Q) per-trial."""
        q = np.asarray(queries, dtype=float)
        if q.ndim == 1:
            q = q[None, :]
        est = np.zeros((self.S, q.shape[1]))
        if self._accum > 0:
            est += self._accum * (self._cand[:, None] < q)
        for i in range(self._n_levels()):
            b = self._items(i)
            if b.shape[1]:
                w = 1 << (self.H_s + i)
                est += w * np.sum(b[:, None, :] < q[:, :, None], axis=2)
        return est

    def max_errors(self, queries: np.ndarray, exact: np.ndarray) -> np.ndarray:
        """Per-trial max |estimated - exact| / n over the query points."""
        est = self.rank_matrix(queries)
        ex = np.asarray(exact, dtype=float)
        if ex.ndim == 1:
            ex = ex[None, :]
        return np.max(np.abs(est - ex), axis=1) / self.n_total
