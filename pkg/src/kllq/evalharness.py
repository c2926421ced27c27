"""Synthetic streams, exact oracle, KS-style error metric, experiment runner.

Stream kinds:

* sorted    -- 1..n ascending, all unique
* shuffled  -- uniform random permutation of 1..n
* trending  -- s_t = B*t/n + A*u_t with u_t i.i.d. uniform on [-1/2, 1/2]
* brownian  -- s_t = s_{t-1} + step*u_t, s_0 = 0
* file      -- records read verbatim, one item per line

The error metric is the maximum over evenly spaced quantile points of
|estimated rank - exact rank| / n (the KS distance between the sketch's
CDF estimate and the empirical CDF).

``run_experiment`` runs a (variant x budget x stream) matrix.  Trials
within a cell are executed in lockstep on the vectorized engine, which
is distribution-equivalent to the sketch; weighted modes and file
streams fall back to the scalar implementations.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .engine import Engine
from .sketch import INV_SQRT2, VariantFlags

STREAM_KINDS = ("sorted", "shuffled", "trending", "brownian", "file")


@dataclass(frozen=True)
class StreamSpec:
    kind: str
    n: int
    seed: int = 0
    a: float = 1.0  # noise amplitude (trending)
    b: float = 1.0  # trend amplitude (trending)
    step: float = 1.0  # step scale (brownian)
    path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in STREAM_KINDS:
            raise ValueError(f"unknown stream kind {self.kind!r}")
        if self.n < 1 and self.kind != "file":
            raise ValueError("n must be >= 1")


def gen_stream(spec: StreamSpec) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    if spec.kind == "sorted":
        return np.arange(1, n + 1, dtype=np.float64)
    if spec.kind == "shuffled":
        return rng.permutation(n).astype(np.float64) + 1.0
    if spec.kind == "trending":
        u = rng.random(n) - 0.5
        t = np.arange(n, dtype=np.float64)
        return spec.b * t / n + spec.a * u
    if spec.kind == "brownian":
        u = rng.random(n) - 0.5
        return np.cumsum(spec.step * u)
    if spec.path is None:
        raise ValueError("file stream needs a path")
    try:
        with open(spec.path) as f:
            return np.array([float(line) for line in f if line.strip()])
    except OSError as e:
        raise ValueError(f"cannot read stream file: {e}") from e


def exact_ranks(sorted_stream: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Rank (count of items strictly smaller) for each query value."""
    return np.searchsorted(sorted_stream, queries, side="left")


def quantile_points(sorted_stream: np.ndarray, q_count: int) -> np.ndarray:
    """q_count evenly spaced values drawn from the stream itself."""
    if q_count < 1:
        raise ValueError("q_count must be >= 1")
    n = len(sorted_stream)
    idx = np.linspace(0, n - 1, num=min(q_count, n)).round().astype(int)
    return sorted_stream[idx]


def max_quantile_error(sketch, stream: Sequence, q_count: int = 1000) -> float:
    """KS-style max error of ``sketch`` against the retained stream."""
    if q_count < 1:
        raise ValueError("q_count must be >= 1")
    s = np.sort(np.asarray(stream, dtype=np.float64))
    queries = quantile_points(s, q_count)
    exact = exact_ranks(s, queries)
    n = len(s)
    worst = 0.0
    for q, ex in zip(queries, exact):
        est = sketch.rank(float(q)).value
        worst = max(worst, abs(est - ex) / n)
    return worst


@dataclass
class EvalRecord:
    variant: str  # "1111", or "base2-1111" / "wa-1111"
    budget: int
    stream_kind: str
    n: int
    trials: int
    mean_max_err: float
    p95_max_err: float
    compactions: int
    discarded_weight: int = 0


CSV_COLUMNS = [
    "variant",
    "budget",
    "stream_kind",
    "n",
    "trials",
    "mean_max_err",
    "p95_max_err",
    "compactions",
    "discarded_weight",
]


def _cell_seed(master_seed: int, cell_index: int) -> int:
    return (master_seed * 0x9E3779B1 + cell_index * 0x85EBCA77) & 0xFFFFFFFF


def run_cell_engine(
    flags: VariantFlags,
    budget: int,
    spec: StreamSpec,
    trials: int,
    seed: int,
    c: float = INV_SQRT2,
    q_count: int = 1000,
    mode: str = "plain",
) -> EvalRecord:
    """One matrix cell, all trials in lockstep."""
    streams = np.empty((spec.n, trials))
    for t in range(trials):
        sub = StreamSpec(
            spec.kind, spec.n, seed=spec.seed + 1_000_003 * t,
            a=spec.a, b=spec.b, step=spec.step, path=spec.path,
        )
        streams[:, t] = gen_stream(sub)
    eng = Engine(trials, budget, c=c, flags=flags, mode=mode, seed=seed)
    eng.feed(streams)
    srt = np.sort(streams, axis=0)
    qs = np.empty((trials, min(q_count, spec.n)))
    exact = np.empty_like(qs)
    idx = np.linspace(0, spec.n - 1, num=qs.shape[1]).round().astype(int)
    for t in range(trials):
        qs[t] = srt[idx, t]
        exact[t] = np.searchsorted(srt[:, t], qs[t], side="left")
    errs = eng.max_errors(qs, exact)
    prefix = "" if mode == "plain" else mode + "-"
    return EvalRecord(
        variant=prefix + flags.to_string(),
        budget=budget,
        stream_kind=spec.kind,
        n=spec.n,
        trials=trials,
        mean_max_err=float(errs.mean()),
        p95_max_err=float(np.percentile(errs, 95)),
        compactions=eng.compactions,
        discarded_weight=0,
    )


def run_cell_scalar(
    flags: VariantFlags,
    budget: int,
    spec: StreamSpec,
    trials: int,
    seed: int,
    c: float = INV_SQRT2,
    q_count: int = 1000,
    mode: str = "plain",
    backend: str = "list",
) -> EvalRecord:
    """Scalar fallback (file streams, weighted modes, backend checks)."""
    from .sketch import Sketch
    from .weighted import Base2Sketch, WeightedSketch

    errs = []
    compactions = 0
    discarded = 0
    for t in range(trials):
        sub = StreamSpec(
            spec.kind, spec.n, seed=spec.seed + 1_000_003 * t,
            a=spec.a, b=spec.b, step=spec.step, path=spec.path,
        )
        stream = gen_stream(sub)
        if mode == "plain":
            sk = Sketch(budget, c=c, flags=flags, seed=seed + t, backend=backend)
            for v in stream:
                sk.update(float(v))
            compactions += sk.stats.compactions
        elif mode == "base2":
            sk = Base2Sketch(budget, c=c, flags=flags, seed=seed + t, backend=backend)
            for v in stream:
                sk.update(float(v), 1)
            compactions += sk.inner.stats.compactions
        else:
            sk = WeightedSketch(budget, c=c, flags=flags, seed=seed + t)
            for v in stream:
                sk.update(float(v), 1)
            discarded += sk.discarded
        errs.append(max_quantile_error(sk, stream, q_count))
    prefix = "" if mode == "plain" else mode + "-"
    return EvalRecord(
        variant=prefix + flags.to_string(),
        budget=budget,
        stream_kind=spec.kind,
        n=spec.n,
        trials=trials,
        mean_max_err=float(np.mean(errs)),
        p95_max_err=float(np.percentile(errs, 95)),
        compactions=compactions,
        discarded_weight=discarded,
    )


def run_experiment(
    variants: Iterable[str],
    budgets: Iterable[int],
    specs: Iterable[StreamSpec],
    trials: int,
    out_path: Optional[str] = None,
    master_seed: int = 0,
    c: float = INV_SQRT2,
    q_count: int = 1000,
    mode: str = "plain",
) -> List[EvalRecord]:
    """Run the full matrix; flush each record to CSV as it completes."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    records: List[EvalRecord] = []
    writer = None
    out_file = None
    if out_path is not None:
        out_file = open(out_path, "w", newline="")
        writer = csv.writer(out_file)
        writer.writerow(CSV_COLUMNS)
    try:
        cell = 0
        for variant in variants:
            flags = VariantFlags.from_string(variant)
            for budget in budgets:
                for spec in specs:
                    seed = _cell_seed(master_seed, cell)
                    cell += 1
                    if mode == "plain" and spec.kind != "file":
                        rec = run_cell_engine(
                            flags, budget, spec, trials, seed, c, q_count
                        )
                    else:
                        rec = run_cell_scalar(
                            flags, budget, spec, trials, seed, c, q_count, mode
                        )
                    records.append(rec)
                    if writer is not None:
                        writer.writerow([getattr(rec, col) for col in CSV_COLUMNS])
                        out_file.flush()
    finally:
        if out_file is not None:
            out_file.close()
    return records


def throughput_benchmark(
    n: int = 2_000_000, budget: int = 512, seed: int = 0
) -> Dict[str, float]:
    """Soft throughput numbers for the packed backend, reported with and
    without the level-0 sorting cost (which dominates in practice)."""
    import time

    from .sketch import Sketch

    stream = np.random.default_rng(seed).random(n)
    sk = Sketch(budget, seed=seed, backend="packed")
    t0 = time.perf_counter()
    sort_time = 0.0
    orig_sort0 = sk.store.sort0

    def timed_sort0():
        nonlocal sort_time
        s = time.perf_counter()
        orig_sort0()
        sort_time += time.perf_counter() - s

    sk.store.sort0 = timed_sort0
    for v in stream:
        sk.update(float(v))
    total = time.perf_counter() - t0
    return {
        "updates": float(n),
        "seconds": total,
        "updates_per_sec": n / total,
        "sort_seconds": sort_time,
        "updates_per_sec_excl_sort": n / max(total - sort_time, 1e-9),
    }
