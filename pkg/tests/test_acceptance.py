"""End-to-end acceptance checks.

One test per criterion; each prints a single PASS/FAIL summary line (the
-rA option in pyproject.toml makes those lines show up in the run report)
and then asserts the gate.  All seeds are fixed so the suite is
deterministic.  The heavy statistical cells run on the vectorized engine,
whose structure trajectory is verified against the scalar sketch in
test_engine.py; the scalar sketch itself is exercised directly where an
instrumentation or serialization detail is the point.
"""

import math
import random

import numpy as np

from kllq.engine import Engine
from kllq.evalharness import throughput_benchmark
from kllq.sketch import (
    INV_SQRT2,
    Sketch,
    VariantFlags,
    error_bound,
    failure_probability,
)
from kllq.weighted import Base2Sketch, WeightedSketch, base2_decompose

ALL_VARIANTS = [f"{i:04b}" for i in range(16)]


def report(tag: str, ok: bool, detail: str):
    print(f"{tag} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"{tag}: {detail}"


def shuffled_streams(n: int, trials: int, seed: int) -> np.ndarray:
    """(n, trials) matrix of independent permutations of 1..n."""
    rng = np.random.default_rng(seed)
    base = np.arange(1, n + 1, dtype=float)
    out = np.empty((n, trials))
    for t in range(trials):
        out[:, t] = rng.permutation(base)
    return out


def mean_max_error(streams, budget, variant, seed, mode="plain"):
    """Mean (over trials) of the max rank error at 1000 query points.
    Works for permutations of 1..n, where exact rank of v is v - 1."""
    n, trials = streams.shape
    eng = Engine(trials, budget, flags=VariantFlags.from_string(variant),
                 mode=mode, seed=seed)
    eng.feed(streams)
    q = np.unique(np.linspace(1, n, 1000).round())
    return float(eng.max_errors(q, q - 1).mean())


# ----------------------------------------------------------------------


def test_c1_improvements_beat_vanilla_on_shuffled():
    n, trials = 1_000_000, 50
    streams = shuffled_streams(n, trials, seed=101)
    worst = 0.0
    cells = []
    for b_exp in (8, 9, 10, 11):
        budget = 1 << b_exp
        m0 = mean_max_error(streams, budget, "0000", seed=11)
        m1 = mean_max_error(streams, budget, "1111", seed=12)
        ratio = m1 / m0
        worst = max(worst, ratio)
        cells.append(f"2^{b_exp}: {m0:.4f}/{m1:.4f} r={ratio:.2f}")
    report("C1", worst <= 0.75,
           f"shuffled n=1e6, {trials} trials, mean max-error "
           f"vanilla/full per budget [{'; '.join(cells)}], "
           f"worst ratio {worst:.2f} <= 0.75")


def test_c2_tail_bound_holds_empirically():
    n, trials, delta = 100_000, 400, 0.05
    c = INV_SQRT2
    streams = shuffled_streams(n, trials, seed=202)
    q = np.unique(np.linspace(1, n, 1000).round())
    ok = True
    cells = []
    for budget in (256, 1024):
        eng = Engine(trials, budget, flags=VariantFlags.from_string("0000"),
                     seed=21)
        eng.feed(streams)
        eps = error_bound(delta, eng.k, c)
        frac = float((eng.max_errors(q, q - 1) > eps).mean())
        ok = ok and frac <= 0.08
        cells.append(f"b={budget} eps={eps:.4f} exceed={frac:.3f}")
    report("C2", ok,
           f"P(max err > eps) at the delta={delta} bound, {trials} seeds, "
           f"n=1e5 [{'; '.join(cells)}], each <= 0.08")


def test_c3_error_independent_of_stream_length():
    trials = 3
    ok = True
    cells = []
    for budget in (256, 1024):
        means = []
        for n in (10**5, 10**6, 10**7):
            streams = shuffled_streams(n, trials, seed=303 + n % 97)
            means.append(mean_max_error(streams, budget, "0000", seed=33))
            del streams
        spread = max(means) / min(means)
        ok = ok and spread < 2.0
        cells.append(f"b={budget} means="
                     + "/".join(f"{m:.4f}" for m in means)
                     + f" spread={spread:.2f}")
    report("C3", ok,
           f"mean max error across n=1e5/1e6/1e7 [{'; '.join(cells)}], "
           f"spread < 2x at both budgets")


def test_c4_sorted_input_favors_improvements():
    n, trials, budget = 1_000_000, 50, 512
    base = np.arange(1, n + 1, dtype=float)
    rows = np.broadcast_to(base[:, None], (n, trials))
    m0 = mean_max_error(rows, budget, "0000", seed=41)
    m1 = mean_max_error(rows, budget, "1111", seed=42)
    ratio = m1 / m0

    # With spreading disabled a sorted stream never exhausts a sweep:
    # every level starts at most one sweep for the whole run.
    sk = Sketch(128, flags=VariantFlags.from_string("1101"), seed=3)
    for v in range(30_000):
        sk.update(float(v))
    never_resets = all(v <= 1 for v in sk.stats.sweep_starts.values())

    report("C4", ratio <= 0.5 and never_resets,
           f"sorted n=1e6 b={budget}: vanilla {m0:.4f}, full {m1:.4f}, "
           f"ratio {ratio:.2f} <= 0.5; spreading-off sweep starts/level "
           f"{'<= 1' if never_resets else '> 1'}")


def test_c5_rank_estimates_are_unbiased():
    n, trials, budget = 10_000, 20_000, 256
    stream = np.random.default_rng(505).permutation(n) + 1.0
    rows = np.broadcast_to(stream[:, None], (n, trials))
    q = np.arange(1000, 10_001, 1000, dtype=float)
    exact = q - 1
    configs = [(v, "plain") for v in ALL_VARIANTS]
    configs += [("1111", "base2"), ("1111", "wa")]
    worst, worst_cfg, ok = 0.0, "", True
    for i, (variant, mode) in enumerate(configs):
        eng = Engine(trials, budget, mode=mode, seed=900 + i,
                     flags=VariantFlags.from_string(variant))
        eng.feed(rows)
        est = eng.rank_matrix(q)
        se = est.std(axis=0, ddof=1) / math.sqrt(trials)
        z = np.abs(est.mean(axis=0) - exact) / se
        zmax = float(z.max())
        if zmax > worst:
            worst, worst_cfg = zmax, f"{mode}-{variant}"
        ok = ok and zmax <= 3.0
    report("C5", ok,
           f"|mean est - exact| <= 3 SE over {trials} seeds at 10 queries, "
           f"all {len(configs)} configs (16 variants + base2 + weight-aware); "
           f"worst |z| = {worst:.2f} ({worst_cfg})")


def test_c6_weight_conservation_and_discard_bound():
    rnd = random.Random(606)
    worst_frac = 0.0
    for s in range(1000):
        budget = rnd.choice([64, 128, 256])
        b2 = Base2Sketch(budget, seed=s)
        wa = WeightedSketch(budget, seed=s)
        total = 0
        for _ in range(rnd.randint(20, 60)):
            v = rnd.random()
            w = rnd.randint(1, 1 << rnd.randint(0, 12))
            b2.update(v, w)
            wa.update(v, w)
            total += w
            assert b2.stored_weight() == total
            assert wa.stored_weight() + wa.discarded == total
        eps = error_bound(0.01, wa.k, wa.c)
        assert wa.discarded <= 3 * eps * total
        if total:
            worst_frac = max(worst_frac, wa.discarded / total)
    report("C6", True,
           "weight conserved exactly after every update on 1000 random "
           f"weighted streams; worst weight-aware discard fraction "
           f"{worst_frac:.4f} within the 3-eps bound")


def test_c7_weighted_accuracy_near_unitary_baseline():
    n, seeds, budget = 10_000, 50, 256
    rnd = random.Random(707)
    values = np.array([rnd.random() for _ in range(n)])
    weights = np.array([rnd.randint(1, 64) for _ in range(n)])
    big_w = int(weights.sum())
    order = np.argsort(values)
    sv = values[order]
    cum = np.concatenate([[0], np.cumsum(weights[order])])
    q_idx = np.linspace(0, n - 1, 200).round().astype(int)
    q, exact = sv[q_idx], cum[q_idx].astype(float)

    b2_errs = []
    for s in range(seeds):
        b2 = Base2Sketch(budget, seed=2000 + s)
        for v, w in zip(values, weights):
            b2.update(float(v), int(w))
        b2_errs.append(max(abs(b2.rank(float(x)).value - e)
                           for x, e in zip(q, exact)) / big_w)

    expanded = np.repeat(values, weights)
    rows = np.broadcast_to(expanded[:, None], (big_w, seeds))
    eng = Engine(seeds, budget, seed=71)
    eng.feed(rows)
    base_errs = eng.max_errors(q, exact)

    ratio = float(np.mean(b2_errs) / base_errs.mean())
    d = base2_decompose(861, 3, 8, k=4)
    decomp_ok = d.w_prime == 13 and d.coeffs == {4: 1, 6: 1, 8: 3}
    report("C7", 0.5 <= ratio <= 2.0 and decomp_ok,
           f"base2 mean max error {np.mean(b2_errs):.4f} vs unitary "
           f"baseline {base_errs.mean():.4f} over {seeds} seeds "
           f"(ratio {ratio:.2f}, within 2x); reference decomposition "
           f"{'exact' if decomp_ok else 'WRONG'}")


def test_c8_backends_serialize_identically():
    rnd = random.Random(808)
    mismatches = 0
    for _ in range(1000):
        seed = rnd.randrange(1 << 30)
        n = rnd.randint(30, 250)
        budget = rnd.choice([16, 24, 32, 48, 64, 96])
        flags = VariantFlags.from_string(rnd.choice(ALL_VARIANTS))
        vals = [rnd.random() for _ in range(n)]
        blobs = []
        for backend in ("list", "packed"):
            sk = Sketch(budget, flags=flags, seed=seed, backend=backend)
            for v in vals:
                sk.update(v)
            blobs.append(sk.serialize())
        if blobs[0] != blobs[1]:
            mismatches += 1
    report("C8", mismatches == 0,
           f"list and packed backends byte-identical on 1000 random "
           f"(seed, stream, budget, variant) runs; {mismatches} mismatches")


def test_c9_tail_bound_constant():
    c, k, eps = INV_SQRT2, 75, 0.05
    expected = (2.0 - math.sqrt(2.0)) / 8.0  # = c^3(2c-1)/2 at c = 1/sqrt(2)
    implied = -math.log(failure_probability(eps, k, c) / 2.0) / (eps * eps * k * k)
    roundtrip = failure_probability(error_bound(0.05, k, c), k, c)
    ok = abs(implied - expected) <= 1e-9 and abs(roundtrip - 0.05) <= 1e-9
    report("C9", ok,
           f"failure-probability constant {implied:.9f} matches "
           f"c^3(2c-1)/2 = {expected:.9f} to 1e-9; bound inversion exact")


def test_c10_throughput_soft_target():
    stats = throughput_benchmark(n=300_000, budget=512, seed=0)
    rate = stats["updates_per_sec"]
    excl = stats["updates_per_sec_excl_sort"]
    met = excl >= 5e6
    # soft target: always reported, never a gate
    report("C10", True,
           f"throughput {rate / 1e6:.2f}M updates/s "
           f"({excl / 1e6:.2f}M/s excluding level-0 sort time); "
           f"{'meets' if met else 'below'} the 5M/s soft target (not a gate)")
