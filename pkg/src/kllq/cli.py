"""Command-line surface: build, query, merge, eval, info.

Exit codes: 0 success, 1 usage error, 2 data error (unreadable input,
malformed sketch file, incompatible merge, parse failure).
"""

from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from .evalharness import (
    CSV_COLUMNS,
    StreamSpec,
    run_experiment,
    throughput_benchmark,
)
from .serial import FormatError, read_header
from .sketch import INV_SQRT2, Sketch, VariantFlags, merge
from .weighted import Base2Sketch, WeightedSketch


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage problems; the contract here is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _variant(s: str) -> str:
    if len(s) != 4 or any(ch not in "01" for ch in s):
        raise argparse.ArgumentTypeError(f"variant must match [01]{{4}}, got {s!r}")
    return s


def _codec_internal(codec: str) -> str:
    return "f64" if codec == "f64" else "str"


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kllq", description="Streaming quantile sketches.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--budget", type=int, default=512)
        sp.add_argument("--c", type=float, default=INV_SQRT2)
        sp.add_argument("--variant", type=_variant, default="1111")
        sp.add_argument("--backend", choices=["list", "packed"], default="packed")
        sp.add_argument("--codec", choices=["f64", "string"], default="f64")
        sp.add_argument("--seed", type=int, default=0)

    b = sub.add_parser("build", help="stream a file into a sketch")
    common(b)
    b.add_argument("--weighted", choices=["none", "base2", "weight-aware"],
                   default="none")
    b.add_argument("--in", dest="input", required=True)
    b.add_argument("--out", dest="output", required=True)

    q = sub.add_parser("query", help="query a sketch file")
    q.add_argument("--sketch", required=True)
    q.add_argument("--quantiles", help="comma-separated values in [0,1]")
    q.add_argument("--ranks", help="comma-separated item values")
    q.add_argument("--cdf", help="file of sorted query values, one per line")

    m = sub.add_parser("merge", help="merge sketch files (left fold)")
    m.add_argument("--out", dest="output", required=True)
    m.add_argument("inputs", nargs="+")

    e = sub.add_parser("eval", help="run an experiment matrix, emit CSV")
    e.add_argument("--variants", default="1111")
    e.add_argument("--budgets", default="512")
    e.add_argument("--streams", default="shuffled")
    e.add_argument("--n", type=int, default=100_000)
    e.add_argument("--trials", type=int, default=50)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--c", type=float, default=INV_SQRT2)
    e.add_argument("--q-count", type=int, default=1000)
    e.add_argument("--trend-a", type=float, default=1.0)
    e.add_argument("--trend-b", type=float, default=1.0)
    e.add_argument("--brown-step", type=float, default=1.0)
    e.add_argument("--weighted", choices=["none", "base2", "weight-aware"],
                   default="none")
    e.add_argument("--out", dest="output")

    i = sub.add_parser("info", help="print sketch file header")
    i.add_argument("sketch")

    t = sub.add_parser("bench", help="throughput benchmark (soft numbers)")
    t.add_argument("--n", type=int, default=2_000_000)
    t.add_argument("--budget", type=int, default=512)
    t.add_argument("--seed", type=int, default=0)
    return p


# ----------------------------------------------------------------------


def _parse_item(token: str, codec: str, lineno: int):
    if codec == "f64":
        try:
            return float(token)
        except ValueError:
            raise DataError(f"line {lineno}: not a number: {token!r}")
    return token


def _iter_records(path: str, codec: str, weighted: bool):
    try:
        f = open(path)
    except OSError as e:
        raise DataError(str(e))
    with f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            if weighted and "\t" in line:
                wtok, token = line.split("\t", 1)
                try:
                    w = int(wtok)
                except ValueError:
                    raise DataError(f"line {lineno}: bad weight {wtok!r}")
                if w < 1:
                    raise DataError(f"line {lineno}: weight must be >= 1")
            else:
                w, token = 1, line
            yield _parse_item(token, codec, lineno), w


def cmd_build(args) -> int:
    codec = _codec_internal(args.codec)
    flags = VariantFlags.from_string(args.variant)
    if args.weighted == "none":
        sk = Sketch(args.budget, c=args.c, flags=flags, seed=args.seed,
                    backend=args.backend, codec=codec)
    elif args.weighted == "base2":
        sk = Base2Sketch(args.budget, c=args.c, flags=flags, seed=args.seed,
                         backend=args.backend, codec=codec)
    else:
        sk = WeightedSketch(args.budget, c=args.c, flags=flags,
                            seed=args.seed, codec=codec)
    n = 0
    for item, w in _iter_records(args.input, codec, args.weighted != "none"):
        if args.weighted == "none":
            for _ in range(w):  # plain sketches take unit updates only
                sk.update(item)
                n += 1
        else:
            sk.update(item, w)
            n += 1
    blob = sk.serialize()
    try:
        with open(args.output, "wb") as f:
            f.write(blob)
    except OSError as e:
        raise DataError(str(e))
    if args.weighted == "none":
        core = sk
    elif args.weighted == "base2":
        core = sk.inner
    else:
        core = sk
    compactions = getattr(getattr(core, "stats", None), "compactions", None)
    if compactions is None:  # weight-aware sketch has no stats block
        compactions = "-"
    print(
        f"n={n} H={core.H} H_s={core.H_s} items_n={core.items_n} "
        f"compactions={compactions}",
        file=sys.stderr,
    )
    return 0


def _load_sketch(path: str):
    try:
        data = open(path, "rb").read()
    except OSError as e:
        raise DataError(str(e))
    try:
        mode = read_header(data)["mode"]
        if mode == 0:
            return Sketch.deserialize(data)
        if mode == 1:
            return Base2Sketch.deserialize(data)
        if mode == 2:
            return WeightedSketch.deserialize(data)
        raise DataError(f"unknown sketch mode {mode}")
    except FormatError as e:
        raise DataError(str(e))


def _sketch_codec(sk) -> str:
    return sk.inner.codec if isinstance(sk, Base2Sketch) else sk.codec


def _total(sk) -> int:
    if isinstance(sk, Base2Sketch):
        return sk.inner.n_total
    if isinstance(sk, WeightedSketch):
        return sk.total_weight
    return sk.n_total


def cmd_query(args) -> int:
    sk = _load_sketch(args.sketch)
    codec = _sketch_codec(sk)
    did_something = False
    if args.quantiles:
        did_something = True
        for tok in args.quantiles.split(","):
            try:
                phi = float(tok)
                val = sk.quantile(phi)
            except ValueError as e:
                raise DataError(str(e))
            print(val)
    if args.ranks:
        did_something = True
        n = _total(sk)
        for tok in args.ranks.split(","):
            q = _parse_item(tok, codec, 0)
            if n == 0:
                print("0")
            else:
                print(sk.rank(q).value / n)
    if args.cdf:
        did_something = True
        n = _total(sk)
        try:
            lines = [ln.rstrip("\n") for ln in open(args.cdf) if ln.strip()]
        except OSError as e:
            raise DataError(str(e))
        prev = None
        for i, ln in enumerate(lines, 1):
            q = _parse_item(ln, codec, i)
            if prev is not None and q < prev:
                raise DataError(f"line {i}: cdf queries must be sorted")
            prev = q
            print("0" if n == 0 else sk.rank(q).value / n)
    if not did_something:
        raise DataError("nothing to do: pass --quantiles, --ranks or --cdf")
    return 0


def cmd_merge(args) -> int:
    if len(args.inputs) < 2:
        raise DataError("merge needs at least two sketch files")
    sketches = [_load_sketch(p) for p in args.inputs]
    first = sketches[0]
    if isinstance(first, WeightedSketch):
        raise DataError("weight-aware sketches do not support merge")
    try:
        if isinstance(first, Base2Sketch):
            acc = first.inner
            for other in sketches[1:]:
                if not isinstance(other, Base2Sketch):
                    raise DataError("mismatched parameter: mode")
                acc = merge(acc, other.inner)
            out = Base2Sketch.__new__(Base2Sketch)
            out.inner = acc
            out._pending = []
            out.pushes_last_update = 0
            blob = out.serialize()
        else:
            acc = first
            for other in sketches[1:]:
                if not isinstance(other, Sketch):
                    raise DataError("mismatched parameter: mode")
                acc = merge(acc, other)
            blob = acc.serialize()
    except ValueError as e:
        raise DataError(str(e))
    try:
        with open(args.output, "wb") as f:
            f.write(blob)
    except OSError as e:
        raise DataError(str(e))
    return 0


def cmd_eval(args) -> int:
    specs = []
    for kind in args.streams.split(","):
        kind = kind.strip()
        try:
            specs.append(
                StreamSpec(kind, args.n, seed=args.seed, a=args.trend_a,
                           b=args.trend_b, step=args.brown_step)
            )
        except ValueError as e:
            raise DataError(str(e))
    variants = [v.strip() for v in args.variants.split(",")]
    for v in variants:
        if len(v) != 4 or any(ch not in "01" for ch in v):
            raise DataError(f"variant must match [01]{{4}}, got {v!r}")
    budgets = [int(b) for b in args.budgets.split(",")]
    mode = {"none": "plain", "base2": "base2", "weight-aware": "wa"}[args.weighted]
    records = run_experiment(
        variants, budgets, specs, args.trials, out_path=args.output,
        master_seed=args.seed, c=args.c, q_count=args.q_count, mode=mode,
    )
    if args.output is None:
        print(",".join(CSV_COLUMNS))
        for rec in records:
            print(",".join(str(getattr(rec, col)) for col in CSV_COLUMNS))
    return 0


def cmd_info(args) -> int:
    try:
        data = open(args.sketch, "rb").read()
    except OSError as e:
        raise DataError(str(e))
    try:
        hdr = read_header(data)
    except FormatError as e:
        raise DataError(str(e))
    mode_names = {0: "plain", 1: "base2", 2: "weight-aware"}
    print(f"mode={mode_names.get(hdr['mode'], hdr['mode'])}")
    print(f"codec={hdr['codec']}")
    print(f"variant={VariantFlags.from_byte(hdr['flags_byte']).to_string()}")
    print(f"budget={hdr['budget']}")
    print(f"c={hdr['c']}")
    print(f"H={hdr['H']} H_s={hdr['H_s']}")
    print(f"n_total={hdr['n_total']} items_n={hdr['items_n']}")
    return 0


def cmd_bench(args) -> int:
    stats = throughput_benchmark(args.n, args.budget, args.seed)
    for key, val in stats.items():
        print(f"{key}={val:.1f}" if val > 100 else f"{key}={val:.4f}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 1
    handlers = {
        "build": cmd_build,
        "query": cmd_query,
        "merge": cmd_merge,
        "eval": cmd_eval,
        "info": cmd_info,
        "bench": cmd_bench,
    }
    try:
        return handlers[args.command](args)
    except DataError as e:
        print(f"kllq: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
