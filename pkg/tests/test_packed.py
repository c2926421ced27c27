import random

from hypothesis import given, settings, strategies as st

from kllq.packed import PackedStore
from kllq.sketch import ListStore, Sketch, VariantFlags


def test_level0_logical_order_is_append_order():
    ps = PackedStore(8)
    for v in [3.0, 1.0, 2.0]:
        ps.append0(v)
    assert ps.items(0) == [3.0, 1.0, 2.0]
    ps.sort0()
    assert ps.items(0) == [1.0, 2.0, 3.0]


def test_reallocation_on_overflow():
    ps = PackedStore(4)
    for v in range(20):
        ps.append0(float(v))
    assert ps.items(0) == [float(v) for v in range(20)]
    assert len(ps.slots) >= 20


def test_add_and_drop_levels():
    ps = PackedStore(16)
    ps.append0(2.0)
    ps.append0(1.0)
    ps.add_top(16)
    ps.push_sorted(1, 5.0)
    ps.push_sorted(1, 4.0)
    assert ps.export_levels() == [[2.0, 1.0], [4.0, 5.0]]
    dropped = ps.drop_bottom()
    assert dropped == [2.0, 1.0]
    assert ps.export_levels() == [[4.0, 5.0]]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32), st.integers(5, 120))
def test_differential_against_list_store(seed, n_ops):
    """Random op sequences must leave both stores logically identical."""
    rnd = random.Random(seed)
    ls, ps = ListStore(), PackedStore(8)
    for _ in range(n_ops):
        n_levels = ls.n_levels
        op = rnd.choice(["append0", "sort0", "push", "full", "sweep",
                         "add_top", "drop"])
        if op == "append0":
            v = rnd.random()
            ls.append0(v), ps.append0(v)
        elif op == "sort0":
            ls.sort0(), ps.sort0()
        elif op == "push" and n_levels > 1:
            i = rnd.randrange(1, n_levels)
            v = rnd.random()
            ls.push_sorted(i, v), ps.push_sorted(i, v)
        elif op == "full" and n_levels > 1:
            i = rnd.randrange(0, n_levels - 1)
            if i == 0:
                ls.sort0(), ps.sort0()
            n = ls.length(i)
            if n >= 2:
                lo = rnd.choice([0, 1]) if n % 2 else 0
                hi = lo + (n - lo) // 2 * 2
                if hi - lo >= 2:
                    off = rnd.randint(0, 1)
                    a = ls.full_compact(i, lo, hi, off)
                    b = ps.full_compact(i, lo, hi, off)
                    assert a == b
        elif op == "sweep" and n_levels > 1:
            i = rnd.randrange(0, n_levels - 1)
            if i == 0:
                ls.sort0(), ps.sort0()
            n = ls.length(i)
            if n >= 2:
                pos = rnd.randrange(0, n - 1)
                off = rnd.randint(0, 1)
                ls.sweep_promote(i, pos, off)
                ps.sweep_promote(i, pos, off)
        elif op == "add_top":
            ls.add_top(8), ps.add_top(8)
        elif op == "drop" and n_levels > 1:
            assert ls.drop_bottom() == ps.drop_bottom()
        assert ls.export_levels() == ps.export_levels()


def test_sketch_byte_identity_spot_check():
    for variant in ("0000", "1111", "0101", "1010"):
        fl = VariantFlags.from_string(variant)
        a = Sketch(64, flags=fl, seed=13, backend="list")
        b = Sketch(64, flags=fl, seed=13, backend="packed")
        rnd = random.Random(21)
        for _ in range(3000):
            v = rnd.random()
            a.update(v)
            b.update(v)
        assert a.serialize() == b.serialize()
