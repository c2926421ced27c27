"""Binary sketch files.

Little-endian throughout.  Header:

    magic  b"KLL1"
    u8     format version (currently 1)
    u8     codec        0 = f64 items, 1 = utf-8 string items
    u8     mode         0 = unweighted, 1 = binary-decomposition wrapper,
                        2 = weight-aware (written by weighted.py)
    u8     variant flags (bit0 lazy, bit1 anti, bit2 spread, bit3 sweep)
    u32    budget
    f64    c
    u32    H
    u32    H_s
    u64    n_total
    u64    items_n
    u64    rng state
    u8     level-0 sorted flag

sampler:  u64 accum, u8 candidate-present, [payload]
levels:   u32 count, then per level (heights are implicit, H_s + index):
          u32 item count, u8 theta marker (0 none / 1 below-everything /
          2 value), u8 sweep parity (0 none / 1 even / 2 odd), u8 pending
          direction (same encoding), [theta payload], item payloads.

f64 payloads are raw 8-byte doubles; string payloads are u32
length-prefixed utf-8.
"""

from __future__ import annotations

import struct
from typing import List, Optional

from .compactor import NEG_INF, KeepParity

MAGIC = b"KLL1"
VERSION = 1

_CODECS = {"f64": 0, "str": 1}
_CODEC_NAMES = {v: k for k, v in _CODECS.items()}


class FormatError(ValueError):
    pass


def _pack_item(out: List[bytes], codec: str, item) -> None:
    if codec == "f64":
        out.append(struct.pack("<d", item))
    else:
        raw = item.encode("utf-8")
        out.append(struct.pack("<I", len(raw)))
        out.append(raw)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise FormatError("truncated sketch file")
        vals = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return vals[0] if len(vals) == 1 else vals

    def item(self, codec: str):
        if codec == "f64":
            return self.take("<d")
        n = self.take("<I")
        if self.pos + n > len(self.data):
            raise FormatError("truncated sketch file")
        raw = self.data[self.pos : self.pos + n]
        self.pos += n
        return raw.decode("utf-8")

    def done(self) -> None:
        if self.pos != len(self.data):
            raise FormatError("trailing bytes after sketch")


def _parity_byte(p: Optional[KeepParity]) -> int:
    if p is None:
        return 0
    return 1 if p is KeepParity.KEEP_EVEN else 2


def _parity_from(b: int) -> Optional[KeepParity]:
    if b == 0:
        return None
    if b == 1:
        return KeepParity.KEEP_EVEN
    if b == 2:
        return KeepParity.KEEP_ODD
    raise FormatError(f"bad parity byte {b}")


def serialize_sketch(sk, mode: int = 0) -> bytes:
    out: List[bytes] = [MAGIC]
    out.append(
        struct.pack(
            "<BBBBIdIIQQQB",
            VERSION,
            _CODECS[sk.codec],
            mode,
            sk.flags.to_byte(),
            sk.budget,
            sk.c,
            sk.H,
            sk.H_s,
            sk.n_total,
            sk.items_n,
            sk.rng.getstate(),
            1 if sk._level0_sorted else 0,
        )
    )
    out.append(struct.pack("<Q", sk.sampler.accum))
    if sk.sampler.candidate is not None:
        out.append(b"\x01")
        _pack_item(out, sk.codec, sk.sampler.candidate)
    else:
        out.append(b"\x00")
    out.append(struct.pack("<I", len(sk.levels)))
    for i, lv in enumerate(sk.levels):
        items = sk.store.items(i)
        theta = lv.sweep.theta
        marker = 0 if theta is None else (1 if theta is NEG_INF else 2)
        out.append(
            struct.pack(
                "<IBBB",
                len(items),
                marker,
                _parity_byte(lv.sweep.parity),
                _parity_byte(lv.direction.pending),
            )
        )
        if marker == 2:
            _pack_item(out, sk.codec, theta)
        for x in items:
            _pack_item(out, sk.codec, x)
    return b"".join(out)


def read_header(data: bytes) -> dict:
    """Decode just the fixed header (enough to dispatch on mode/codec)."""
    if data[:4] != MAGIC:
        raise FormatError("not a sketch file (bad magic)")
    r = _Reader(data)
    r.pos = 4
    (version, codec_b, mode, flags_b, budget, c, big_h, h_s, n_total,
     items_n, rng_state, sorted0) = r.take("<BBBBIdIIQQQB")
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}")
    if codec_b not in _CODEC_NAMES:
        raise FormatError(f"unknown codec {codec_b}")
    return {
        "codec": _CODEC_NAMES[codec_b],
        "mode": mode,
        "flags_byte": flags_b,
        "budget": budget,
        "c": c,
        "H": big_h,
        "H_s": h_s,
        "n_total": n_total,
        "items_n": items_n,
        "rng_state": rng_state,
        "level0_sorted": bool(sorted0),
        "body_pos": r.pos,
    }


def deserialize_sketch(data: bytes, backend: str = "list", expect_mode: int = 0):
    from .sketch import LevelState, Sketch, VariantFlags

    hdr = read_header(data)
    if hdr["mode"] != expect_mode:
        raise FormatError(f"unexpected sketch mode {hdr['mode']}")
    codec = hdr["codec"]
    sk = Sketch(
        budget=hdr["budget"],
        c=hdr["c"],
        flags=VariantFlags.from_byte(hdr["flags_byte"]),
        seed=0,
        backend=backend,
        codec=codec,
    )
    sk.H = hdr["H"]
    sk.H_s = hdr["H_s"]
    sk.n_total = hdr["n_total"]
    sk.items_n = hdr["items_n"]
    sk.rng.setstate(hdr["rng_state"])
    sk._level0_sorted = hdr["level0_sorted"]

    r = _Reader(data)
    r.pos = hdr["body_pos"]
    sk.sampler.rate_exp = sk.H_s
    sk.sampler.accum = r.take("<Q")
    sk.sampler.candidate = r.item(codec) if r.take("<B") else None

    n_levels = r.take("<I")
    if n_levels != sk.H - sk.H_s + 1:
        raise FormatError("level count does not match heights")
    sk.levels = []
    level_items = []
    for i in range(n_levels):
        count, marker, sweep_b, dir_b = r.take("<IBBB")
        lv = LevelState(height=sk.H_s + i)
        if marker == 1:
            lv.sweep.theta = NEG_INF
        elif marker == 2:
            lv.sweep.theta = r.item(codec)
        elif marker != 0:
            raise FormatError(f"bad theta marker {marker}")
        lv.sweep.parity = _parity_from(sweep_b)
        lv.direction.pending = _parity_from(dir_b)
        sk.levels.append(lv)
        level_items.append([r.item(codec) for _ in range(count)])
    r.done()
    if sum(len(li) for li in level_items) != sk.items_n:
        raise FormatError("item count mismatch")
    sk.store.rebuild(level_items, sk._slots_needed())
    sk._recompute_caps()
    return sk
