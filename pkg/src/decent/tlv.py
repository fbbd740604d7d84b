"""Minimal tag-length-value codec: u8 tag, u32 big-endian length, value.

Decoding is strict. Fields must appear in the declared order, unknown or
repeated tags are rejected, and trailing bytes are an error, so every value
has exactly one encoding.
"""

from __future__ import annotations

import struct
from typing import Iterable, Sequence

from .errors import MalformedEncoding

_HDR = struct.Struct(">BI")


def pack(fields: Iterable[tuple[int, bytes]]) -> bytes:
    out = bytearray()
    for tag, value in fields:
        if value is None:
            continue
        out += _HDR.pack(tag, len(value))
        out += value
    return bytes(out)


def iter_fields(data: bytes):
    pos = 0
    n = len(data)
    while pos < n:
        if n - pos < _HDR.size:
            raise MalformedEncoding("truncated TLV header")
        tag, length = _HDR.unpack_from(data, pos)
        pos += _HDR.size
        if n - pos < length:
            raise MalformedEncoding("truncated TLV value")
        yield tag, bytes(data[pos : pos + length])
        pos += length


def unpack(
    data: bytes, tags: Sequence[int], optional: Iterable[int] = ()
) -> dict[int, bytes]:
    optional = set(optional)
    found: dict[int, bytes] = {}
    expected = iter(tags)
    for tag, value in iter_fields(data):
        for want in expected:
            if want == tag:
                found[tag] = value
                break
            if want not in optional:
                raise MalformedEncoding(f"missing or misordered field {want}, got {tag}")
        else:
            raise MalformedEncoding(f"unexpected field {tag}")
    for want in expected:
        if want not in optional:
            raise MalformedEncoding(f"missing field {want}")
    return found


def u8(v: int) -> bytes:
    return struct.pack(">B", v)


def u64(v: int) -> bytes:
    if not 0 <= v < 1 << 64:
        raise ValueError(f"{v} does not fit in u64")
    return struct.pack(">Q", v)


def read_u8(b: bytes) -> int:
    if len(b) != 1:
        raise MalformedEncoding("bad u8 field")
    return b[0]


def read_u64(b: bytes) -> int:
    if len(b) != 8:
        raise MalformedEncoding("bad u64 field")
    return struct.unpack(">Q", b)[0]


def fixed(b: bytes, n: int, what: str = "field") -> bytes:
    if len(b) != n:
        raise MalformedEncoding(f"{what} must be {n} bytes, got {len(b)}")
    return b


def time_to_wire(t: float) -> bytes:
    """Timestamps travel as u64 microseconds."""
    return u64(int(round(t * 1_000_000)))


def time_from_wire(b: bytes) -> float:
    return read_u64(b) / 1_000_000
