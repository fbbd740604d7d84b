"""AuthList: the canonical, immutable table of which code may provide which service.

Binary layout (all integers big-endian)::

    "DAL1" | u16 entry count | entries...
    entry := digest[32] | u8 name length | name | u8 nested flag | [nested AuthList]

Entries are strictly ascending by (digest, name bytes). Nested lists use the
same layout and may not nest again.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator

from . import crypto
from .errors import MalformedEncoding

MAGIC = b"DAL1"
DECENT_SERVER = "DecentServer"
DECENT_REVOKER = "DecentRevoker"
MAX_NESTING = 1

_SERVICE_RE = re.compile(r"[A-Za-z0-9_-]{1,64}")


def check_service_name(name: str) -> str:
    if not isinstance(name, str) or not _SERVICE_RE.fullmatch(name):
        raise ValueError(f"invalid service name {name!r}")
    return name


@dataclass(frozen=True)
class AuthListEntry:
    digest: bytes
    service: str
    nested: "AuthList | None" = None

    def __post_init__(self):
        if len(self.digest) != crypto.DIGEST_LEN:
            raise ValueError("digest must be 32 bytes")
        check_service_name(self.service)
        if self.nested is not None and any(e.nested is not None for e in self.nested):
            raise ValueError("nested AuthLists may not nest again")

    @property
    def sort_key(self) -> tuple[bytes, bytes]:
        return (self.digest, self.service.encode())


class AuthList:
    """Immutable; equality is byte equality of the canonical encoding."""

    __slots__ = ("_entries", "_encoded", "_hash")

    def __init__(self, entries: Iterable[AuthListEntry | tuple] = ()):
        items = []
        for e in entries:
            if not isinstance(e, AuthListEntry):
                e = AuthListEntry(*e)
            items.append(e)
        items.sort(key=lambda e: e.sort_key)
        for a, b in zip(items, items[1:]):
            if a.sort_key == b.sort_key:
                raise ValueError(f"duplicate entry for {a.service} / {a.digest.hex()}")
        if len(items) > 0xFFFF:
            raise ValueError("too many entries")
        object.__setattr__(self, "_entries", tuple(items))
        encoded = _encode(self._entries)
        object.__setattr__(self, "_encoded", encoded)
        object.__setattr__(self, "_hash", crypto.hash(encoded))

    def __setattr__(self, name, value):
        raise AttributeError("AuthList is immutable")

    @property
    def entries(self) -> tuple[AuthListEntry, ...]:
        return self._entries

    @property
    def hash(self) -> bytes:
        return self._hash

    def encode(self) -> bytes:
        return self._encoded

    @classmethod
    def decode(cls, data: bytes) -> "AuthList":
        lst, pos = _decode(bytes(data), 0, depth=0)
        if pos != len(data):
            raise MalformedEncoding("trailing bytes after AuthList")
        return lst

    def __iter__(self) -> Iterator[AuthListEntry]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, AuthList) and self._encoded == other._encoded

    def __hash__(self) -> int:
        return hash(self._encoded)

    def __repr__(self) -> str:
        return f"AuthList({len(self._entries)} entries, hash={self._hash.hex()[:12]})"

    def authorizes(self, digest: bytes, service: str) -> bool:
        return any(e.digest == digest and e.service == service for e in self._entries)

    def matches(self, other: "AuthList") -> bool:
        return self._encoded == other._encoded

    def nested_definition(self, digest: bytes, service: str) -> "AuthList | None":
        for e in self._entries:
            if e.digest == digest and e.service == service:
                return e.nested
        return None

    def digests_for(self, service: str) -> list[bytes]:
        return [e.digest for e in self._entries if e.service == service]

    def services_of(self, digest: bytes) -> list[str]:
        return [e.service for e in self._entries if e.digest == digest]

    # -- text format ---------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for e in self._entries:
            lines.append(f"{e.digest.hex()} {e.service}")
            for n in e.nested or ():
                lines.append(f"    {n.digest.hex()} {n.service}")
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str) -> "AuthList":
        """Parse ``<hex digest> <service>`` lines; indented lines nest under the entry above."""
        top: list[list] = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].rstrip()
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise MalformedEncoding(f"line {lineno}: expected '<digest> <service>'")
            try:
                digest = bytes.fromhex(parts[0])
                entry = (digest, check_service_name(parts[1]))
                if len(digest) != crypto.DIGEST_LEN:
                    raise ValueError("digest must be 64 hex characters")
            except ValueError as exc:
                raise MalformedEncoding(f"line {lineno}: {exc}") from exc
            if line[0].isspace():
                if not top:
                    raise MalformedEncoding(f"line {lineno}: nested entry without parent")
                top[-1][2].append(entry)
            else:
                top.append([entry[0], entry[1], []])
        try:
            return cls(
                AuthListEntry(d, s, AuthList(nested) if nested else None) for d, s, nested in top
            )
        except ValueError as exc:
            raise MalformedEncoding(str(exc)) from exc


def _encode(entries: tuple[AuthListEntry, ...]) -> bytes:
    out = bytearray(MAGIC)
    out += struct.pack(">H", len(entries))
    for e in entries:
        name = e.service.encode()
        out += e.digest
        out += struct.pack(">B", len(name))
        out += name
        if e.nested is None:
            out += b"\x00"
        else:
            out += b"\x01"
            out += e.nested.encode()
    return bytes(out)


def _decode(data: bytes, pos: int, depth: int) -> tuple[AuthList, int]:
    if data[pos : pos + 4] != MAGIC:
        raise MalformedEncoding("bad AuthList magic")
    if len(data) < pos + 6:
        raise MalformedEncoding("truncated AuthList header")
    (count,) = struct.unpack_from(">H", data, pos + 4)
    pos += 6
    entries = []
    prev = None
    for _ in range(count):
        if len(data) < pos + 33:
            raise MalformedEncoding("truncated AuthList entry")
        digest = data[pos : pos + 32]
        nlen = data[pos + 32]
        pos += 33
        raw_name = data[pos : pos + nlen]
        if len(raw_name) != nlen:
            raise MalformedEncoding("truncated service name")
        pos += nlen
        try:
            name = check_service_name(raw_name.decode("ascii"))
        except (UnicodeDecodeError, ValueError) as exc:
            raise MalformedEncoding(f"bad service name {raw_name!r}") from exc
        if pos >= len(data):
            raise MalformedEncoding("missing nested flag")
        flag = data[pos]
        pos += 1
        nested = None
        if flag == 1:
            if depth >= MAX_NESTING:
                raise MalformedEncoding("AuthList nested too deeply")
            nested, pos = _decode(data, pos, depth + 1)
        elif flag != 0:
            raise MalformedEncoding("bad nested flag")
        key = (digest, raw_name)
        if prev is not None and key <= prev:
            raise MalformedEncoding("AuthList entries unsorted or duplicated")
        prev = key
        entries.append(AuthListEntry(digest, name, nested))
    return AuthList(entries), pos


def canonical_encode(lst: AuthList) -> bytes:
    return lst.encode()


def decode(data: bytes) -> AuthList:
    return AuthList.decode(data)


def authorizes(lst: AuthList, digest: bytes, service: str) -> bool:
    return lst.authorizes(digest, service)


def matches(a: AuthList, b: AuthList) -> bool:
    return a.matches(b)


def nested_definition(lst: AuthList, digest: bytes, service: str) -> AuthList | None:
    return lst.nested_definition(digest, service)
