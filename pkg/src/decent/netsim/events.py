"""Append-only event log recorded by the simulator."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields


def _fmt(v) -> str:
    if isinstance(v, bytes):
        return v.hex()
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


@dataclass(frozen=True)
class Event:
    time: float

    @property
    def kind(self) -> str:
        return type(self).__name__

    def line(self) -> str:
        parts = [_fmt(self.time), self.kind]
        parts += [f"{f.name}={_fmt(getattr(self, f.name))}" for f in fields(self) if f.name != "time"]
        return " ".join(parts)


@dataclass(frozen=True)
class Sent(Event):
    component: str
    measurement: bytes
    authlist_hash: bytes
    payload_digest: bytes


@dataclass(frozen=True)
class Accepted(Event):
    component: str
    peer_measurement: bytes
    peer_authlist_hash: bytes
    payload_digest: bytes


@dataclass(frozen=True)
class ShutDown(Event):
    component: str


@dataclass(frozen=True)
class Revoked(Event):
    digest: bytes


@dataclass(frozen=True)
class Established(Event):
    component: str
    role: str
    peer_measurement: bytes
    resumed: bool
    purpose: str = "app"


@dataclass(frozen=True)
class Rejected(Event):
    component: str
    reason: str


@dataclass(frozen=True)
class Note(Event):
    text: str


class EventLog:
    def __init__(self):
        self._events: list[Event] = []

    def append(self, event: Event) -> None:
        if self._events and event.time < self._events[-1].time:
            raise ValueError("events must be appended in time order")
        self._events.append(event)

    def __iter__(self):
        return iter(self._events)

    def __len__(self) -> int:
        return len(self._events)

    def of(self, kind: type) -> list:
        return [e for e in self._events if isinstance(e, kind)]

    def to_text(self) -> str:
        return "".join(e.line() + "\n" for e in self._events)

    def to_bytes(self) -> bytes:
        return self.to_text().encode()

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


def check_authenticity(log: EventLog) -> bool:
    """Every acceptance is preceded by a matching send from the claimed identity."""
    seen: set[tuple[bytes, bytes, bytes]] = set()
    for e in log:
        if isinstance(e, Sent):
            seen.add((e.measurement, e.authlist_hash, e.payload_digest))
        elif isinstance(e, Accepted):
            if (e.peer_measurement, e.peer_authlist_hash, e.payload_digest) not in seen:
                return False
    return True
