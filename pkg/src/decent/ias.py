"""Simulated attestation authority (the IAS stand-in).

Verifies platform quotes, signs attestation reports with a single published
key, tracks per-platform revocation and models response latency with the
gamma distributions measured against the real service.
"""

from __future__ import annotations

import collections
import enum
import random
import threading
from dataclasses import dataclass

from . import crypto, tlv
from .errors import AuthFailure, MalformedEncoding, UnknownGroup
from .platform import REPORT_DATA_LEN, AttestationGroup, Quote, SimClock


class Verdict(enum.IntEnum):
    OK = 0
    GroupRevoked = 1
    SignatureInvalid = 2


@dataclass(frozen=True)
class GammaDelay:
    """Gamma delay parameterised by mean/sd (method of moments), in seconds."""

    mean: float
    sd: float

    @property
    def shape(self) -> float:
        return (self.mean / self.sd) ** 2

    @property
    def scale(self) -> float:
        return self.sd**2 / self.mean

    def sample(self, rng: random.Random) -> float:
        return rng.gammavariate(self.shape, self.scale)


@dataclass(frozen=True)
class LatencyModel:
    report: GammaDelay = GammaDelay(0.255, 0.070)
    sigrl: GammaDelay = GammaDelay(0.039, 0.024)


@dataclass(frozen=True)
class IasReport:
    measurement: bytes
    report_data: bytes
    group_id: str
    verdict: Verdict
    nonce: bytes
    timestamp: float
    signature: bytes

    def signed_body(self) -> bytes:
        return _report_body(
            self.measurement, self.report_data, self.group_id, self.verdict, self.nonce, self.timestamp
        )

    def encode(self) -> bytes:
        return self.signed_body() + tlv.pack([(7, self.signature)])

    @classmethod
    def decode(cls, data: bytes) -> "IasReport":
        f = tlv.unpack(data, [1, 2, 3, 4, 5, 6, 7])
        try:
            verdict = Verdict(tlv.read_u8(f[4]))
            gid = f[3].decode()
        except (ValueError, UnicodeDecodeError) as exc:
            raise MalformedEncoding("bad IAS report field") from exc
        return cls(
            tlv.fixed(f[1], 32, "measurement"),
            tlv.fixed(f[2], REPORT_DATA_LEN, "report_data"),
            gid,
            verdict,
            tlv.fixed(f[5], 16, "nonce"),
            tlv.time_from_wire(f[6]),
            f[7],
        )

    def verify(self, authority_key: bytes) -> bool:
        return crypto.verify(authority_key, self.signed_body(), self.signature)


def _report_body(measurement, report_data, group_id, verdict, nonce, timestamp) -> bytes:
    return tlv.pack(
        [
            (1, measurement),
            (2, report_data),
            (3, group_id.encode()),
            (4, tlv.u8(int(verdict))),
            (5, nonce),
            (6, tlv.time_to_wire(timestamp)),
        ]
    )


@dataclass(frozen=True)
class SigRl:
    group_id: str
    seq: int
    revoked_platform_ids: tuple[str, ...]
    signature: bytes

    def signed_body(self) -> bytes:
        return _sigrl_body(self.group_id, self.seq, self.revoked_platform_ids)

    def verify(self, authority_key: bytes) -> bool:
        return crypto.verify(authority_key, self.signed_body(), self.signature)


def _sigrl_body(group_id: str, seq: int, ids: tuple[str, ...]) -> bytes:
    return tlv.pack(
        [(1, group_id.encode()), (2, tlv.u64(seq))] + [(3, pid.encode()) for pid in ids]
    )


class AttestationService:
    def __init__(
        self,
        rng: random.Random | None = None,
        clock: SimClock | None = None,
        latency: LatencyModel | None = None,
        replay_mode: bool = False,
        latency_seed: int = 0,
    ):
        self._signing = crypto.SigningKeyPair.generate(rng)
        self.clock = clock or SimClock()
        self.latency = latency or LatencyModel()
        self.replay_mode = replay_mode
        self._latency_rng = random.Random(latency_seed)
        self._groups: dict[str, AttestationGroup] = {}
        self._revoked: dict[str, list[str]] = {}
        self._members: dict[str, str] = {}
        self._revoked_platforms: set[str] = set()
        self._replay: IasReport | None = None
        self._lock = threading.Lock()
        self.calls: collections.Counter = collections.Counter()

    @property
    def public_key(self) -> bytes:
        return self._signing.public

    def register_group(self, group: AttestationGroup) -> None:
        with self._lock:
            self._groups[group.group_id] = group
            self._revoked.setdefault(group.group_id, [])

    def provision(self, platform) -> None:
        """Record a platform as a member of its group (done by the manufacturer)."""
        self.register_group(platform.group)
        with self._lock:
            self._members[platform.platform_id] = platform.group_id

    # -- latency -------------------------------------------------------------

    def sample_report_delay(self) -> float:
        with self._lock:
            return self.latency.report.sample(self._latency_rng)

    def sample_sigrl_delay(self) -> float:
        with self._lock:
            return self.latency.sigrl.sample(self._latency_rng)

    # -- API -----------------------------------------------------------------

    def get_sigrl(self, group_id: str) -> SigRl:
        with self._lock:
            self.calls["get_sigrl"] += 1
            if group_id not in self._groups:
                raise UnknownGroup(group_id)
            ids = tuple(self._revoked[group_id])
        seq = len(ids)
        return SigRl(group_id, seq, ids, crypto.sign(self._signing.private, _sigrl_body(group_id, seq, ids)))

    def revoke_platform(self, platform_id: str) -> None:
        with self._lock:
            self._revoked_platforms.add(platform_id)
            gid = self._members.get(platform_id)
            if gid is not None and platform_id not in self._revoked[gid]:
                self._revoked[gid].append(platform_id)

    def is_revoked(self, platform_id: str) -> bool:
        with self._lock:
            return platform_id in self._revoked_platforms

    def verify_quote(self, quote: Quote, nonce: bytes) -> IasReport:
        tlv.fixed(nonce, 16, "nonce")
        with self._lock:
            self.calls["verify_quote"] += 1
            if self.replay_mode and self._replay is not None:
                return self._replay
            verdict = self._judge(quote)
        now = tlv.time_from_wire(tlv.time_to_wire(self.clock.now()))
        body = _report_body(quote.measurement, quote.report_data, quote.group_id, verdict, nonce, now)
        report = IasReport(
            quote.measurement,
            quote.report_data,
            quote.group_id,
            verdict,
            nonce,
            now,
            crypto.sign(self._signing.private, body),
        )
        if self.replay_mode:
            with self._lock:
                self._replay = self._replay or report
        return report

    def _judge(self, quote: Quote) -> Verdict:
        group = self._groups.get(quote.group_id)
        if group is None or not crypto.verify(group.public_key, quote.signed_body(), quote.group_signature):
            return Verdict.SignatureInvalid
        n = crypto.AEAD_NONCE_LEN
        try:
            platform_id = crypto.aead_open(
                group._escrow_key, quote.pseudonym[:n], quote.group_id.encode(), quote.pseudonym[n:]
            ).decode()
        except (AuthFailure, UnicodeDecodeError):
            return Verdict.SignatureInvalid
        if platform_id in self._revoked_platforms:
            return Verdict.GroupRevoked
        return Verdict.OK
