"""Simulated enclave platform.

A :class:`Platform` stands in for one CPU: it measures loaded code, MACs local
attestation reports under a platform-private key, signs quotes with a group
key shared by its attestation group, derives seal keys from a per-platform
root secret and exposes a trusted clock the host cannot rewind.
"""

from __future__ import annotations

import enum
import itertools
import random
import threading
from dataclasses import dataclass, field

from . import crypto, tlv
from .errors import MalformedEncoding

REPORT_DATA_LEN = 64


class SimClock:
    """Monotonic virtual clock in seconds."""

    def __init__(self, start: float = 0.0):
        self._now = float(start)
        self._lock = threading.Lock()

    def now(self) -> float:
        return self._now

    def advance(self, dt: float) -> float:
        if dt < 0:
            raise ValueError("clock cannot move backwards")
        with self._lock:
            self._now += dt
            return self._now

    def set(self, t: float) -> None:
        with self._lock:
            if t < self._now:
                raise ValueError("clock cannot move backwards")
            self._now = float(t)


class SealPolicy(enum.Enum):
    BY_MEASUREMENT = b"MRENCLAVE"
    BY_SIGNER = b"MRSIGNER"


@dataclass(frozen=True)
class EnclaveCode:
    blob: bytes
    signer: bytes = b"unsigned"

    @property
    def measurement(self) -> bytes:
        return crypto.hash(self.blob)

    @property
    def signer_id(self) -> bytes:
        return crypto.hash(self.signer)


class AttestationGroup:
    """Platforms sharing one group signing key (stand-in for an EPID group)."""

    def __init__(self, group_id: str, rng: random.Random | None = None):
        self.group_id = group_id
        self._signing = crypto.SigningKeyPair.generate(rng)
        # lets the authority (and only it) tell member platforms apart
        self._escrow_key = crypto.random_bytes(crypto.AEAD_KEY_LEN, rng)

    @property
    def public_key(self) -> bytes:
        return self._signing.public

    def __repr__(self) -> str:
        return f"AttestationGroup({self.group_id!r})"


def pack_report_data(*parts: bytes) -> bytes:
    data = b"".join(parts)
    if len(data) > REPORT_DATA_LEN:
        raise ValueError("report data longer than 64 bytes")
    return data.ljust(REPORT_DATA_LEN, b"\0")


@dataclass(frozen=True)
class LocalReport:
    measurement: bytes
    report_data: bytes
    mac: bytes

    def encode(self) -> bytes:
        return tlv.pack([(1, self.measurement), (2, self.report_data), (3, self.mac)])

    @classmethod
    def decode(cls, data: bytes) -> "LocalReport":
        f = tlv.unpack(data, [1, 2, 3])
        return cls(
            tlv.fixed(f[1], 32, "measurement"),
            tlv.fixed(f[2], REPORT_DATA_LEN, "report_data"),
            tlv.fixed(f[3], 32, "mac"),
        )


@dataclass(frozen=True)
class Quote:
    measurement: bytes
    report_data: bytes
    group_id: str
    pseudonym: bytes
    group_signature: bytes

    def signed_body(self) -> bytes:
        return quote_body(self.measurement, self.report_data, self.group_id, self.pseudonym)

    def encode(self) -> bytes:
        return tlv.pack(
            [
                (1, self.measurement),
                (2, self.report_data),
                (3, self.group_id.encode()),
                (4, self.pseudonym),
                (5, self.group_signature),
            ]
        )

    @classmethod
    def decode(cls, data: bytes) -> "Quote":
        f = tlv.unpack(data, [1, 2, 3, 4, 5])
        try:
            gid = f[3].decode()
        except UnicodeDecodeError as exc:
            raise MalformedEncoding("group id") from exc
        return cls(
            tlv.fixed(f[1], 32, "measurement"),
            tlv.fixed(f[2], REPORT_DATA_LEN, "report_data"),
            gid,
            f[4],
            f[5],
        )


def quote_body(measurement: bytes, report_data: bytes, group_id: str, pseudonym: bytes) -> bytes:
    return tlv.pack([(1, measurement), (2, report_data), (3, group_id.encode()), (4, pseudonym)])


class Platform:
    def __init__(
        self,
        platform_id: str,
        group: AttestationGroup,
        clock: SimClock | None = None,
        rng: random.Random | None = None,
    ):
        self.platform_id = platform_id
        self.group = group
        self.clock = clock or SimClock()
        self.rng = rng
        self._report_key = crypto.random_bytes(32, rng)
        self._root_seal_secret = crypto.random_bytes(32, rng)
        self._rng_lock = threading.Lock()

    @property
    def group_id(self) -> str:
        return self.group.group_id

    def __repr__(self) -> str:
        return f"Platform({self.platform_id!r}, group={self.group.group_id!r})"

    def random_bytes(self, n: int) -> bytes:
        with self._rng_lock:
            return crypto.random_bytes(n, self.rng)

    def load_enclave(self, code: EnclaveCode, host_id: str = "host") -> "EnclaveHandle":
        return EnclaveHandle(self, code, host_id)

    def trusted_now(self) -> float:
        return self.clock.now()

    # -- operations only reachable through an EnclaveHandle ------------------

    def _report_mac(self, measurement: bytes, report_data: bytes) -> bytes:
        return crypto.hmac256(self._report_key, measurement + report_data)

    def _quote(self, measurement: bytes, report_data: bytes) -> Quote:
        nonce = self.random_bytes(crypto.AEAD_NONCE_LEN)
        pseudonym = nonce + crypto.aead_seal(
            self.group._escrow_key, nonce, self.group_id.encode(), self.platform_id.encode()
        )
        body = quote_body(measurement, report_data, self.group_id, pseudonym)
        sig = crypto.sign(self.group._signing.private, body)
        return Quote(measurement, report_data, self.group_id, pseudonym, sig)

    def _seal_key(self, policy: SealPolicy, identity: bytes, label: bytes) -> bytes:
        return crypto.hkdf(self._root_seal_secret, salt=policy.value, info=identity + label)


_enclave_ids = itertools.count(1)


class EnclaveHandle:
    """A loaded enclave. Its host can only use the methods below."""

    def __init__(self, platform: Platform, code: EnclaveCode, host_id: str):
        self.platform = platform
        self.measurement = code.measurement
        self.signer_id = code.signer_id
        self.host_id = host_id
        self.enclave_id = next(_enclave_ids)

    def __repr__(self) -> str:
        return (
            f"EnclaveHandle({self.platform.platform_id!r}, "
            f"{self.measurement.hex()[:12]}..., host={self.host_id!r})"
        )

    def random_bytes(self, n: int) -> bytes:
        return self.platform.random_bytes(n)

    @property
    def rng(self) -> random.Random | None:
        return self.platform.rng

    def create_local_report(self, report_data: bytes) -> LocalReport:
        tlv.fixed(report_data, REPORT_DATA_LEN, "report_data")
        return LocalReport(
            self.measurement, report_data, self.platform._report_mac(self.measurement, report_data)
        )

    def verify_local_report(self, report: LocalReport) -> bool:
        if len(report.report_data) != REPORT_DATA_LEN or len(report.measurement) != 32:
            return False
        expected = self.platform._report_mac(report.measurement, report.report_data)
        return crypto.ct_equal(expected, report.mac)

    def create_quote(self, report_data: bytes) -> Quote:
        tlv.fixed(report_data, REPORT_DATA_LEN, "report_data")
        return self.platform._quote(self.measurement, report_data)

    def derive_seal_key(self, policy: SealPolicy, label: bytes) -> bytes:
        identity = self.measurement if policy is SealPolicy.BY_MEASUREMENT else self.signer_id
        return self.platform._seal_key(policy, identity, label)

    def trusted_now(self) -> float:
        return self.platform.trusted_now()


@dataclass
class Host:
    """The untrusted machine running enclaves. Its OS clock is adversary-controlled."""

    name: str
    platform: Platform
    honest: bool = True
    os_clock_offset: float = field(default=0.0)

    def os_time(self) -> float:
        return self.platform.clock.now() + self.os_clock_offset

    def rewind_os_clock(self, dt: float) -> None:
        self.os_clock_offset -= dt


def load_enclave(platform: Platform, code: EnclaveCode, host_id: str = "host") -> EnclaveHandle:
    return platform.load_enclave(code, host_id)


def enclave_code(name: str) -> EnclaveCode:
    """Deterministic stand-in binary for a named enclave build."""
    return EnclaveCode(b"decent-enclave-binary\0" + name.encode())
