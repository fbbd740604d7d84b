"""Component revocation lists and the revoker poll messages."""

from __future__ import annotations

from dataclasses import dataclass

from . import crypto, tlv
from .errors import MalformedEncoding

CORL_LABEL = b"decent-corl-v1\0"

POLL_REQUEST = 1
POLL_REPLY = 2


@dataclass(frozen=True)
class CoRL:
    revoker_identity: bytes
    seq: int
    entries: tuple[bytes, ...]
    signature: bytes = b""

    def body(self) -> bytes:
        return tlv.pack(
            [(1, self.revoker_identity), (2, tlv.u64(self.seq))] + [(3, e) for e in self.entries]
        )

    def encode(self) -> bytes:
        return tlv.pack([(1, self.body()), (2, self.signature)])

    @classmethod
    def decode(cls, data: bytes) -> "CoRL":
        outer = tlv.unpack(data, [1, 2])
        fields = list(tlv.iter_fields(outer[1]))
        if len(fields) < 2 or fields[0][0] != 1 or fields[1][0] != 2:
            raise MalformedEncoding("CoRL header")
        entries = []
        for tag, value in fields[2:]:
            if tag != 3:
                raise MalformedEncoding(f"unexpected CoRL tag {tag}")
            entries.append(tlv.fixed(value, crypto.DIGEST_LEN, "CoRL entry"))
        corl = cls(
            tlv.fixed(fields[0][1], crypto.DIGEST_LEN, "revoker identity"),
            tlv.read_u64(fields[1][1]),
            tuple(entries),
            outer[2],
        )
        if corl.body() != outer[1]:
            raise MalformedEncoding("non-canonical CoRL body")
        return corl

    @classmethod
    def signed(cls, keypair: crypto.SigningKeyPair, identity: bytes, seq: int, entries) -> "CoRL":
        unsigned = cls(identity, seq, tuple(entries))
        return cls(identity, seq, tuple(entries), crypto.sign(keypair.private, CORL_LABEL + unsigned.body()))

    def signature_valid(self, public_key: bytes) -> bool:
        return crypto.verify(public_key, CORL_LABEL + self.body(), self.signature)

    def extends(self, older: "CoRL") -> bool:
        """True when this list is a legal successor of ``older`` (same revoker, append-only)."""
        return (
            self.revoker_identity == older.revoker_identity
            and self.seq >= older.seq
            and self.entries[: len(older.entries)] == older.entries
        )


def poll_request(since_seq: int) -> bytes:
    return tlv.pack([(1, tlv.u8(POLL_REQUEST)), (2, tlv.u64(since_seq))])


def poll_reply(corl: CoRL) -> bytes:
    return tlv.pack([(1, tlv.u8(POLL_REPLY)), (2, corl.encode())])


def parse_poll_request(data: bytes) -> int:
    f = tlv.unpack(data, [1, 2])
    if tlv.read_u8(f[1]) != POLL_REQUEST:
        raise MalformedEncoding("not a poll request")
    return tlv.read_u64(f[2])


def parse_poll_reply(data: bytes) -> CoRL:
    f = tlv.unpack(data, [1, 2])
    if tlv.read_u8(f[1]) != POLL_REPLY:
        raise MalformedEncoding("not a poll reply")
    return CoRL.decode(f[2])
