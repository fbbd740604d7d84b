"""Cryptographic primitives behind small, algorithm-agnostic functions.

Every concrete algorithm choice lives in the constants block below; the rest
of the package only calls the functions in this module.
"""

from __future__ import annotations

import hashlib
import hmac
import os
import random
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .errors import AuthFailure, MalformedEncoding

# --- algorithm configuration -------------------------------------------------
HASH_NAME = "sha256"
DIGEST_LEN = 32
SIGNATURE_SCHEME = "ed25519"  # deterministic (RFC 8032)
SIG_LEN = 64
PUBKEY_LEN = 32
AEAD_CIPHER = "aes-256-gcm"
AEAD_KEY_LEN = 32
AEAD_NONCE_LEN = 12
AEAD_TAG_LEN = 16
KEX_SCHEME = "x25519"
KEX_LEN = 32
_HKDF_HASH = hashes.SHA256
# -----------------------------------------------------------------------------

Digest256 = bytes


def random_bytes(n: int, rng: random.Random | None = None) -> bytes:
    """Entropy source. Simulations pass a seeded ``random.Random`` for replayable traces."""
    if rng is None:
        return os.urandom(n)
    return rng.randbytes(n)


def hash(data: bytes) -> Digest256:  # noqa: A001 - mirrors the domain name
    return hashlib.sha256(data).digest()


def hmac256(key: bytes, data: bytes) -> bytes:
    return hmac.new(key, data, hashlib.sha256).digest()


def ct_equal(a: bytes, b: bytes) -> bool:
    return hmac.compare_digest(a, b)


@dataclass(frozen=True)
class SigningKeyPair:
    private: bytes = field(repr=False)
    public: bytes

    @property
    def fingerprint(self) -> Digest256:
        return fingerprint(self.public)

    @classmethod
    def generate(cls, rng: random.Random | None = None) -> "SigningKeyPair":
        return cls.from_private(random_bytes(32, rng))

    @classmethod
    def from_private(cls, private: bytes) -> "SigningKeyPair":
        sk = Ed25519PrivateKey.from_private_bytes(private)
        return cls(private=private, public=_raw_public(sk.public_key()))


def _raw_public(pk) -> bytes:
    from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

    return pk.public_bytes(Encoding.Raw, PublicFormat.Raw)


def fingerprint(public_key: bytes) -> Digest256:
    return hash(public_key)


def sign(private_key: bytes, msg: bytes) -> bytes:
    return Ed25519PrivateKey.from_private_bytes(private_key).sign(msg)


def verify(public_key: bytes, msg: bytes, sig: bytes) -> bool:
    """Never raises: malformed keys or signatures simply fail."""
    try:
        Ed25519PublicKey.from_public_bytes(bytes(public_key)).verify(bytes(sig), msg)
    except (InvalidSignature, ValueError, TypeError):
        return False
    return True


def hkdf(ikm: bytes, salt: bytes, info: bytes, out_len: int = 32) -> bytes:
    if out_len <= 0 or out_len > 255 * DIGEST_LEN:
        raise ValueError(f"hkdf output length {out_len} out of range")
    return HKDF(algorithm=_HKDF_HASH(), length=out_len, salt=salt, info=info).derive(ikm)


def aead_seal(key: bytes, nonce: bytes, ad: bytes, pt: bytes) -> bytes:
    return AESGCM(key).encrypt(nonce, pt, ad)


def aead_open(key: bytes, nonce: bytes, ad: bytes, ct: bytes) -> bytes:
    try:
        return AESGCM(key).decrypt(nonce, ct, ad)
    except (InvalidTag, ValueError, TypeError) as exc:
        raise AuthFailure("AEAD open failed") from exc


@dataclass(frozen=True)
class KexKeyPair:
    private: bytes = field(repr=False)
    public: bytes

    @classmethod
    def generate(cls, rng: random.Random | None = None) -> "KexKeyPair":
        return cls.from_private(random_bytes(KEX_LEN, rng))

    @classmethod
    def from_private(cls, private: bytes) -> "KexKeyPair":
        sk = X25519PrivateKey.from_private_bytes(private)
        return cls(private=sk.private_bytes_raw(), public=sk.public_key().public_bytes_raw())


def kex_shared(private: bytes, peer_public: bytes) -> bytes:
    try:
        return X25519PrivateKey.from_private_bytes(private).exchange(
            X25519PublicKey.from_public_bytes(peer_public)
        )
    except ValueError as exc:
        raise MalformedEncoding("invalid key share") from exc
