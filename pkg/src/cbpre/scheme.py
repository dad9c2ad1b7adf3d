"""Pairing-free certificate-based proxy re-encryption.

The scheme works over any :class:`~cbpre.group.Group`. Keys are issued with
ECQV implicit certificates: a user's public key is never transmitted, it is
recomputed from the certificate point, the identity and the CA's public
point. Every ciphertext is bound to an 8-byte metadata tag (sender id and
timestamp) which seeds the per-record randomness, so re-encryption keys are
per record as well.

Messages are fixed 32-byte blocks; longer payloads go through
:mod:`cbpre.payload`.

Typical flow::

    params, msk = setup(SECP256K1)
    alice = certified_user_keygen(params, msk, 1)
    bob = certified_user_keygen(params, msk, 2)
    c = encrypt(params, m, alice, timestamp)
    rk = rekey(params, alice, bob.id, bob.cert, c.meta)
    c2 = reencrypt(params, c, rk, bob.id)
    assert decrypt2(params, c2, bob, alice.public) == m
"""

from __future__ import annotations

import enum
import hashlib
import random
from dataclasses import dataclass, field
from typing import Any, Optional, Tuple

from .group import DecodeError, Group, group_from_bytes

__all__ = [
    "BLOCK_BYTES",
    "META_BYTES",
    "ID_BYTES",
    "SchemeError",
    "InvalidRequest",
    "ValidationFailed",
    "AuthError",
    "HashSuite",
    "Metadata",
    "PublicParams",
    "MasterSecret",
    "CertRequest",
    "CertResponse",
    "KeyPair",
    "Ciphertext",
    "ReEncCiphertext",
    "encode_identity",
    "tagged_digest",
    "h1",
    "h2",
    "h3",
    "h4",
    "setup",
    "cert_request",
    "ca_issue",
    "finalize_key",
    "certified_user_keygen",
    "derive_public_key",
    "encode_certificate",
    "decode_certificate",
    "encrypt",
    "decrypt1",
    "rekey",
    "reencrypt",
    "decrypt2",
    "xor_block",
]

BLOCK_BYTES = 32
META_BYTES = 8
ID_BYTES = 4

CIPHERTEXT_VERSION = 0x01
REENC_VERSION = 0x02


class SchemeError(Exception):
    pass


class InvalidRequest(SchemeError):
    """A certificate request the CA refuses to process."""


class ValidationFailed(SchemeError):
    """The ECQV equation does not hold for an issued certificate."""


class AuthError(SchemeError):
    """A ciphertext failed its integrity checks."""


class HashSuite(enum.IntEnum):
    # SHA-256 with one domain-separation byte per hash function
    SHA256 = 0x01


_H1, _H2, _H3, _H4 = 0x01, 0x02, 0x03, 0x04


def encode_identity(identity: int) -> bytes:
    if not 0 <= identity < 2**32:
        raise ValueError(f"identity must fit in 32 bits: {identity}")
    return identity.to_bytes(ID_BYTES, "big")


def xor_block(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        raise ValueError("xor operands differ in length")
    return bytes(x ^ y for x, y in zip(a, b))


@dataclass(frozen=True, order=True)
class Metadata:
    """``sensor_id || timestamp``, both 4-byte big-endian."""

    sensor_id: int
    timestamp: int

    def __post_init__(self) -> None:
        encode_identity(self.sensor_id)
        if not 0 <= self.timestamp < 2**32:
            raise ValueError(f"timestamp must fit in 32 bits: {self.timestamp}")

    def to_bytes(self) -> bytes:
        return encode_identity(self.sensor_id) + self.timestamp.to_bytes(4, "big")

    @classmethod
    def from_bytes(cls, data: bytes) -> "Metadata":
        if len(data) != META_BYTES:
            raise DecodeError(f"metadata must be {META_BYTES} bytes")
        return cls(int.from_bytes(data[:4], "big"), int.from_bytes(data[4:], "big"))


# ---------------------------------------------------------------------------
# Hash suite
# ---------------------------------------------------------------------------


def tagged_digest(tag: int, data: bytes) -> bytes:
    return hashlib.sha256(bytes([tag]) + data).digest()


def _to_scalar(group: Group, digest: bytes) -> int:
    v = int.from_bytes(digest, "big") % group.order
    return v or 1


def h1(group: Group, point, identity: int) -> int:
    """Certificate hash, ``point || id`` to a nonzero scalar."""
    return _to_scalar(group, tagged_digest(_H1, group.encode_point(point) + encode_identity(identity)))


def h2(group: Group, scalar: int, meta: Metadata) -> int:
    """Per-record nonce derivation, ``scalar || meta`` to a nonzero scalar."""
    return _to_scalar(group, tagged_digest(_H2, group.encode_scalar(scalar) + meta.to_bytes()))


def h3(group: Group, meta: Metadata, point) -> bytes:
    """XOR pad, ``meta || point`` to a raw 32-byte digest."""
    return tagged_digest(_H3, meta.to_bytes() + group.encode_point(point))


def h4(group: Group, block: bytes, meta: Metadata) -> int:
    """Ciphertext binding hash, ``block || meta`` to a nonzero scalar."""
    return _to_scalar(group, tagged_digest(_H4, bytes(block) + meta.to_bytes()))


# ---------------------------------------------------------------------------
# Key material
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PublicParams:
    group: Group
    p_alpha: Any
    hash_suite: HashSuite = HashSuite.SHA256

    @property
    def generator(self):
        return self.group.generator

    def to_bytes(self) -> bytes:
        return self.group.to_bytes() + bytes([self.hash_suite]) + self.group.encode_point(self.p_alpha)

    @classmethod
    def from_bytes(cls, data: bytes, *, insecure: bool = False) -> "PublicParams":
        # group params are 1 byte (production) or 5 bytes (mock)
        glen = 1 if data[:1] == b"\x01" else 5
        group = group_from_bytes(data[:glen], insecure=insecure)
        rest = data[glen:]
        if len(rest) != 1 + group.point_bytes:
            raise DecodeError("bad public parameter length")
        try:
            suite = HashSuite(rest[0])
        except ValueError:
            raise DecodeError(f"unknown hash suite 0x{rest[0]:02x}") from None
        p_alpha = group.decode_point(rest[1:], allow_identity=False)
        return cls(group, p_alpha, suite)


@dataclass(frozen=True)
class MasterSecret:
    alpha: int = field(repr=False)


@dataclass(frozen=True)
class CertRequest:
    identity: int
    r_u: Any  # the requester's public commitment R_U


@dataclass(frozen=True)
class CertResponse:
    r_a: int
    cert: Any


@dataclass(frozen=True)
class KeyPair:
    d: int = field(repr=False)
    public: Any
    cert: Any
    id: int


def encode_certificate(group: Group, cert) -> bytes:
    return group.encode_point(cert)


def decode_certificate(group: Group, data: bytes):
    return group.decode_point(data, allow_identity=False)


def setup(group: Group, rng: Optional[random.Random] = None, *, alpha: Optional[int] = None
          ) -> Tuple[PublicParams, MasterSecret]:
    """CA setup. ``alpha`` overrides the random master secret."""
    if alpha is None:
        alpha = group.random_scalar(rng)
    if not 1 <= alpha < group.order:
        raise ValueError("master secret must be in [1, q)")
    return PublicParams(group, group.base_mul(alpha)), MasterSecret(alpha)


def cert_request(params: PublicParams, identity: int, rng: Optional[random.Random] = None, *,
                 secret: Optional[int] = None) -> Tuple[int, CertRequest]:
    """User side of ECQV step one: returns ``(r_U, request)``; keep ``r_U``."""
    group = params.group
    encode_identity(identity)
    r_u = group.random_scalar(rng) if secret is None else secret
    if not 1 <= r_u < group.order:
        raise ValueError("request secret must be in [1, q)")
    return r_u, CertRequest(identity, group.base_mul(r_u))


def ca_issue(params: PublicParams, msk: MasterSecret, req: CertRequest,
             rng: Optional[random.Random] = None, *, r_t: Optional[int] = None) -> CertResponse:
    """CA side of ECQV. The identity check is the caller's responsibility."""
    group = params.group
    if group.is_identity(req.r_u) or not group.is_valid_point(req.r_u):
        raise InvalidRequest("request point must be a valid non-identity element")
    if r_t is None:
        while True:
            r_t = group.random_scalar(rng)
            cert = group.point_add(req.r_u, group.base_mul(r_t))
            if not group.is_identity(cert):
                break
    else:
        cert = group.point_add(req.r_u, group.base_mul(r_t))
    r_a = (h1(group, cert, req.identity) * r_t + msk.alpha) % group.order
    return CertResponse(r_a, cert)


def derive_public_key(params: PublicParams, cert, identity: int):
    """Public key implied by a certificate: ``H1(cert || id) * cert + P_alpha``."""
    group = params.group
    return group.point_add(group.point_mul(h1(group, cert, identity), cert), params.p_alpha)


def finalize_key(params: PublicParams, r_u: int, resp: CertResponse, identity: int) -> KeyPair:
    group = params.group
    d = (h1(group, resp.cert, identity) * r_u + resp.r_a) % group.order
    public = group.base_mul(d)
    if public != derive_public_key(params, resp.cert, identity):
        raise ValidationFailed(f"certificate for id {identity:#010x} does not validate")
    return KeyPair(d, public, resp.cert, identity)


def certified_user_keygen(params: PublicParams, msk: MasterSecret, identity: int,
                          rng: Optional[random.Random] = None) -> KeyPair:
    """All three ECQV steps in one call, for when user and CA are co-located."""
    r_u, req = cert_request(params, identity, rng)
    return finalize_key(params, r_u, ca_issue(params, msk, req, rng), identity)


# ---------------------------------------------------------------------------
# Ciphertexts
# ---------------------------------------------------------------------------


def _check_block(block: bytes, what: str) -> bytes:
    block = bytes(block)
    if len(block) != BLOCK_BYTES:
        raise ValueError(f"{what} must be {BLOCK_BYTES} bytes, got {len(block)}")
    return block


@dataclass(frozen=True)
class Ciphertext:
    c_a: bytes
    meta: Metadata
    h_a: int
    s_a: int

    def to_bytes(self, group: Group) -> bytes:
        return (bytes([CIPHERTEXT_VERSION]) + self.c_a + self.meta.to_bytes()
                + group.encode_scalar(self.h_a) + group.encode_scalar(self.s_a))

    @classmethod
    def from_bytes(cls, group: Group, data: bytes) -> "Ciphertext":
        n = group.scalar_bytes
        if len(data) != 1 + BLOCK_BYTES + META_BYTES + 2 * n:
            raise DecodeError("bad ciphertext length")
        if data[0] != CIPHERTEXT_VERSION:
            raise DecodeError(f"bad ciphertext version 0x{data[0]:02x}")
        off = 1 + BLOCK_BYTES
        return cls(
            c_a=bytes(data[1:off]),
            meta=Metadata.from_bytes(data[off:off + META_BYTES]),
            h_a=group.decode_scalar(data[off + META_BYTES:off + META_BYTES + n]),
            s_a=group.decode_scalar(data[off + META_BYTES + n:]),
        )


@dataclass(frozen=True)
class ReEncCiphertext:
    c_b: bytes
    c_a: bytes
    meta: Metadata
    id_b: int
    h_a: int
    s_a: int

    def to_bytes(self, group: Group) -> bytes:
        return (bytes([REENC_VERSION]) + self.c_b + self.c_a + self.meta.to_bytes()
                + encode_identity(self.id_b) + group.encode_scalar(self.h_a)
                + group.encode_scalar(self.s_a))

    @classmethod
    def from_bytes(cls, group: Group, data: bytes) -> "ReEncCiphertext":
        n = group.scalar_bytes
        if len(data) != 1 + 2 * BLOCK_BYTES + META_BYTES + ID_BYTES + 2 * n:
            raise DecodeError("bad re-encrypted ciphertext length")
        if data[0] != REENC_VERSION:
            raise DecodeError(f"bad re-encrypted ciphertext version 0x{data[0]:02x}")
        off = 1 + 2 * BLOCK_BYTES
        tail = off + META_BYTES + ID_BYTES
        return cls(
            c_b=bytes(data[1:1 + BLOCK_BYTES]),
            c_a=bytes(data[1 + BLOCK_BYTES:off]),
            meta=Metadata.from_bytes(data[off:off + META_BYTES]),
            id_b=int.from_bytes(data[off + META_BYTES:tail], "big"),
            h_a=group.decode_scalar(data[tail:tail + n]),
            s_a=group.decode_scalar(data[tail + n:]),
        )


def encrypt(params: PublicParams, message: bytes, kp: KeyPair, timestamp: int) -> Ciphertext:
    """Encrypt one block under the sender's own key.

    Deterministic in ``(kp, message, timestamp)``; callers must never reuse a
    timestamp for the same key, since that reuses the pad.
    """
    group = params.group
    message = _check_block(message, "message")
    meta = Metadata(kp.id, timestamp)
    r = h2(group, kp.d, meta)
    c_a = xor_block(message, h3(group, meta, group.point_mul(r, kp.public)))
    h_a = h4(group, c_a, meta)
    s_a = (r - h_a * kp.d) % group.order
    return Ciphertext(c_a, meta, h_a, s_a)


def decrypt1(params: PublicParams, c: Ciphertext, kp: KeyPair) -> bytes:
    """Owner-side decryption with both integrity checks."""
    group = params.group
    if c.meta.sensor_id != kp.id:
        raise AuthError("ciphertext metadata names a different sender")
    r = h2(group, kp.d, c.meta)
    message = xor_block(c.c_a, h3(group, c.meta, group.point_mul(r, kp.public)))
    h_a = h4(group, c.c_a, c.meta)
    if h_a != c.h_a or c.s_a != (r - h_a * kp.d) % group.order:
        raise AuthError("ciphertext failed authentication")
    return message


def rekey(params: PublicParams, kp_a: KeyPair, id_b: int, cert_b, meta: Metadata) -> bytes:
    """Re-encryption key from ``kp_a`` to the holder of ``cert_b`` for one record."""
    group = params.group
    if meta.sensor_id != kp_a.id:
        raise ValueError("metadata does not belong to the delegator")
    r = h2(group, kp_a.d, meta)
    p_b = derive_public_key(params, cert_b, id_b)
    return xor_block(h3(group, meta, group.point_mul(r, kp_a.public)),
                     h3(group, meta, group.point_mul(r, p_b)))


def reencrypt(params: PublicParams, c: Ciphertext, rk: bytes, id_b: int) -> ReEncCiphertext:
    rk = _check_block(rk, "re-encryption key")
    return ReEncCiphertext(xor_block(rk, c.c_a), c.c_a, c.meta, id_b, c.h_a, c.s_a)


def decrypt2(params: PublicParams, c2: ReEncCiphertext, kp_b: KeyPair, p_a) -> bytes:
    """Delegate-side decryption; ``p_a`` is the delegator's public key.

    Only ``h_A`` is checked, against ``C_A`` and the metadata. Nothing binds
    ``C_B`` or ``s_A``, so a proxy that corrupts either produces a wrong
    message without an error.
    """
    group = params.group
    if c2.id_b != kp_b.id:
        raise AuthError("re-encrypted ciphertext is addressed to a different delegate")
    if h4(group, c2.c_a, c2.meta) != c2.h_a:
        raise AuthError("re-encrypted ciphertext failed authentication")
    big_r = group.point_add(group.base_mul(c2.s_a), group.point_mul(c2.h_a, p_a))
    return xor_block(c2.c_b, h3(group, c2.meta, group.point_mul(kp_b.d, big_r)))
