"""Bulk payload encryption under a 32-byte content key.

The content key is what travels through the re-encryption scheme as the
message block; the payload itself is XORed with a SHAKE-256 keystream and
carries a truncated HMAC-SHA256 tag. Every key is used for exactly one
payload, so no nonce is needed.
"""

from __future__ import annotations

import hashlib
import hmac
import random
import secrets
from typing import Optional

TAG_BYTES = 16
KEY_BYTES = 32


class PayloadAuthError(Exception):
    """The payload tag does not verify under the given key."""


def new_content_key(rng: Optional[random.Random] = None) -> bytes:
    if rng is None:
        return secrets.token_bytes(KEY_BYTES)
    return rng.randbytes(KEY_BYTES)


def _subkeys(key: bytes) -> tuple[bytes, bytes]:
    if len(key) != KEY_BYTES:
        raise ValueError(f"content key must be {KEY_BYTES} bytes")
    return (hashlib.sha256(b"\x10" + key).digest(), hashlib.sha256(b"\x11" + key).digest())


def seal(key: bytes, plaintext: bytes) -> bytes:
    enc_key, mac_key = _subkeys(key)
    stream = hashlib.shake_256(enc_key).digest(len(plaintext))
    body = bytes(a ^ b for a, b in zip(plaintext, stream))
    return body + hmac.digest(mac_key, body, "sha256")[:TAG_BYTES]


def open_sealed(key: bytes, sealed: bytes) -> bytes:
    if len(sealed) < TAG_BYTES:
        raise PayloadAuthError("sealed payload shorter than its tag")
    enc_key, mac_key = _subkeys(key)
    body, tag = sealed[:-TAG_BYTES], sealed[-TAG_BYTES:]
    if not hmac.compare_digest(tag, hmac.digest(mac_key, body, "sha256")[:TAG_BYTES]):
        raise PayloadAuthError("payload tag mismatch")
    stream = hashlib.shake_256(enc_key).digest(len(body))
    return bytes(a ^ b for a, b in zip(body, stream))
