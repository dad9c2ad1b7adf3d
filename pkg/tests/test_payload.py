import random

import pytest
from hypothesis import given, strategies as st

from cbpre.payload import KEY_BYTES, TAG_BYTES, PayloadAuthError, new_content_key, open_sealed, seal


@given(st.binary(max_size=300), st.binary(min_size=KEY_BYTES, max_size=KEY_BYTES))
def test_roundtrip(data, key):
    sealed = seal(key, data)
    assert len(sealed) == len(data) + TAG_BYTES
    assert open_sealed(key, sealed) == data


def test_reading_roundtrip():
    key = new_content_key(random.Random(1))
    assert open_sealed(key, seal(key, b"23.5C")) == b"23.5C"


def test_tamper_and_wrong_key():
    key = new_content_key(random.Random(2))
    sealed = bytearray(seal(key, b"23.5C"))
    for i in range(len(sealed)):
        bad = bytearray(sealed)
        bad[i] ^= 0x80
        with pytest.raises(PayloadAuthError):
            open_sealed(key, bytes(bad))
    with pytest.raises(PayloadAuthError):
        open_sealed(new_content_key(random.Random(3)), bytes(sealed))
    with pytest.raises(PayloadAuthError):
        open_sealed(key, b"short")


def test_key_length_enforced():
    with pytest.raises(ValueError):
        seal(b"k" * 16, b"x")


def test_keys_from_os_entropy_differ():
    assert new_content_key() != new_content_key()
