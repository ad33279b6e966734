import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ipv6covert.crypto import (DEFAULT_SEQUENCE, KEY_ENV_VAR, SharedSecret, ascii_shift, rc4,
                               rc4_apply, rc4_init, sequence_nibble)
from ipv6covert.errors import InvalidKeyError, InvalidSecretError


def oracle_rc4(key: bytes, data: bytes) -> bytes:
    """Textbook KSA/PRGA, written separately from the package code."""
    S = list(range(256))
    j = 0
    for i in range(256):
        j = (j + S[i] + key[i % len(key)]) % 256
        S[i], S[j] = S[j], S[i]
    i = j = 0
    out = []
    for byte in data:
        i = (i + 1) % 256
        j = (j + S[i]) % 256
        S[i], S[j] = S[j], S[i]
        out.append(byte ^ S[(S[i] + S[j]) % 256])
    return bytes(out)


def library_rc4(key: bytes, data: bytes) -> bytes:
    try:
        from cryptography.hazmat.decrepit.ciphers.algorithms import ARC4
    except ImportError:
        from cryptography.hazmat.primitives.ciphers.algorithms import ARC4
    from cryptography.hazmat.primitives.ciphers import Cipher
    enc = Cipher(ARC4(key), mode=None).encryptor()
    return enc.update(data) + enc.finalize()


def test_published_keystream_vector():
    ks = rc4(bytes.fromhex("0102030405"), bytes(16))
    assert ks.hex() == "b2396305f03dc027ccc3524a0a1118a8"


def test_published_key_plaintext_vector():
    assert rc4(b"Key", b"Plaintext").hex() == "bbf316e8d940af0ad3"
    assert rc4(b"Wiki", b"pedia").hex() == "1021bf0420"


@settings(max_examples=200)
@given(st.binary(min_size=1, max_size=256), st.binary(max_size=300))
def test_matches_textbook_oracle(key, data):
    assert rc4(key, data) == oracle_rc4(key, data)


# the library only accepts these key sizes
LIBRARY_KEY_BYTES = [5, 7, 8, 10, 16, 20, 24, 32]


@settings(max_examples=50)
@given(st.sampled_from(LIBRARY_KEY_BYTES).flatmap(lambda n: st.binary(min_size=n, max_size=n)),
       st.binary(max_size=300))
def test_matches_library_oracle(key, data):
    pytest.importorskip("cryptography")
    assert rc4(key, data) == library_rc4(key, data)


def test_stream_continues_across_calls():
    key = b"continuity"
    state = rc4_init(key)
    a = rc4_apply(state, b"first part ")
    b = rc4_apply(state, b"second part")
    assert a + b == rc4(key, b"first part second part")


@settings(max_examples=100)
@given(st.binary(min_size=1, max_size=32), st.binary(max_size=200))
def test_rc4_is_an_involution(key, data):
    assert rc4(key, rc4(key, data)) == data


@pytest.mark.parametrize("key", [b"", bytes(257)])
def test_bad_key_length(key):
    with pytest.raises(InvalidKeyError):
        rc4_init(key)


@given(st.binary(max_size=100), st.integers(0, 255))
def test_ascii_shift_inverts(data, offset):
    assert ascii_shift(ascii_shift(data, offset), offset, "inverse") == data


def test_ascii_shift_wraps():
    assert ascii_shift(b"\xf8a", 13) == bytes([(0xF8 + 13) % 256, ord("a") + 13])


def test_default_sequence_is_a_permutation():
    assert sorted(DEFAULT_SEQUENCE) == list(range(16))
    assert DEFAULT_SEQUENCE[:3] == (0xE, 0xA, 0x7)


def test_sequence_nibble_wraps_every_16():
    s = SharedSecret(b"k")
    assert [sequence_nibble(s, p) for p in (0, 16, 33)] == [0xE, 0xE, 0xA]
    assert s.position_of(0xA) == 1


def test_secret_validation():
    with pytest.raises(InvalidSecretError):
        SharedSecret(b"k", (0,) * 16)
    with pytest.raises(InvalidSecretError):
        SharedSecret.from_strings("00", "0123")
    with pytest.raises(InvalidKeyError):
        SharedSecret.from_strings("zz")


def test_secret_from_env_and_key_not_in_repr(monkeypatch):
    monkeypatch.setenv(KEY_ENV_VAR, "c0ffee99")
    s = SharedSecret.from_env("0123456789abcdef", 5)
    assert s.rc4_key == bytes.fromhex("c0ffee99")
    assert s.sequence_permutation == tuple(range(16))
    assert "c0ffee" not in repr(s).lower() and "\\xc0" not in repr(s)
    monkeypatch.delenv(KEY_ENV_VAR)
    with pytest.raises(InvalidKeyError):
        SharedSecret.from_env()
