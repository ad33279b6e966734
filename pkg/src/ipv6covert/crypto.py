"""RC4, the ASCII-shift pre-mask, and the shared FlowLabel sequence permutation.

RC4 is cryptographically broken. It is here because the covert channels
being modelled use it, not because it protects anything.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Sequence

from .errors import InvalidKeyError, InvalidSecretError

# Default nibble order for the FlowLabel sequence identifier.
DEFAULT_SEQUENCE = (0xE, 0xA, 0x7, 0x1, 0x2, 0x3, 0x4, 0x5, 0x6, 0x8, 0x9, 0xB, 0xC, 0xD, 0xF, 0x0)
DEFAULT_ASCII_SHIFT = 13
KEY_ENV_VAR = "IPV6COVERT_KEY"


class Rc4State:
    """Mutable RC4 generator state: the S-box plus the i/j indices."""

    __slots__ = ("s_box", "i", "j")

    def __init__(self, s_box: bytearray, i: int = 0, j: int = 0):
        self.s_box = s_box
        self.i = i
        self.j = j

    def keystream(self, n: int) -> bytes:
        s = self.s_box
        i, j = self.i, self.j
        out = bytearray(n)
        for k in range(n):
            i = (i + 1) & 0xFF
            j = (j + s[i]) & 0xFF
            s[i], s[j] = s[j], s[i]
            out[k] = s[(s[i] + s[j]) & 0xFF]
        self.i, self.j = i, j
        return bytes(out)

    def copy(self) -> "Rc4State":
        return Rc4State(bytearray(self.s_box), self.i, self.j)


def rc4_init(key: bytes) -> Rc4State:
    """Run the RC4 key-scheduling algorithm."""
    if not 1 <= len(key) <= 256:
        raise InvalidKeyError(f"RC4 key must be 1-256 bytes, got {len(key)}")
    s = bytearray(range(256))
    j = 0
    klen = len(key)
    for i in range(256):
        j = (j + s[i] + key[i % klen]) & 0xFF
        s[i], s[j] = s[j], s[i]
    return Rc4State(s)


def rc4_apply(state: Rc4State, data: bytes) -> bytes:
    """XOR ``data`` with the next ``len(data)`` keystream bytes, advancing ``state``."""
    if not data:
        return b""
    ks = state.keystream(len(data))
    return (int.from_bytes(data, "big") ^ int.from_bytes(ks, "big")).to_bytes(len(data), "big")


def rc4(key: bytes, data: bytes) -> bytes:
    """One-shot encryption/decryption under a fresh state."""
    return rc4_apply(rc4_init(key), data)


def ascii_shift(data: bytes, offset: int, direction: str = "forward") -> bytes:
    if not 0 <= offset <= 255:
        raise ValueError(f"shift offset must be 0-255, got {offset}")
    if direction == "inverse":
        offset = (-offset) & 0xFF
    elif direction != "forward":
        raise ValueError(f"direction must be 'forward' or 'inverse', not {direction!r}")
    table = bytes((b + offset) & 0xFF for b in range(256))
    return bytes(data).translate(table)


@dataclass(frozen=True)
class SharedSecret:
    """Everything the two covert parties agree on in advance."""

    rc4_key: bytes = field(repr=False)
    sequence_permutation: tuple[int, ...] = DEFAULT_SEQUENCE
    ascii_shift: int = DEFAULT_ASCII_SHIFT
    _positions: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 1 <= len(self.rc4_key) <= 256:
            raise InvalidKeyError(f"RC4 key must be 1-256 bytes, got {len(self.rc4_key)}")
        perm = tuple(int(v) for v in self.sequence_permutation)
        if sorted(perm) != list(range(16)):
            raise InvalidSecretError(f"sequence must be a permutation of 0x0-0xF, got {perm}")
        if not 0 <= self.ascii_shift <= 255:
            raise InvalidSecretError(f"ascii shift must be 0-255, got {self.ascii_shift}")
        object.__setattr__(self, "rc4_key", bytes(self.rc4_key))
        object.__setattr__(self, "sequence_permutation", perm)
        object.__setattr__(self, "_positions", {nib: pos for pos, nib in enumerate(perm)})

    @classmethod
    def from_strings(cls, key_hex: str, sequence: str | None = None,
                     shift: int = DEFAULT_ASCII_SHIFT) -> "SharedSecret":
        """Build a secret from CLI-style text: hex key, 16 hex chars of permutation."""
        try:
            key = bytes.fromhex(key_hex)
        except ValueError as exc:
            raise InvalidKeyError(f"key is not valid hex: {exc}") from None
        perm: Sequence[int] = DEFAULT_SEQUENCE
        if sequence:
            seq = sequence.replace(",", "").replace(" ", "")
            if len(seq) != 16:
                raise InvalidSecretError(f"sequence needs 16 hex characters, got {len(seq)}")
            try:
                perm = tuple(int(c, 16) for c in seq)
            except ValueError:
                raise InvalidSecretError(f"sequence is not hex: {sequence!r}") from None
        return cls(key, tuple(perm), shift)

    @classmethod
    def from_env(cls, sequence: str | None = None, shift: int = DEFAULT_ASCII_SHIFT,
                 env_var: str = KEY_ENV_VAR) -> "SharedSecret":
        key_hex = os.environ.get(env_var)
        if not key_hex:
            raise InvalidKeyError(f"no key given and ${env_var} is not set")
        return cls.from_strings(key_hex, sequence, shift)

    def position_of(self, nibble: int) -> int | None:
        return self._positions.get(nibble)

    def new_stream(self) -> Rc4State:
        return rc4_init(self.rc4_key)


def sequence_nibble(secret: SharedSecret, position: int) -> int:
    """Sequence identifier for carrier ``position``; wraps every 16 carriers."""
    if position < 0:
        raise ValueError("position must be non-negative")
    return secret.sequence_permutation[position % 16]
