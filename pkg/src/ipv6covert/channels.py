"""Covert message embedding and extraction over four IPv6 header fields.

Every ``embed_*`` function returns a new packet list; the input list and its
packets are never mutated. Only the channel's own field changes on a carrier,
and L4 checksums are deliberately left as they were.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .crypto import SharedSecret, ascii_shift, rc4_apply, sequence_nibble
from .errors import CapacityError, IneligibleCarrierError
from .packet import Ipv6Packet, is_flowlabel_carrier_eligible

logger = logging.getLogger(__name__)


class ChannelKind(enum.Enum):
    NORMAL = "normal"
    HOPLIMIT = "hoplimit"
    ADDRESS = "address"
    LENGTH = "length"
    FLOWLABEL = "flowlabel"

    @classmethod
    def parse(cls, name: str) -> "ChannelKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown channel {name!r}; expected one of "
                             f"{', '.join(k.value for k in cls)}") from None


COVERT_CHANNELS = (ChannelKind.HOPLIMIT, ChannelKind.ADDRESS, ChannelKind.LENGTH, ChannelKind.FLOWLABEL)
# Model class order; Normal first so vote ties resolve towards it.
CLASS_ORDER = (ChannelKind.NORMAL,) + COVERT_CHANNELS


@dataclass(frozen=True)
class HopLimitAlphabet:
    mode: str = "binary"

    def __post_init__(self):
        if self.mode not in ("binary", "ternary"):
            raise ValueError(f"hop-limit alphabet must be binary or ternary, not {self.mode!r}")

    @property
    def symbol_values(self) -> tuple[int, ...]:
        return (64, 128) if self.mode == "binary" else (64, 128, 255)

    @property
    def base(self) -> int:
        return len(self.symbol_values)


BINARY = HopLimitAlphabet("binary")
TERNARY = HopLimitAlphabet("ternary")


def _check_indices(packets: Sequence[Ipv6Packet], indices: Sequence[int], needed: int) -> list[int]:
    idx = list(indices)
    if len(set(idx)) != len(idx):
        raise ValueError("carrier indices must be distinct")
    for i in idx:
        if not 0 <= i < len(packets):
            raise IndexError(f"carrier index {i} out of range for {len(packets)} packets")
    if len(idx) < needed:
        raise CapacityError(f"need {needed} carrier packets, got {len(idx)}")
    return idx[:needed]


def _pad(message: bytes, block: int) -> bytes:
    rem = len(message) % block
    return message + bytes(block - rem) if rem else message


# --- Hop Limit ------------------------------------------------------------

def _ternary_digits(length: int) -> int:
    d, cap, need = 0, 1, 256 ** length
    while cap < need:
        cap *= 3
        d += 1
    return d


def message_to_symbols(message: bytes, alphabet: HopLimitAlphabet = BINARY) -> list[int]:
    """Bits MSB-first per byte, or the whole message as fixed-width base-3 digits."""
    if alphabet.mode == "binary":
        return [(b >> (7 - k)) & 1 for b in message for k in range(8)]
    value = int.from_bytes(message, "big")
    digits = []
    for _ in range(_ternary_digits(len(message))):
        value, r = divmod(value, 3)
        digits.append(r)
    return digits[::-1]


def symbols_to_message(symbols: Sequence[int], length: int,
                       alphabet: HopLimitAlphabet = BINARY) -> bytes:
    if alphabet.mode == "binary":
        need = 8 * length
        if len(symbols) < need:
            raise CapacityError(f"need {need} bits for {length} bytes, got {len(symbols)}")
        out = bytearray()
        for i in range(length):
            b = 0
            for s in symbols[8 * i:8 * i + 8]:
                b = (b << 1) | s
            out.append(b)
        return bytes(out)
    need = _ternary_digits(length)
    if len(symbols) < need:
        raise CapacityError(f"need {need} trits for {length} bytes, got {len(symbols)}")
    value = 0
    for s in symbols[:need]:
        value = value * 3 + s
    return value.to_bytes(length, "big")


def embed_hoplimit(packets: Sequence[Ipv6Packet], carrier_indices: Sequence[int],
                   symbols: Sequence[int], alphabet: HopLimitAlphabet = BINARY) -> list[Ipv6Packet]:
    """Overwrite carrier hop limits with 64/128 (and 255 in ternary mode)."""
    values = alphabet.symbol_values
    for s in symbols:
        if not 0 <= s < len(values):
            raise ValueError(f"symbol {s} not valid for {alphabet.mode} alphabet")
    used = _check_indices(packets, carrier_indices, len(symbols))
    out = list(packets)
    for i, s in zip(used, symbols):
        out[i] = replace(out[i], hop_limit=values[s])
    return out


def decode_hop_limit(value: int, alphabet: HopLimitAlphabet = BINARY,
                     assumed_max_hops: int = 31) -> Optional[int]:
    """Map an observed hop limit back to a symbol, or None when it fits no band.

    The bands keep 64, 128 and 255 apart after up to 31 router decrements.
    """
    if 64 - assumed_max_hops <= value <= 96:
        return 0
    if 97 <= value <= 191:
        return 1
    if value >= 192 and alphabet.mode == "ternary":
        return 2
    return None


def extract_hoplimit(packets: Sequence[Ipv6Packet], alphabet: HopLimitAlphabet = BINARY,
                     assumed_max_hops: int = 31) -> list[Optional[int]]:
    return [decode_hop_limit(p.hop_limit, alphabet, assumed_max_hops) for p in packets]


# --- Flow Label -------------------------------------------------------------

def embed_flowlabel(packets: Sequence[Ipv6Packet], carrier_indices: Sequence[int],
                    message: bytes, secret: SharedSecret) -> list[Ipv6Packet]:
    """Write ``nibble << 16 | ciphertext`` into the flow label of each carrier.

    Each carrier holds two message bytes under one continuous RC4 stream; an
    odd final byte is padded with 0x00. The leading nibble is the sequence
    identifier for the carrier's position.
    """
    if not message:
        raise ValueError("message must not be empty")
    for i in carrier_indices:
        if not is_flowlabel_carrier_eligible(packets[i]):
            raise IneligibleCarrierError(
                f"packet {i} (next header {packets[i].next_header}) cannot carry the FlowLabel "
                "channel; only UDP and ICMPv6 error messages are allowed")
    used = _check_indices(packets, carrier_indices, math.ceil(len(message) / 2))
    cipher = rc4_apply(secret.new_stream(), _pad(message, 2))
    out = list(packets)
    for pos, i in enumerate(used):
        chunk = int.from_bytes(cipher[2 * pos:2 * pos + 2], "big")
        out[i] = replace(out[i], flow_label=(sequence_nibble(secret, pos) << 16) | chunk)
    return out


def extract_flowlabel(packets: Sequence[Ipv6Packet], secret: SharedSecret,
                      message_length: Optional[int] = None) -> bytes:
    """Recover a FlowLabel message from its carriers.

    Carriers may arrive in any order inside each consecutive block of 16;
    they are put back in sequence by the position of their leading nibble.
    Without ``message_length`` the 0x00 pad of an odd message is kept.
    """
    carriers = []
    skipped = 0
    for p in packets:
        pos = secret.position_of(p.flow_label >> 16)
        if pos is None:
            skipped += 1
        else:
            carriers.append((pos, p.flow_label & 0xFFFF))
    if skipped:
        logger.warning("skipped %d packet(s) whose sequence nibble is not in the secret", skipped)

    ordered = []
    for start in range(0, len(carriers), 16):
        ordered.extend(sorted(carriers[start:start + 16], key=lambda c: c[0]))
    cipher = b"".join(chunk.to_bytes(2, "big") for _, chunk in ordered)
    plain = rc4_apply(secret.new_stream(), cipher)
    if message_length is not None:
        if message_length > len(plain):
            raise CapacityError(f"asked for {message_length} bytes, carriers hold {len(plain)}")
        plain = plain[:message_length]
    return plain


# --- Payload Length ----------------------------------------------------------

def embed_length(packets: Sequence[Ipv6Packet], carrier_indices: Sequence[int],
                 message: bytes, secret: SharedSecret) -> list[Ipv6Packet]:
    """Shift then RC4-encrypt two bytes per carrier into the declared payload length."""
    if not message:
        raise ValueError("message must not be empty")
    used = _check_indices(packets, carrier_indices, math.ceil(len(message) / 2))
    masked = ascii_shift(_pad(message, 2), secret.ascii_shift, "forward")
    cipher = rc4_apply(secret.new_stream(), masked)
    out = list(packets)
    for pos, i in enumerate(used):
        out[i] = replace(out[i], payload_length_declared=int.from_bytes(cipher[2 * pos:2 * pos + 2], "big"))
    return out


def extract_length(packets: Sequence[Ipv6Packet], secret: SharedSecret, message_length: int) -> bytes:
    need = math.ceil(message_length / 2)
    if len(packets) < need:
        raise CapacityError(f"need {need} carriers for {message_length} bytes, got {len(packets)}")
    cipher = b"".join(p.payload_length_declared.to_bytes(2, "big") for p in packets[:need])
    masked = rc4_apply(secret.new_stream(), cipher)
    return ascii_shift(masked, secret.ascii_shift, "inverse")[:message_length]


# --- Address (source interface identifier) ----------------------------------

def embed_address(packets: Sequence[Ipv6Packet], carrier_indices: Sequence[int],
                  message: bytes, secret: SharedSecret) -> list[Ipv6Packet]:
    """Replace the low 8 bytes of each carrier's source address with ciphertext.

    The /64 network prefix is left alone so carriers still route.
    """
    if not message:
        raise ValueError("message must not be empty")
    used = _check_indices(packets, carrier_indices, math.ceil(len(message) / 8))
    cipher = rc4_apply(secret.new_stream(), _pad(message, 8))
    out = list(packets)
    for pos, i in enumerate(used):
        src = out[i].src_addr[:8] + cipher[8 * pos:8 * pos + 8]
        out[i] = replace(out[i], src_addr=src)
    return out


def extract_address(packets: Sequence[Ipv6Packet], secret: SharedSecret, message_length: int) -> bytes:
    need = math.ceil(message_length / 8)
    if len(packets) < need:
        raise CapacityError(f"need {need} carriers for {message_length} bytes, got {len(packets)}")
    cipher = b"".join(p.src_addr[8:] for p in packets[:need])
    return rc4_apply(secret.new_stream(), cipher)[:message_length]


def channel_capacity(channel: ChannelKind, packet_count: int,
                     alphabet: HopLimitAlphabet = BINARY) -> int:
    """Payload a channel can move in ``packet_count`` carriers.

    Bytes for FlowLabel, Length and Address; bits for HopLimit.
    """
    if packet_count < 0:
        raise ValueError("packet_count must be non-negative")
    if channel in (ChannelKind.FLOWLABEL, ChannelKind.LENGTH):
        return 2 * packet_count
    if channel is ChannelKind.ADDRESS:
        return 8 * packet_count
    if channel is ChannelKind.HOPLIMIT:
        if alphabet.mode == "binary":
            return packet_count
        # floor(n * log2(3)) computed exactly
        return (3 ** packet_count).bit_length() - 1
    raise ValueError(f"{channel} is not an embedding channel")
