"""IPv6 packet model plus the handful of upper-layer helpers the toolkit needs.

Only the fixed 40-byte IPv6 header is decoded. Everything after it is kept
as opaque ``payload`` bytes; TCP/UDP/ICMPv6 fields are read lazily from the
payload when flow tracking or feature extraction asks for them.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

from .errors import NotIPv6Error, TruncatedPacketError

LINKTYPE_ETHERNET = 1
LINKTYPE_RAW = 101
ETHERTYPE_IPV6 = 0x86DD

IPV6_HEADER_LEN = 40
ETHERNET_HEADER_LEN = 14

PROTO_TCP = 6
PROTO_UDP = 17
PROTO_ICMPV6 = 58

_HDR = struct.Struct("!IHBB16s16s")

# Zero MACs; used when a raw-IP packet has to be written into an Ethernet capture.
DEFAULT_ETHERNET_HEADER = bytes(12) + ETHERTYPE_IPV6.to_bytes(2, "big")

TCP_FIN = 0x01
TCP_SYN = 0x02
TCP_RST = 0x04
TCP_PSH = 0x08
TCP_ACK = 0x10


@dataclass(frozen=True)
class Ipv6Packet:
    """One captured IPv6 packet.

    ``payload`` holds the bytes captured after the fixed header and may be
    shorter than ``payload_length_declared`` (snap length) or disagree with it
    entirely when the length field has been tampered with.
    ``link_header`` keeps the original link-layer bytes so a packet read from
    an Ethernet capture re-serializes byte for byte. ``wire_length`` is the
    pcap ``orig_len``; ``None`` means "same as the captured length".
    """

    traffic_class: int
    flow_label: int
    payload_length_declared: int
    next_header: int
    hop_limit: int
    src_addr: bytes
    dst_addr: bytes
    payload: bytes = b""
    ts_sec: int = 0
    ts_usec: int = 0
    link_type: int = LINKTYPE_RAW
    link_header: bytes = b""
    wire_length: Optional[int] = None
    version: int = 6

    def __post_init__(self):
        if self.version != 6:
            raise NotIPv6Error(f"version {self.version} is not 6")
        if not 0 <= self.traffic_class < 256:
            raise ValueError(f"traffic_class out of range: {self.traffic_class}")
        if not 0 <= self.flow_label < 1 << 20:
            raise ValueError(f"flow_label out of range: {self.flow_label:#x}")
        if not 0 <= self.payload_length_declared < 1 << 16:
            raise ValueError(f"payload length out of range: {self.payload_length_declared}")
        if not 0 <= self.next_header < 256 or not 0 <= self.hop_limit < 256:
            raise ValueError("next_header and hop_limit must be 8-bit values")
        if len(self.src_addr) != 16 or len(self.dst_addr) != 16:
            raise ValueError("IPv6 addresses must be 16 bytes")
        if not 0 <= self.ts_usec < 1_000_000:
            raise ValueError(f"ts_usec out of range: {self.ts_usec}")
        if self.link_type not in (LINKTYPE_ETHERNET, LINKTYPE_RAW):
            raise ValueError(f"unsupported link type {self.link_type}")
        if self.link_type == LINKTYPE_ETHERNET and not self.link_header:
            object.__setattr__(self, "link_header", DEFAULT_ETHERNET_HEADER)

    @property
    def dscp(self) -> int:
        return self.traffic_class >> 2

    @property
    def ecn(self) -> int:
        return self.traffic_class & 0x3

    @property
    def timestamp_us(self) -> int:
        return self.ts_sec * 1_000_000 + self.ts_usec

    def header_bytes(self) -> bytes:
        first = (6 << 28) | (self.traffic_class << 20) | self.flow_label
        return _HDR.pack(first, self.payload_length_declared, self.next_header,
                         self.hop_limit, self.src_addr, self.dst_addr)

    def ip_bytes(self) -> bytes:
        """The IPv6 packet as it appears on the wire (no link layer)."""
        return self.header_bytes() + self.payload

    def to_bytes(self) -> bytes:
        """Link-layer frame for this packet's own ``link_type``."""
        if self.link_type == LINKTYPE_ETHERNET:
            return self.link_header + self.ip_bytes()
        return self.ip_bytes()

    def with_timestamp(self, timestamp_us: int) -> "Ipv6Packet":
        sec, usec = divmod(int(timestamp_us), 1_000_000)
        return replace(self, ts_sec=sec, ts_usec=usec)


def parse_ipv6(data: bytes, link_type: int = LINKTYPE_RAW, *, ts_sec: int = 0,
               ts_usec: int = 0, wire_length: Optional[int] = None) -> Ipv6Packet:
    """Decode a link-layer frame holding an IPv6 packet.

    Raises:
        NotIPv6Error: the version nibble is not 6, or an Ethernet frame does
            not carry ethertype 0x86DD.
        TruncatedPacketError: fewer than 40 header bytes after the link layer.
    """
    link_header = b""
    if link_type == LINKTYPE_ETHERNET:
        if len(data) < ETHERNET_HEADER_LEN:
            raise TruncatedPacketError("frame shorter than an Ethernet header")
        ethertype = int.from_bytes(data[12:14], "big")
        if ethertype != ETHERTYPE_IPV6:
            raise NotIPv6Error(f"ethertype {ethertype:#06x} is not IPv6")
        link_header = bytes(data[:ETHERNET_HEADER_LEN])
        data = data[ETHERNET_HEADER_LEN:]
    elif link_type != LINKTYPE_RAW:
        raise ValueError(f"unsupported link type {link_type}")

    if len(data) >= 1 and data[0] >> 4 != 6:
        raise NotIPv6Error(f"version nibble {data[0] >> 4} is not 6")
    if len(data) < IPV6_HEADER_LEN:
        raise TruncatedPacketError(f"{len(data)} bytes, need {IPV6_HEADER_LEN} for an IPv6 header")

    first, plen, nh, hlim, src, dst = _HDR.unpack_from(data)
    return Ipv6Packet(
        traffic_class=(first >> 20) & 0xFF,
        flow_label=first & 0xFFFFF,
        payload_length_declared=plen,
        next_header=nh,
        hop_limit=hlim,
        src_addr=src,
        dst_addr=dst,
        payload=bytes(data[IPV6_HEADER_LEN:]),
        ts_sec=ts_sec,
        ts_usec=ts_usec,
        link_type=link_type,
        link_header=link_header,
        wire_length=wire_length,
    )


# --- upper-layer helpers -------------------------------------------------

class TcpSegment(NamedTuple):
    src_port: int
    dst_port: int
    seq: int
    ack: int
    header_len: int
    flags: int
    data_len: int

    @property
    def seq_space(self) -> int:
        """Sequence numbers consumed: data bytes plus one each for SYN and FIN."""
        return self.data_len + bool(self.flags & TCP_SYN) + bool(self.flags & TCP_FIN)


def ports(pkt: Ipv6Packet) -> Optional[tuple[int, int]]:
    if pkt.next_header in (PROTO_TCP, PROTO_UDP) and len(pkt.payload) >= 4:
        return struct.unpack_from("!HH", pkt.payload)
    return None


def tcp_segment(pkt: Ipv6Packet) -> Optional[TcpSegment]:
    """TCP header fields, or None for non-TCP or too-short payloads.

    The data length counts captured bytes, not the declared IPv6 length,
    so a forged length field cannot skew sequence tracking.
    """
    p = pkt.payload
    if pkt.next_header != PROTO_TCP or len(p) < 14:
        return None
    sport, dport, seq, ack, off, flags = struct.unpack_from("!HHIIBB", p)
    hlen = (off >> 4) * 4
    return TcpSegment(sport, dport, seq, ack, hlen, flags, max(0, len(p) - hlen))


def icmpv6_type(pkt: Ipv6Packet) -> Optional[int]:
    if pkt.next_header == PROTO_ICMPV6 and pkt.payload:
        return pkt.payload[0]
    return None


def is_icmpv6_error(pkt: Ipv6Packet) -> bool:
    t = icmpv6_type(pkt)
    return t is not None and t < 128


def is_flowlabel_carrier_eligible(pkt: Ipv6Packet) -> bool:
    """UDP datagrams and ICMPv6 error messages; never TCP."""
    return pkt.next_header == PROTO_UDP or is_icmpv6_error(pkt)


def internet_checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    total = sum(struct.unpack(f"!{len(data) // 2}H", data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def upper_layer_checksum(src: bytes, dst: bytes, next_header: int, segment: bytes) -> int:
    """Checksum over the IPv6 pseudo-header and ``segment`` (checksum field zeroed by caller)."""
    pseudo = src + dst + struct.pack("!IxxxB", len(segment), next_header)
    return internet_checksum(pseudo + segment)
