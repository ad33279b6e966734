"""Classic libpcap reader/writer restricted to IPv6 traffic.

Only the microsecond-resolution format is supported (magic 0xA1B2C3D4 in
either byte order). pcapng and nanosecond captures are rejected.
"""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import replace
from typing import Iterable, NamedTuple, Optional

from .errors import PacketParseError, PcapFormatError, TruncatedRecordError
from .packet import (DEFAULT_ETHERNET_HEADER, LINKTYPE_ETHERNET, LINKTYPE_RAW,
                     Ipv6Packet, parse_ipv6)

logger = logging.getLogger(__name__)

MAGIC_USEC = 0xA1B2C3D4
MAGIC_NSEC = 0xA1B23C4D
PCAPNG_MAGIC = 0x0A0D0D0A
DEFAULT_SNAPLEN = 65535

_GLOBAL = "IHHiIII"
_RECORD = "IIII"


class PcapRead(NamedTuple):
    packets: list[Ipv6Packet]
    skipped: int
    link_type: int
    snaplen: int


def read_pcap(path: str | os.PathLike) -> PcapRead:
    """Read every IPv6 packet from a classic pcap file, in capture order.

    Records that are not IPv6 (IPv4 frames, ARP, junk) are skipped and
    counted in ``skipped``.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 24:
        raise PcapFormatError(f"{path}: {len(data)} bytes is too short for a pcap global header")

    magic_le = struct.unpack_from("<I", data)[0]
    if magic_le == MAGIC_USEC:
        endian = "<"
    elif magic_le == int.from_bytes(MAGIC_USEC.to_bytes(4, "little"), "big"):
        endian = ">"
    elif magic_le in (MAGIC_NSEC, int.from_bytes(MAGIC_NSEC.to_bytes(4, "little"), "big")):
        raise PcapFormatError(f"{path}: nanosecond-resolution pcap is not supported")
    elif magic_le == PCAPNG_MAGIC:
        raise PcapFormatError(f"{path}: pcapng is not supported, convert to classic pcap")
    else:
        raise PcapFormatError(f"{path}: bad pcap magic {magic_le:#010x}")

    _, vmaj, vmin, _, _, snaplen, link_type = struct.unpack_from(endian + _GLOBAL, data)
    if vmaj != 2:
        raise PcapFormatError(f"{path}: unsupported pcap version {vmaj}.{vmin}")
    if link_type not in (LINKTYPE_ETHERNET, LINKTYPE_RAW):
        raise PcapFormatError(f"{path}: unsupported link type {link_type}")

    rec = struct.Struct(endian + _RECORD)
    packets: list[Ipv6Packet] = []
    skipped = 0
    off = 24
    index = 0
    n = len(data)
    while off < n:
        if off + 16 > n:
            raise TruncatedRecordError(index, "record header cut short")
        ts_sec, ts_usec, incl, orig = rec.unpack_from(data, off)
        off += 16
        if off + incl > n:
            raise TruncatedRecordError(index, f"need {incl} bytes, {n - off} left")
        frame = data[off:off + incl]
        off += incl
        try:
            pkt = parse_ipv6(frame, link_type, ts_sec=ts_sec, ts_usec=ts_usec,
                             wire_length=None if orig == incl else orig)
        except PacketParseError:
            skipped += 1
        else:
            packets.append(pkt)
        index += 1
    if skipped:
        logger.info("%s: skipped %d non-IPv6 record(s)", path, skipped)
    return PcapRead(packets, skipped, link_type, snaplen)


def _frame_for(pkt: Ipv6Packet, link_type: int) -> bytes:
    if link_type == pkt.link_type:
        return pkt.to_bytes()
    if link_type == LINKTYPE_ETHERNET:
        return DEFAULT_ETHERNET_HEADER + pkt.ip_bytes()
    return pkt.ip_bytes()


def write_pcap(packets: Iterable[Ipv6Packet], path: str | os.PathLike,
               link_type: Optional[int] = None, snaplen: int = DEFAULT_SNAPLEN) -> int:
    """Write packets as a little-endian classic pcap; returns the record count.

    ``link_type`` defaults to the first packet's own link type (raw IP for an
    empty list). Packets whose link type differs are re-encapsulated.
    """
    packets = list(packets)
    if link_type is None:
        link_type = packets[0].link_type if packets else LINKTYPE_RAW
    if link_type not in (LINKTYPE_ETHERNET, LINKTYPE_RAW):
        raise ValueError(f"unsupported link type {link_type}")

    rec = struct.Struct("<" + _RECORD)
    chunks = [struct.pack("<" + _GLOBAL, MAGIC_USEC, 2, 4, 0, 0, snaplen, link_type)]
    for pkt in packets:
        frame = _frame_for(pkt, link_type)
        orig = len(frame)
        if pkt.wire_length is not None and pkt.link_type == link_type:
            orig = pkt.wire_length
        chunks.append(rec.pack(pkt.ts_sec, pkt.ts_usec, len(frame), orig))
        chunks.append(frame)
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))
    return len(packets)


def as_link_type(packets: Iterable[Ipv6Packet], link_type: int) -> list[Ipv6Packet]:
    """Relabel packets for another encapsulation (what ``write_pcap`` does on disk)."""
    out = []
    for p in packets:
        if p.link_type == link_type:
            out.append(p)
        elif link_type == LINKTYPE_ETHERNET:
            out.append(replace(p, link_type=link_type, link_header=DEFAULT_ETHERNET_HEADER, wire_length=None))
        else:
            out.append(replace(p, link_type=link_type, link_header=b"", wire_length=None))
    return out
