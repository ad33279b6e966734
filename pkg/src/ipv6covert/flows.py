"""Direction-sensitive flow table over a list of IPv6 packets."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional

from .packet import Ipv6Packet, ports, tcp_segment

SEQ_MOD = 1 << 32


class FlowKey(NamedTuple):
    src_addr: bytes
    dst_addr: bytes
    next_header: int
    src_port: Optional[int] = None
    dst_port: Optional[int] = None


def flow_key(pkt: Ipv6Packet) -> FlowKey:
    pp = ports(pkt)
    if pp is None:
        return FlowKey(pkt.src_addr, pkt.dst_addr, pkt.next_header)
    return FlowKey(pkt.src_addr, pkt.dst_addr, pkt.next_header, pp[0], pp[1])


def seq_after(a: int, b: int) -> bool:
    """True if sequence number ``a`` is ahead of ``b`` (RFC 1982 serial arithmetic)."""
    return 0 < (a - b) % SEQ_MOD < (1 << 31)


@dataclass
class FlowRecord:
    key: FlowKey
    packet_indices: list[int] = field(default_factory=list)
    last_tcp_seq: Optional[int] = None
    distinct_flow_labels: set[int] = field(default_factory=set)
    hop_limit_mode: int = 0

    def __len__(self) -> int:
        return len(self.packet_indices)


def advance_seq(running: Optional[int], pkt: Ipv6Packet) -> Optional[int]:
    """Fold one packet into a flow's running next-expected TCP sequence number."""
    seg = tcp_segment(pkt)
    if seg is None:
        return running
    end = (seg.seq + seg.seq_space) % SEQ_MOD
    if running is None or seq_after(end, running):
        return end
    return running


def mode_value(values: Iterable[int]) -> int:
    """Most common value; ties go to the smallest."""
    counts = Counter(values)
    if not counts:
        return 0
    best = max(counts.values())
    return min(v for v, c in counts.items() if c == best)


def build_flow_table(packets: list[Ipv6Packet]) -> dict[FlowKey, FlowRecord]:
    """Group packets into flows keyed by (src, dst, next header, ports).

    Flows appear in the returned dict in order of their first packet.
    """
    table: dict[FlowKey, FlowRecord] = {}
    for i, pkt in enumerate(packets):
        key = flow_key(pkt)
        rec = table.get(key)
        if rec is None:
            rec = table[key] = FlowRecord(key)
        rec.packet_indices.append(i)
        rec.distinct_flow_labels.add(pkt.flow_label)
        rec.last_tcp_seq = advance_seq(rec.last_tcp_seq, pkt)
    for rec in table.values():
        rec.hop_limit_mode = mode_value(packets[i].hop_limit for i in rec.packet_indices)
    return table


def packet_flow_keys(packets: list[Ipv6Packet]) -> list[FlowKey]:
    return [flow_key(p) for p in packets]
