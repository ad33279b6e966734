"""Seeded synthetic IPv6 background traffic.

Stands in for a real backbone trace. Sessions (TCP, UDP, ICMPv6 echo and
ICMPv6 error bursts) are laid out on a shared timeline and interleaved.
The header statistics follow what such traces show:

* observed hop limits cluster in 48-60 (Unix senders), 109-114 (Windows)
  and 233-255 (senders starting at 255), roughly 0.6 / 0.3 / 0.1;
* TCP flow labels are constant per flow and zero most of the time;
  ICMPv6 echo labels are constant; error messages get a fresh random
  label per packet; UDP labels are random, mostly drawn once per flow;
* DSCP is the default (0) for the large majority of flows.

The output is a pure function of ``(count, seed)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .packet import (PROTO_ICMPV6, PROTO_TCP, PROTO_UDP, TCP_ACK, TCP_FIN, TCP_PSH, TCP_SYN,
                     Ipv6Packet, upper_layer_checksum)

BASE_TIME_S = 1_559_822_400  # 2019-06-06 12:00 UTC
MEAN_GAP_US = 2_000

HOP_BANDS = ((48, 60), (109, 114), (233, 255))
HOP_BAND_WEIGHTS = (0.6, 0.3, 0.1)
NONDEFAULT_DSCP = (8, 10, 18, 26, 34, 46)

TCP_ZERO_LABEL_P = 0.7
UDP_PER_PACKET_LABEL_P = 0.25
DEFAULT_DSCP_P = 0.95

_OUIS = (b"\x00\x1b\x21", b"\x3c\xfd\xfe", b"\x00\x50\x56", b"\xf4\x8e\x38", b"\xac\x1f\x6b", b"\x00\x0c\x29")


@dataclass(frozen=True)
class Host:
    addr: bytes
    hop_limit: int


def draw_hop_limit(rng: np.random.Generator) -> int:
    lo, hi = HOP_BANDS[rng.choice(3, p=HOP_BAND_WEIGHTS)]
    return int(rng.integers(lo, hi + 1))


def _prefix(rng: np.random.Generator) -> bytes:
    head = int(rng.choice([0x2001, 0x2400, 0x2600, 0x2a00, 0x2a02, 0x2804]))
    return head.to_bytes(2, "big") + rng.bytes(6)


def _iid(rng: np.random.Generator, style: str) -> bytes:
    if style == "low":
        return bytes(6) + int(rng.integers(1, 0x200)).to_bytes(2, "big")
    if style == "eui64":
        oui = bytearray(_OUIS[int(rng.integers(len(_OUIS)))])
        oui[0] ^= 0x02
        return bytes(oui) + b"\xff\xfe" + rng.bytes(3)
    iid = bytearray(rng.bytes(8))
    iid[0] &= 0xFD
    return bytes(iid)


def _host(rng: np.random.Generator, styles: tuple[str, ...], weights: tuple[float, ...]) -> Host:
    style = styles[int(rng.choice(len(styles), p=weights))]
    return Host(_prefix(rng) + _iid(rng, style), draw_hop_limit(rng))


def _dscp(rng: np.random.Generator) -> int:
    if rng.random() < DEFAULT_DSCP_P:
        return 0
    return int(rng.choice(NONDEFAULT_DSCP))


def _nonzero_label(rng: np.random.Generator) -> int:
    return int(rng.integers(1, 1 << 20))


def tcp_bytes(src: bytes, dst: bytes, sport: int, dport: int, seq: int, ack: int,
              flags: int, data: bytes = b"", window: int = 64240) -> bytes:
    hdr = struct.pack("!HHIIBBHHH", sport, dport, seq, ack, 5 << 4, flags, window, 0, 0)
    csum = upper_layer_checksum(src, dst, PROTO_TCP, hdr + data)
    return hdr[:16] + csum.to_bytes(2, "big") + hdr[18:] + data


def udp_bytes(src: bytes, dst: bytes, sport: int, dport: int, data: bytes) -> bytes:
    hdr = struct.pack("!HHHH", sport, dport, 8 + len(data), 0)
    csum = upper_layer_checksum(src, dst, PROTO_UDP, hdr + data) or 0xFFFF
    return hdr[:6] + csum.to_bytes(2, "big") + data


def icmpv6_bytes(src: bytes, dst: bytes, icmp_type: int, code: int, body: bytes) -> bytes:
    msg = bytes((icmp_type, code, 0, 0)) + body
    csum = upper_layer_checksum(src, dst, PROTO_ICMPV6, msg)
    return msg[:2] + csum.to_bytes(2, "big") + msg[4:]


class _Session:
    """Collects (timestamp, packet) pairs for one conversation."""

    def __init__(self, start_us: int):
        self.t = start_us
        self.items: list[tuple[int, Ipv6Packet]] = []

    def emit(self, src: Host, dst: Host, nh: int, payload: bytes, flow_label: int,
             traffic_class: int = 0):
        pkt = Ipv6Packet(traffic_class=traffic_class, flow_label=flow_label,
                         payload_length_declared=len(payload), next_header=nh,
                         hop_limit=src.hop_limit, src_addr=src.addr, dst_addr=dst.addr,
                         payload=payload)
        self.items.append((self.t, pkt))


class BackgroundGenerator:
    """Builds interleaved benign sessions until a packet budget is met."""

    def __init__(self, seed: int):
        self.rng = np.random.default_rng(seed)
        rng = self.rng
        self.servers = [_host(rng, ("low", "eui64"), (0.7, 0.3)) for _ in range(24)]
        self.clients = [_host(rng, ("privacy", "eui64"), (0.6, 0.4)) for _ in range(60)]
        self.routers = [_host(rng, ("low",), (1.0,)) for _ in range(8)]

    def _pick(self, hosts: list[Host]) -> Host:
        return hosts[int(self.rng.integers(len(hosts)))]

    def _gap(self, mean_us: float) -> int:
        return 1 + int(self.rng.exponential(mean_us))

    def tcp_session(self, start: int) -> _Session:
        rng = self.rng
        s = _Session(start)
        c, srv = self._pick(self.clients), self._pick(self.servers)
        cport = int(rng.integers(32768, 61000))
        sport = int(rng.choice([80, 443, 443, 443, 22, 25, 993, 8080]))
        labels = [0 if rng.random() < TCP_ZERO_LABEL_P else _nonzero_label(rng) for _ in range(2)]
        dscp = _dscp(rng)
        ecn = 2 if rng.random() < 0.05 else 0
        tc = [(dscp << 2) | ecn, (dscp << 2) | ecn]
        rtt = 2_000 + int(rng.exponential(40_000))
        cseq, sseq = int(rng.integers(0, 1 << 32)), int(rng.integers(0, 1 << 32))
        m = 1 << 32

        def c2s(flags, data=b""):
            s.emit(c, srv, PROTO_TCP, tcp_bytes(c.addr, srv.addr, cport, sport, cseq, sseq, flags, data),
                   labels[0], tc[0])

        def s2c(flags, data=b""):
            s.emit(srv, c, PROTO_TCP, tcp_bytes(srv.addr, c.addr, sport, cport, sseq, cseq, flags, data),
                   labels[1], tc[1])

        s.emit(c, srv, PROTO_TCP, tcp_bytes(c.addr, srv.addr, cport, sport, cseq, 0, TCP_SYN), labels[0], tc[0])
        cseq = (cseq + 1) % m
        s.t += rtt // 2
        s2c(TCP_SYN | TCP_ACK)
        sseq = (sseq + 1) % m
        s.t += rtt // 2
        c2s(TCP_ACK)
        for _ in range(1 + int(rng.geometric(0.3))):
            s.t += self._gap(rtt)
            req = rng.bytes(int(rng.integers(40, 600)))
            c2s(TCP_PSH | TCP_ACK, req)
            cseq = (cseq + len(req)) % m
            s.t += rtt // 2
            for k in range(int(rng.integers(1, 7))):
                size = 1440 if rng.random() < 0.6 else int(rng.integers(1, 1440))
                s2c(TCP_ACK, rng.bytes(size))
                sseq = (sseq + size) % m
                s.t += self._gap(300)
                if k % 2 == 1:
                    c2s(TCP_ACK)
        s.t += self._gap(rtt)
        c2s(TCP_FIN | TCP_ACK)
        cseq = (cseq + 1) % m
        s.t += rtt // 2
        s2c(TCP_FIN | TCP_ACK)
        sseq = (sseq + 1) % m
        s.t += rtt // 2
        c2s(TCP_ACK)
        return s

    def udp_session(self, start: int) -> _Session:
        rng = self.rng
        s = _Session(start)
        c, srv = self._pick(self.clients), self._pick(self.servers)
        cport = int(rng.integers(32768, 61000))
        kind = rng.random()
        if kind < 0.3:
            sport, n, size = 53, 1, (30, 90)
        elif kind < 0.45:
            sport, n, size = 123, int(rng.integers(1, 4)), (48, 49)
        else:
            sport, n, size = int(rng.choice([443, 3478, 5004])), int(rng.integers(4, 40)), (60, 1350)
        per_packet = rng.random() < UDP_PER_PACKET_LABEL_P
        flow_labels = [_nonzero_label(rng), _nonzero_label(rng)]
        dscp = _dscp(rng) << 2
        rtt = 2_000 + int(rng.exponential(30_000))
        for _ in range(n):
            for d, (a, b, pa, pb) in enumerate(((c, srv, cport, sport), (srv, c, sport, cport))):
                data = rng.bytes(int(rng.integers(size[0], size[1])))
                label = _nonzero_label(rng) if per_packet else flow_labels[d]
                s.emit(a, b, PROTO_UDP, udp_bytes(a.addr, b.addr, pa, pb, data), label, dscp)
                s.t += self._gap(rtt / 2)
        return s

    def echo_session(self, start: int) -> _Session:
        rng = self.rng
        s = _Session(start)
        a, b = self._pick(self.clients), self._pick(self.servers + self.clients)
        ident = int(rng.integers(0, 1 << 16))
        labels = [0 if rng.random() < 0.5 else _nonzero_label(rng) for _ in range(2)]
        data = rng.bytes(56)
        rtt = 1_000 + int(rng.exponential(30_000))
        for seq in range(1, int(rng.integers(2, 11))):
            body = struct.pack("!HH", ident, seq) + data
            s.emit(a, b, PROTO_ICMPV6, icmpv6_bytes(a.addr, b.addr, 128, 0, body), labels[0])
            s.t += rtt
            s.emit(b, a, PROTO_ICMPV6, icmpv6_bytes(b.addr, a.addr, 129, 0, body), labels[1])
            s.t += self._gap(1_000_000)
        return s

    def error_session(self, start: int) -> _Session:
        rng = self.rng
        s = _Session(start)
        r, h = self._pick(self.routers), self._pick(self.clients)
        icmp_type, code = [(1, 0), (1, 3), (1, 4), (3, 0), (2, 0)][int(rng.integers(5))]
        for _ in range(int(rng.integers(1, 9))):
            rest = (1280).to_bytes(4, "big") if icmp_type == 2 else bytes(4)
            quoted = bytes([0x60]) + rng.bytes(7) + h.addr + _prefix(rng) + rng.bytes(8) \
                + rng.bytes(int(rng.integers(8, 120)))
            s.emit(r, h, PROTO_ICMPV6, icmpv6_bytes(r.addr, h.addr, icmp_type, code, rest + quoted),
                   _nonzero_label(rng))
            s.t += self._gap(200_000)
        return s

    def generate(self, count: int) -> list[Ipv6Packet]:
        if count <= 0:
            return []
        rng = self.rng
        makers = (self.tcp_session, self.udp_session, self.echo_session, self.error_session)
        mix = (0.40, 0.38, 0.10, 0.12)
        sessions: list[_Session] = []
        total = 0
        t = 0
        while total < count:
            t += self._gap(MEAN_GAP_US * 8)
            sess = makers[int(rng.choice(4, p=mix))](t)
            sessions.append(sess)
            total += len(sess.items)
        timeline = sorted(
            ((ts, si, k) for si, sess in enumerate(sessions) for k, (ts, _) in enumerate(sess.items)))
        out = []
        for ts, si, k in timeline[:count]:
            out.append(sessions[si].items[k][1].with_timestamp(BASE_TIME_S * 1_000_000 + ts))
        return out


def generate_background_packets(count: int, seed: int = 42) -> list[Ipv6Packet]:
    return BackgroundGenerator(seed).generate(count)
