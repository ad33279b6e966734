"""Labeled captures: background generation, covert injection, splitting.

Injection follows the channel's realistic deployment:

* FlowLabel carriers are new UDP / ICMPv6-error packets placed inside an
  existing UDP or ICMPv6-error flow, copying its addresses and ports.
* Length carriers are new zero-data TCP segments placed inside an existing
  TCP flow, with the sequence number the flow expects at that point.
* Address carriers are standalone packets dropped at random positions.
* HopLimit is not inserted at all: existing flow packets are re-marked.

Inserted packets get timestamps interpolated between their capture
neighbours so insertion leaves no timing gap.
"""

from __future__ import annotations

import csv
import enum
import math
import os
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .channels import (BINARY, COVERT_CHANNELS, ChannelKind, HopLimitAlphabet, embed_address,
                       embed_flowlabel, embed_hoplimit, embed_length, message_to_symbols)
from .crypto import SharedSecret
from .errors import InjectionInfeasibleError
from .flows import FlowKey, advance_seq, build_flow_table
from .packet import (PROTO_ICMPV6, PROTO_TCP, PROTO_UDP, TCP_ACK, TCP_FIN, TCP_RST, TCP_SYN,
                     Ipv6Packet, is_flowlabel_carrier_eligible, tcp_segment)
from .traffic import draw_hop_limit, generate_background_packets, icmpv6_bytes, tcp_bytes, udp_bytes


class Provenance(enum.Enum):
    BACKGROUND = "background"
    INSERTED = "inserted"
    MODULATED = "modulated"


@dataclass(frozen=True)
class EmbeddedMessage:
    """What was hidden under one message id, kept for verification."""

    channel: ChannelKind
    plaintext: bytes
    symbols: Optional[tuple[int, ...]] = None
    alphabet: Optional[HopLimitAlphabet] = None


@dataclass
class LabeledCapture:
    packets: list[Ipv6Packet]
    labels: list[ChannelKind]
    provenance: list[Provenance]
    message_ids: list[int] = field(default_factory=list)
    original_hop_limits: list[Optional[int]] = field(default_factory=list)
    messages: dict[int, EmbeddedMessage] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.packets)
        if not self.message_ids:
            self.message_ids = [-1] * n
        if not self.original_hop_limits:
            self.original_hop_limits = [None] * n
        for name in ("labels", "provenance", "message_ids", "original_hop_limits"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has {len(getattr(self, name))} entries for {n} packets")
        for i, (lab, prov) in enumerate(zip(self.labels, self.provenance)):
            if (lab is ChannelKind.NORMAL) != (prov is Provenance.BACKGROUND):
                raise ValueError(f"packet {i}: label {lab.value} inconsistent with provenance {prov.value}")

    @classmethod
    def from_background(cls, packets: Sequence[Ipv6Packet]) -> "LabeledCapture":
        n = len(packets)
        return cls(list(packets), [ChannelKind.NORMAL] * n, [Provenance.BACKGROUND] * n)

    def __len__(self) -> int:
        return len(self.packets)

    def label_histogram(self) -> dict[ChannelKind, int]:
        hist = {k: 0 for k in ChannelKind}
        for lab in self.labels:
            hist[lab] += 1
        return hist

    def carriers_of(self, message_id: int) -> list[Ipv6Packet]:
        return [p for p, m in zip(self.packets, self.message_ids) if m == message_id]

    def slice(self, start: int, stop: int) -> "LabeledCapture":
        ids = set(self.message_ids[start:stop])
        return LabeledCapture(self.packets[start:stop], self.labels[start:stop],
                              self.provenance[start:stop], self.message_ids[start:stop],
                              self.original_hop_limits[start:stop],
                              {k: v for k, v in self.messages.items() if k in ids})


# Packet counts of the reference capture the desk-scale mix is scaled from.
REFERENCE_COUNTS = {
    ChannelKind.NORMAL: 411_720,
    ChannelKind.HOPLIMIT: 116_628,
    ChannelKind.ADDRESS: 76_575,
    ChannelKind.LENGTH: 75_823,
    ChannelKind.FLOWLABEL: 44_712,
}


@dataclass(frozen=True)
class MixConfig:
    normal_count: int
    covert_counts: dict = field(default_factory=dict)
    seed: int = 42

    def __post_init__(self):
        counts = {ChannelKind.parse(k) if isinstance(k, str) else k: int(v)
                  for k, v in self.covert_counts.items()}
        if ChannelKind.NORMAL in counts:
            raise ValueError("normal traffic is set by normal_count, not covert_counts")
        if self.normal_count < 0 or any(v < 0 for v in counts.values()):
            raise ValueError("packet counts must be non-negative")
        object.__setattr__(self, "covert_counts", {k: counts.get(k, 0) for k in COVERT_CHANNELS})

    def count(self, channel: ChannelKind) -> int:
        if channel is ChannelKind.NORMAL:
            return self.normal_count
        return self.covert_counts[channel]

    @classmethod
    def scaled_reference(cls, divisor: float = 100, seed: int = 42) -> "MixConfig":
        c = {k: int(round(v / divisor)) for k, v in REFERENCE_COUNTS.items()}
        normal = c.pop(ChannelKind.NORMAL)
        return cls(normal, c, seed)

    @classmethod
    def from_text(cls, text: str) -> "MixConfig":
        """Parse ``key = value`` lines (normal, hoplimit, address, length, flowlabel, seed)."""
        values: dict[str, int] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
            key, val = (s.strip().lower() for s in line.split("=", 1))
            try:
                values[key] = int(val.replace("_", ""))
            except ValueError:
                raise ValueError(f"line {lineno}: {key} needs an integer, got {val!r}") from None
        seed = values.pop("seed", 42)
        normal = values.pop("normal", 0)
        return cls(normal, {ChannelKind.parse(k): v for k, v in values.items()}, seed)

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "MixConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


def generate_background(config: MixConfig) -> LabeledCapture:
    return LabeledCapture.from_background(generate_background_packets(config.normal_count, config.seed))


# --- injection ---------------------------------------------------------------

@dataclass
class _Insertion:
    anchor: int            # insert after this capture index; -1 = before everything
    packet: Ipv6Packet
    label: ChannelKind
    message_id: int


def _apply_insertions(cap: LabeledCapture, inserts: list[_Insertion]) -> LabeledCapture:
    by_anchor: dict[int, list[_Insertion]] = {}
    for ins in inserts:
        by_anchor.setdefault(ins.anchor, []).append(ins)
    n = len(cap.packets)
    packets: list[Ipv6Packet] = []
    labels: list[ChannelKind] = []
    prov: list[Provenance] = []
    mids: list[int] = []
    orig: list[Optional[int]] = []

    def ts(i: int) -> int:
        return cap.packets[i].timestamp_us

    def flush(anchor: int):
        group = by_anchor.get(anchor)
        if not group:
            return
        if n == 0:
            t0, t1 = 0, len(group) + 1
        elif anchor < 0:
            t0, t1 = ts(0) - len(group) - 1, ts(0)
        elif anchor + 1 < n:
            t0, t1 = ts(anchor), ts(anchor + 1)
        else:
            t0, t1 = ts(anchor), ts(anchor) + 1000 * (len(group) + 1)
        for j, ins in enumerate(group):
            t = t0 + (t1 - t0) * (j + 1) // (len(group) + 1)
            packets.append(ins.packet.with_timestamp(t))
            labels.append(ins.label)
            prov.append(Provenance.INSERTED)
            mids.append(ins.message_id)
            orig.append(None)

    flush(-1)
    for i in range(n):
        packets.append(cap.packets[i])
        labels.append(cap.labels[i])
        prov.append(cap.provenance[i])
        mids.append(cap.message_ids[i])
        orig.append(cap.original_hop_limits[i])
        flush(i)
    return LabeledCapture(packets, labels, prov, mids, orig, dict(cap.messages))


class _Planner:
    """Chooses carrier flows and anchor points for one channel at a time."""

    def __init__(self, cap: LabeledCapture, rng: np.random.Generator):
        self.cap = cap
        self.rng = rng
        self.table = build_flow_table(cap.packets)
        self.used: set[FlowKey] = set()
        self.next_id = max(cap.messages, default=-1) + 1

    def _untouched(self, key: FlowKey) -> bool:
        return key not in self.used and all(
            self.cap.provenance[i] is Provenance.BACKGROUND for i in self.table[key].packet_indices)

    def pick_flow(self, candidates: list[FlowKey], need: int, channel: ChannelKind) -> FlowKey:
        if not candidates:
            raise InjectionInfeasibleError(channel, "no eligible flow in the capture")
        fresh = [k for k in candidates if self._untouched(k)] or candidates
        roomy = [k for k in fresh if len(self.table[k]) >= need]
        if roomy:
            key = roomy[int(self.rng.integers(len(roomy)))]
        else:
            key = max(fresh, key=lambda k: len(self.table[k]))
        self.used.add(key)
        return key

    def anchors(self, pool: list[int], k: int) -> list[int]:
        if len(pool) >= k:
            picks = self.rng.choice(len(pool), size=k, replace=False)
        else:
            picks = self.rng.choice(len(pool), size=k, replace=True)
        return sorted(pool[int(p)] for p in picks)

    def original_hop(self, i: int) -> int:
        orig = self.cap.original_hop_limits[i]
        return self.cap.packets[i].hop_limit if orig is None else orig


def _flowlabel_inserts(plan: _Planner, message: bytes, secret: SharedSecret, mid: int) -> list[_Insertion]:
    cap, rng = plan.cap, plan.rng
    ch = ChannelKind.FLOWLABEL
    k = math.ceil(len(message) / 2)
    candidates = [key for key, rec in plan.table.items()
                  if key.next_header in (PROTO_UDP, PROTO_ICMPV6)
                  and any(is_flowlabel_carrier_eligible(cap.packets[i])
                          and cap.provenance[i] is Provenance.BACKGROUND for i in rec.packet_indices)]
    key = plan.pick_flow(candidates, k, ch)
    pool = [i for i in plan.table[key].packet_indices
            if is_flowlabel_carrier_eligible(cap.packets[i]) and cap.provenance[i] is Provenance.BACKGROUND]
    anchors = plan.anchors(pool, k)
    carriers = []
    for a in anchors:
        tpl = cap.packets[a]
        if tpl.next_header == PROTO_UDP and len(tpl.payload) >= 8:
            sport, dport = struct.unpack_from("!HH", tpl.payload)
            payload = udp_bytes(tpl.src_addr, tpl.dst_addr, sport, dport, rng.bytes(len(tpl.payload) - 8))
        else:
            payload = tpl.payload
        carriers.append(replace(tpl, payload=payload, payload_length_declared=len(payload),
                                hop_limit=plan.original_hop(a)))
    carriers = embed_flowlabel(carriers, range(k), message, secret)
    return [_Insertion(a, p, ch, mid) for a, p in zip(anchors, carriers)]


def _length_inserts(plan: _Planner, message: bytes, secret: SharedSecret, mid: int) -> list[_Insertion]:
    cap = plan.cap
    ch = ChannelKind.LENGTH
    k = math.ceil(len(message) / 2)

    def data_anchor(i: int) -> bool:
        seg = tcp_segment(cap.packets[i])
        return (seg is not None and seg.flags & TCP_ACK and not seg.flags & (TCP_SYN | TCP_FIN | TCP_RST)
                and cap.provenance[i] is Provenance.BACKGROUND)

    candidates = [key for key, rec in plan.table.items()
                  if key.next_header == PROTO_TCP and any(data_anchor(i) for i in rec.packet_indices)]
    key = plan.pick_flow(candidates, k, ch)
    flow_idx = plan.table[key].packet_indices
    pool = [i for i in flow_idx if data_anchor(i)]
    anchors = plan.anchors(pool, k)

    running: dict[int, int] = {}
    seq = None
    for i in flow_idx:
        seq = advance_seq(seq, cap.packets[i])
        running[i] = seq
    carriers = []
    for a in anchors:
        tpl = cap.packets[a]
        seg = tcp_segment(tpl)
        window = struct.unpack_from("!H", tpl.payload, 14)[0]
        payload = tcp_bytes(tpl.src_addr, tpl.dst_addr, seg.src_port, seg.dst_port,
                            running[a], seg.ack, TCP_ACK, b"", window)
        carriers.append(replace(tpl, payload=payload, payload_length_declared=len(payload),
                                hop_limit=plan.original_hop(a)))
    carriers = embed_length(carriers, range(k), message, secret)
    return [_Insertion(a, p, ch, mid) for a, p in zip(anchors, carriers)]


def _address_inserts(plan: _Planner, message: bytes, secret: SharedSecret, mid: int) -> list[_Insertion]:
    cap, rng = plan.cap, plan.rng
    ch = ChannelKind.ADDRESS
    n = len(cap.packets)
    if n == 0:
        raise InjectionInfeasibleError(ch, "capture is empty, no prefixes to borrow")
    k = math.ceil(len(message) / 8)
    src_prefix = cap.packets[int(rng.integers(n))].src_addr[:8]
    dst = cap.packets[int(rng.integers(n))].dst_addr
    hop = draw_hop_limit(rng)
    start = int(rng.integers(n))
    anchors = sorted(min(n - 1, start + int(g)) for g in np.cumsum(rng.geometric(1 / 40, size=k)) - 1)
    use_udp = rng.random() < 0.6
    sport = int(rng.integers(32768, 61000))
    dport = int(rng.choice([53, 123, 443]))
    echo_label = int(rng.integers(0, 1 << 20))
    carriers = []
    for seq in range(k):
        src = src_prefix + bytes(8)
        if use_udp:
            payload = udp_bytes(src, dst, sport, dport, rng.bytes(int(rng.integers(30, 200))))
            nh, label = PROTO_UDP, int(rng.integers(1, 1 << 20))
        else:
            body = struct.pack("!HH", sport, seq + 1) + rng.bytes(56)
            payload = icmpv6_bytes(src, dst, 128, 0, body)
            nh, label = PROTO_ICMPV6, echo_label
        carriers.append(Ipv6Packet(traffic_class=0, flow_label=label, payload_length_declared=len(payload),
                                   next_header=nh, hop_limit=hop, src_addr=src, dst_addr=dst,
                                   payload=payload, link_type=cap.packets[0].link_type))
    carriers = embed_address(carriers, range(k), message, secret)
    return [_Insertion(a, p, ch, mid) for a, p in zip(anchors, carriers)]


_INSERTERS = {
    ChannelKind.FLOWLABEL: _flowlabel_inserts,
    ChannelKind.LENGTH: _length_inserts,
    ChannelKind.ADDRESS: _address_inserts,
}


def _modulate_hoplimit(cap: LabeledCapture, symbol_lists: list[list[int]], alphabet: HopLimitAlphabet,
                       plaintexts: list[bytes], rng: np.random.Generator) -> LabeledCapture:
    plan = _Planner(cap, rng)
    free = {key: [i for i in rec.packet_indices if cap.provenance[i] is Provenance.BACKGROUND]
            for key, rec in plan.table.items()}
    packets = list(cap.packets)
    labels, prov = list(cap.labels), list(cap.provenance)
    mids, orig = list(cap.message_ids), list(cap.original_hop_limits)
    messages = dict(cap.messages)
    for symbols, plain in zip(symbol_lists, plaintexts):
        need = len(symbols)
        if sum(len(v) for v in free.values()) < need:
            raise InjectionInfeasibleError(ChannelKind.HOPLIMIT,
                                           f"need {need} background packets to modulate")
        chosen: list[int] = []
        while len(chosen) < need:
            keys = [k for k, v in free.items() if v]
            key = keys[int(rng.integers(len(keys)))]
            take = free[key][:need - len(chosen)]
            free[key] = free[key][len(take):]
            chosen.extend(take)
        chosen.sort()
        mid = plan.next_id
        plan.next_id += 1
        before = [packets[i].hop_limit for i in chosen]
        packets = embed_hoplimit(packets, chosen, symbols, alphabet)
        for i, h in zip(chosen, before):
            labels[i] = ChannelKind.HOPLIMIT
            prov[i] = Provenance.MODULATED
            mids[i] = mid
            orig[i] = h
        messages[mid] = EmbeddedMessage(ChannelKind.HOPLIMIT, plain, tuple(symbols), alphabet)
    return LabeledCapture(packets, labels, prov, mids, orig, messages)


def inject_many(cap: LabeledCapture, channel: ChannelKind, messages: Sequence[bytes],
                secret: SharedSecret, rng: np.random.Generator, *,
                alphabet: HopLimitAlphabet = BINARY,
                symbol_counts: Optional[Sequence[int]] = None) -> LabeledCapture:
    """Hide several messages in one pass over the flow table.

    For HopLimit, ``symbol_counts`` may truncate each message's symbol list
    (used to hit exact packet budgets).
    """
    if channel is ChannelKind.HOPLIMIT:
        symbol_lists = [message_to_symbols(m, alphabet) for m in messages]
        if symbol_counts is not None:
            symbol_lists = [s[:c] for s, c in zip(symbol_lists, symbol_counts)]
        return _modulate_hoplimit(cap, symbol_lists, alphabet, list(messages), rng)
    if channel not in _INSERTERS:
        raise ValueError(f"{channel} is not an injectable channel")
    plan = _Planner(cap, rng)
    inserts: list[_Insertion] = []
    registry = dict(cap.messages)
    for m in messages:
        if not m:
            raise ValueError("messages must be non-empty")
        mid = plan.next_id
        plan.next_id += 1
        inserts.extend(_INSERTERS[channel](plan, bytes(m), secret, mid))
        registry[mid] = EmbeddedMessage(channel, bytes(m))
    cap = replace(cap, messages=registry)
    return _apply_insertions(cap, inserts)


def inject(cap: LabeledCapture, channel: ChannelKind, message: bytes, secret: SharedSecret, *,
           seed: int = 0, alphabet: HopLimitAlphabet = BINARY) -> LabeledCapture:
    """Hide one message in ``cap`` and return the relabeled capture."""
    return inject_many(cap, channel, [message], secret, np.random.default_rng(seed), alphabet=alphabet)


def _message_lengths(total_carriers: int, bytes_per_carrier: int, rng: np.random.Generator,
                     lo: int = 8, hi: int = 64) -> list[int]:
    """Message lengths (bytes) whose carrier counts add up to ``total_carriers`` exactly."""
    out = []
    left = total_carriers
    while left > 0:
        length = int(rng.integers(lo, hi + 1))
        k = math.ceil(length / bytes_per_carrier)
        if k > left:
            k = left
            length = bytes_per_carrier * k - int(rng.integers(0, bytes_per_carrier))
        out.append(length)
        left -= k
    return out


def build_mixed_dataset(config: MixConfig, secret: SharedSecret) -> LabeledCapture:
    """Background plus every covert channel, with label counts matching ``config`` exactly."""
    hop_total = config.count(ChannelKind.HOPLIMIT)
    bg = generate_background_packets(config.normal_count + hop_total, config.seed)
    cap = LabeledCapture.from_background(bg)
    rng = np.random.default_rng([config.seed, 1])

    if hop_total:
        msgs, counts, left = [], [], hop_total
        while left:
            m = rng.bytes(int(rng.integers(8, 65)))
            c = min(8 * len(m), left)
            msgs.append(m)
            counts.append(c)
            left -= c
        cap = inject_many(cap, ChannelKind.HOPLIMIT, msgs, secret, rng, symbol_counts=counts)

    per_carrier = {ChannelKind.FLOWLABEL: 2, ChannelKind.LENGTH: 2, ChannelKind.ADDRESS: 8}
    for ch in (ChannelKind.FLOWLABEL, ChannelKind.LENGTH, ChannelKind.ADDRESS):
        total = config.count(ch)
        if not total:
            continue
        msgs = [rng.bytes(n) for n in _message_lengths(total, per_carrier[ch], rng)]
        cap = inject_many(cap, ch, msgs, secret, rng)

    hist = cap.label_histogram()
    for ch in ChannelKind:
        if hist[ch] != config.count(ch):
            raise InjectionInfeasibleError(ch, f"produced {hist[ch]} packets, wanted {config.count(ch)}")
    return cap


def split_sequential(cap: LabeledCapture, train_fraction: float = 0.75) -> tuple[LabeledCapture, LabeledCapture]:
    """Unshuffled split: the first floor(n * fraction) packets train, the rest test."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be strictly between 0 and 1")
    cut = math.floor(len(cap) * train_fraction)
    return cap.slice(0, cut), cap.slice(cut, len(cap))


# --- label sidecar -------------------------------------------------------------

LABEL_CSV_HEADER = ("packet_index", "label", "provenance")


def write_label_csv(cap: LabeledCapture, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABEL_CSV_HEADER)
        for i, (lab, prov) in enumerate(zip(cap.labels, cap.provenance)):
            w.writerow((i, lab.value, prov.value))


def read_label_csv(path: str | os.PathLike) -> tuple[list[ChannelKind], list[Provenance]]:
    labels, prov = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if tuple(header or ()) != LABEL_CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(LABEL_CSV_HEADER)}")
        for lineno, row in enumerate(rows, 2):
            if len(row) != 3 or row[0] != str(len(labels)):
                raise ValueError(f"{path}:{lineno}: malformed label row {row!r}")
            labels.append(ChannelKind.parse(row[1]))
            prov.append(Provenance(row[2]))
    return labels, prov


def attach_labels(packets: Iterable[Ipv6Packet], labels: list[ChannelKind],
                  provenance: list[Provenance]) -> LabeledCapture:
    return LabeledCapture(list(packets), list(labels), list(provenance))
