"""Header-field behaviour of a capture: hop-limit, Traffic Class and FlowLabel profiles."""

from __future__ import annotations

import csv
import math
import os
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .flows import FlowKey, FlowRecord, build_flow_table, flow_key
from .packet import PROTO_ICMPV6, PROTO_TCP, PROTO_UDP, Ipv6Packet, icmpv6_type, is_icmpv6_error

PROTOCOL_CLASSES = ("tcp", "udp", "icmpv6_echo", "icmpv6_error", "other")
HOP_LIMIT_BANDS = ((48, 60), (109, 114), (233, 255))


def protocol_class(pkt: Ipv6Packet) -> str:
    if pkt.next_header == PROTO_TCP:
        return "tcp"
    if pkt.next_header == PROTO_UDP:
        return "udp"
    if pkt.next_header == PROTO_ICMPV6:
        if is_icmpv6_error(pkt):
            return "icmpv6_error"
        if icmpv6_type(pkt) in (128, 129):
            return "icmpv6_echo"
    return "other"


@dataclass(frozen=True)
class FlowLabelStats:
    packets: int
    flows: int                  # flows with at least two packets of this class
    fraction_zero: float
    fraction_constant_per_flow: float
    entropy_bits: float         # Shannon entropy of the label values


@dataclass(frozen=True)
class ProfileReport:
    packet_count: int
    hop_limit_histogram: np.ndarray   # 256 counts
    dscp_histogram: np.ndarray        # 64 counts
    ecn_histogram: np.ndarray         # 4 counts
    flowlabel_stats: dict[str, FlowLabelStats]

    def hop_limit_mass(self, bands=HOP_LIMIT_BANDS) -> float:
        """Share of packets whose hop limit falls in any of the inclusive ``bands``."""
        if self.packet_count == 0:
            return 0.0
        inside = sum(int(self.hop_limit_histogram[lo:hi + 1].sum()) for lo, hi in bands)
        return inside / self.packet_count

    def summary(self) -> str:
        lines = [f"packets: {self.packet_count}"]
        if self.packet_count:
            hl = self.hop_limit_histogram
            top = np.argsort(-hl, kind="stable")[:5]
            lines.append("hop limit top values: " + ", ".join(f"{v} ({hl[v]})" for v in top if hl[v]))
            for lo, hi in HOP_LIMIT_BANDS:
                lines.append(f"hop limit mass in [{lo},{hi}]: {hl[lo:hi + 1].sum() / self.packet_count:.4f}")
            lines.append(f"DSCP 0 share: {self.dscp_histogram[0] / self.packet_count:.4f}")
            lines.append("ECN counts: " + ", ".join(str(int(c)) for c in self.ecn_histogram))
        lines.append("flow label by protocol (packets, flows, zero, constant/flow, entropy bits):")
        for name, s in self.flowlabel_stats.items():
            lines.append(f"  {name:<13}{s.packets:>8}{s.flows:>7}{s.fraction_zero:>8.3f}"
                         f"{s.fraction_constant_per_flow:>8.3f}{s.entropy_bits:>8.3f}")
        return "\n".join(lines)


def _entropy(counts: Counter) -> float:
    n = sum(counts.values())
    if n == 0:
        return 0.0
    return round(-sum(c / n * math.log2(c / n) for c in counts.values()), 6) + 0.0


def profile_capture(packets: Sequence[Ipv6Packet],
                    flow_table: Optional[dict[FlowKey, FlowRecord]] = None) -> ProfileReport:
    """Profile a capture in one pass over its packets.

    Per-flow FlowLabel constancy groups packets by (flow, protocol class) and
    only counts groups of two or more packets, since a lone packet is
    trivially constant.
    """
    packets = list(packets)
    if flow_table is None:
        flow_table = build_flow_table(packets)
    hop = np.zeros(256, dtype=np.int64)
    dscp = np.zeros(64, dtype=np.int64)
    ecn = np.zeros(4, dtype=np.int64)
    labels: dict[str, Counter] = {c: Counter() for c in PROTOCOL_CLASSES}
    groups: dict[tuple, set] = defaultdict(set)
    sizes: Counter = Counter()
    for p in packets:
        hop[p.hop_limit] += 1
        dscp[p.dscp] += 1
        ecn[p.ecn] += 1
        cls = protocol_class(p)
        labels[cls][p.flow_label] += 1
        key = (cls, flow_key(p))
        if key[1] not in flow_table:
            raise ValueError("flow table was not built from this capture")
        groups[key].add(p.flow_label)
        sizes[key] += 1

    stats = {}
    for cls in PROTOCOL_CLASSES:
        n = sum(labels[cls].values())
        multi = [k for k in groups if k[0] == cls and sizes[k] >= 2]
        constant = sum(1 for k in multi if len(groups[k]) == 1)
        stats[cls] = FlowLabelStats(
            packets=n,
            flows=len(multi),
            fraction_zero=labels[cls][0] / n if n else 0.0,
            fraction_constant_per_flow=constant / len(multi) if multi else 0.0,
            entropy_bits=_entropy(labels[cls]),
        )
    return ProfileReport(len(packets), hop, dscp, ecn, stats)


def _write_histogram(path: str, name: str, counts: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([name, "count"])
        for v, c in enumerate(counts):
            w.writerow([v, int(c)])


def write_profile(report: ProfileReport, out_dir: str | os.PathLike) -> list[str]:
    """Write the histogram CSVs, FlowLabel table and text summary; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for fname, col, counts in (("hop_limit_histogram.csv", "hop_limit", report.hop_limit_histogram),
                               ("dscp_histogram.csv", "dscp", report.dscp_histogram),
                               ("ecn_histogram.csv", "ecn", report.ecn_histogram)):
        path = os.path.join(out_dir, fname)
        _write_histogram(path, col, counts)
        paths.append(path)
    path = os.path.join(out_dir, "flowlabel_stats.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["protocol_class", "packets", "flows", "fraction_zero",
                    "fraction_constant_per_flow", "entropy_bits"])
        for cls, s in report.flowlabel_stats.items():
            w.writerow([cls, s.packets, s.flows, f"{s.fraction_zero:.6f}",
                        f"{s.fraction_constant_per_flow:.6f}", f"{s.entropy_bits:.6f}"])
    paths.append(path)
    path = os.path.join(out_dir, "summary.txt")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report.summary() + "\n")
    paths.append(path)
    return paths
