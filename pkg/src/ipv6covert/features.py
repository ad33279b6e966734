"""Per-packet feature vectors with flow context, min-max scaling and CSV I/O.

Each column maps onto a header-field behaviour that distinguishes covert
carriers: flow-label constancy per protocol, hop-limit clustering, declared
vs. captured length, interface-identifier randomness and TCP sequence logic.
"""

from __future__ import annotations

import csv
import math
import os
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .channels import ChannelKind
from .errors import FeatureCsvError
from .flows import FlowKey, FlowRecord, advance_seq, build_flow_table, flow_key
from .packet import PROTO_ICMPV6, PROTO_TCP, PROTO_UDP, Ipv6Packet, is_icmpv6_error, tcp_segment

FEATURE_NAMES = (
    "dscp",
    "ecn",
    "flow_label",
    "flow_label_is_zero",
    "flow_label_flow_distinct",
    "payload_length_declared",
    "payload_length_actual",
    "length_delta",
    "hop_limit",
    "hop_limit_flow_deviation",
    "nh_tcp",
    "nh_udp",
    "nh_icmpv6",
    "nh_other",
    "is_icmpv6_error",
    "src_iid_entropy",
    "tcp_seq_discontinuity",
    "flow_packet_count",
    "flow_label_flow_share",
)
N_FEATURES = len(FEATURE_NAMES)

# 0/1 and one-of-k columns; scaling leaves them alone.
PASSTHROUGH = frozenset({"flow_label_is_zero", "nh_tcp", "nh_udp", "nh_icmpv6", "nh_other",
                         "is_icmpv6_error", "tcp_seq_discontinuity"})

LABEL_COLUMN = "label"
CLAMP_LOW, CLAMP_HIGH = -1.0, 2.0


def iid_entropy(addr: bytes) -> float:
    """Shannon entropy (bits per byte) of an address's low 8 bytes."""
    counts = Counter(addr[8:16])
    n = sum(counts.values())
    h = -sum(c / n * math.log2(c / n) for c in counts.values())
    return round(h, 6) + 0.0


def extract_features(packets: Sequence[Ipv6Packet],
                     flow_table: Optional[dict[FlowKey, FlowRecord]] = None) -> np.ndarray:
    """One row per packet, columns in ``FEATURE_NAMES`` order.

    ``flow_table`` must come from the same packet list; it is built here
    when omitted. Flow-context columns look at the whole flow, so the result
    for a packet can depend on packets captured after it.
    """
    packets = list(packets)
    if flow_table is None:
        flow_table = build_flow_table(packets)
    n = len(packets)
    X = np.zeros((n, N_FEATURES), dtype=np.float64)
    if n == 0:
        return X

    label_share: dict[int, float] = {}
    seq_gap = np.zeros(n)
    for rec in flow_table.values():
        idx = rec.packet_indices
        counts = Counter(packets[i].flow_label for i in idx)
        running = None
        for i in idx:
            label_share[i] = counts[packets[i].flow_label] / len(idx)
            seg = tcp_segment(packets[i])
            if seg is not None and running is not None and seg.seq != running:
                seq_gap[i] = 1.0
            running = advance_seq(running, packets[i])

    col = {name: k for k, name in enumerate(FEATURE_NAMES)}
    for i, p in enumerate(packets):
        rec = flow_table[flow_key(p)]
        row = X[i]
        row[col["dscp"]] = p.dscp
        row[col["ecn"]] = p.ecn
        row[col["flow_label"]] = p.flow_label
        row[col["flow_label_is_zero"]] = p.flow_label == 0
        row[col["flow_label_flow_distinct"]] = len(rec.distinct_flow_labels)
        row[col["payload_length_declared"]] = p.payload_length_declared
        row[col["payload_length_actual"]] = len(p.payload)
        row[col["length_delta"]] = p.payload_length_declared - len(p.payload)
        row[col["hop_limit"]] = p.hop_limit
        row[col["hop_limit_flow_deviation"]] = abs(p.hop_limit - rec.hop_limit_mode)
        nh = {PROTO_TCP: "nh_tcp", PROTO_UDP: "nh_udp", PROTO_ICMPV6: "nh_icmpv6"}.get(p.next_header, "nh_other")
        row[col[nh]] = 1.0
        row[col["is_icmpv6_error"]] = is_icmpv6_error(p)
        row[col["src_iid_entropy"]] = iid_entropy(p.src_addr)
        row[col["tcp_seq_discontinuity"]] = seq_gap[i]
        row[col["flow_packet_count"]] = len(rec)
        row[col["flow_label_flow_share"]] = round(label_share[i], 6)
    return X


@dataclass(frozen=True)
class NormalizationParams:
    mins: np.ndarray
    maxs: np.ndarray
    names: tuple[str, ...] = FEATURE_NAMES

    def to_dict(self) -> dict:
        return {"names": list(self.names), "min": self.mins.tolist(), "max": self.maxs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationParams":
        return cls(np.asarray(d["min"], dtype=float), np.asarray(d["max"], dtype=float), tuple(d["names"]))


def fit_normalization(train: np.ndarray, names: Sequence[str] = FEATURE_NAMES) -> NormalizationParams:
    """Per-column min and max of the training rows only."""
    train = np.asarray(train, dtype=float)
    if train.ndim != 2 or train.shape[0] == 0:
        raise ValueError("cannot fit normalization on an empty training set")
    return NormalizationParams(train.min(axis=0), train.max(axis=0), tuple(names))


def apply_normalization(X: np.ndarray, params: NormalizationParams) -> np.ndarray:
    """Min-max scale to [0, 1]; unseen test values are clamped to [-1, 2].

    Constant training columns map to 0. Indicator columns pass through.
    """
    X = np.asarray(X, dtype=float)
    span = params.maxs - params.mins
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, (X - params.mins) / safe, 0.0)
    out = np.clip(out, CLAMP_LOW, CLAMP_HIGH)
    keep = [k for k, name in enumerate(params.names) if name in PASSTHROUGH]
    out[:, keep] = X[:, keep]
    return np.round(out, 6) + 0.0


def _fmt(v: float) -> str:
    s = f"{v:.6f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def write_feature_csv(X: np.ndarray, labels: Sequence[ChannelKind | str], path: str | os.PathLike,
                      names: Sequence[str] = FEATURE_NAMES) -> None:
    X = np.asarray(X, dtype=float).reshape(-1, len(names))
    if len(labels) != X.shape[0]:
        raise ValueError(f"{len(labels)} labels for {X.shape[0]} rows")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(names) + [LABEL_COLUMN])
        for row, lab in zip(X, labels):
            w.writerow([_fmt(v) for v in row] + [getattr(lab, "value", lab)])


def read_feature_csv(path: str | os.PathLike) -> tuple[np.ndarray, list[ChannelKind], tuple[str, ...]]:
    """Inverse of ``write_feature_csv``: (matrix, labels, column names)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if not header or header[-1] != LABEL_COLUMN:
            raise FeatureCsvError(1, f"header must end with a '{LABEL_COLUMN}' column")
        names = tuple(header[:-1])
        data, labels = [], []
        for lineno, row in enumerate(rows, 2):
            if len(row) != len(header):
                raise FeatureCsvError(lineno, f"expected {len(header)} fields, got {len(row)}")
            try:
                data.append([float(v) for v in row[:-1]])
                labels.append(ChannelKind.parse(row[-1]))
            except ValueError as exc:
                raise FeatureCsvError(lineno, str(exc)) from None
    X = np.array(data, dtype=float).reshape(-1, len(names))
    return X, labels, names
