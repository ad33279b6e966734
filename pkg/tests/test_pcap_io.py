import struct

import pytest

from conftest import DST, SRC, make_udp
from ipv6covert.errors import NotIPv6Error, PcapFormatError, TruncatedPacketError, TruncatedRecordError
from ipv6covert.flows import build_flow_table, flow_key, seq_after
from ipv6covert.packet import (LINKTYPE_ETHERNET, LINKTYPE_RAW, PROTO_TCP, TCP_ACK, TCP_SYN,
                               Ipv6Packet, internet_checksum, parse_ipv6, tcp_segment)
from ipv6covert.pcap_io import read_pcap, write_pcap
from ipv6covert.traffic import tcp_bytes


def test_header_fields_survive_serialization():
    p = make_udp(traffic_class=0xB9, flow_label=0xFEDCB, hop_limit=3)
    q = parse_ipv6(p.to_bytes(), ts_sec=p.ts_sec)
    assert q == p
    assert (q.dscp, q.ecn) == (0xB9 >> 2, 1)
    assert q.to_bytes()[:4] == bytes([0x6B, 0x9F, 0xED, 0xCB])


def test_declared_length_is_kept_even_when_inconsistent():
    p = make_udp(payload_length_declared=77)
    q = parse_ipv6(p.to_bytes())
    assert q.payload_length_declared == 77
    assert len(q.payload) == len(p.payload)


def test_parse_rejects_non_ipv6():
    v4 = bytes([0x45]) + bytes(39)
    with pytest.raises(NotIPv6Error):
        parse_ipv6(v4)
    with pytest.raises(TruncatedPacketError):
        parse_ipv6(make_udp().to_bytes()[:30])
    eth_v4 = bytes(12) + b"\x08\x00" + make_udp().to_bytes()
    with pytest.raises(NotIPv6Error):
        parse_ipv6(eth_v4, LINKTYPE_ETHERNET)


def test_field_range_validation():
    with pytest.raises(ValueError):
        make_udp(flow_label=1 << 20)
    with pytest.raises(ValueError):
        make_udp(hop_limit=256)


def test_roundtrip_raw_and_ethernet(tmp_path, background):
    for lt in (LINKTYPE_RAW, LINKTYPE_ETHERNET):
        pkts = [Ipv6Packet(**{**p.__dict__, "link_type": lt, "link_header": b""}) for p in background[:200]]
        path = tmp_path / f"lt{lt}.pcap"
        assert write_pcap(pkts, path) == 200
        read = read_pcap(path)
        assert read.link_type == lt and read.skipped == 0
        assert read.packets == pkts
        write_pcap(read.packets, tmp_path / "again.pcap")
        assert (tmp_path / "again.pcap").read_bytes() == path.read_bytes()


def _pcap(endian: str, records: list[bytes], link_type: int = LINKTYPE_RAW) -> bytes:
    out = struct.pack(endian + "IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, link_type)
    for i, frame in enumerate(records):
        out += struct.pack(endian + "IIII", 100 + i, 5, len(frame), len(frame)) + frame
    return out


def test_big_endian_files_read(tmp_path):
    p = make_udp()
    path = tmp_path / "be.pcap"
    path.write_bytes(_pcap(">", [p.to_bytes()]))
    (q,) = read_pcap(path).packets
    assert q.ip_bytes() == p.ip_bytes() and (q.ts_sec, q.ts_usec) == (100, 5)


def test_non_ipv6_records_skipped_and_counted(tmp_path):
    path = tmp_path / "mixed.pcap"
    path.write_bytes(_pcap("<", [make_udp().to_bytes(), bytes([0x45]) + bytes(30), make_udp(1).to_bytes()]))
    read = read_pcap(path)
    assert len(read.packets) == 2 and read.skipped == 1


def test_truncated_record_names_index(tmp_path):
    data = _pcap("<", [make_udp().to_bytes(), make_udp(1).to_bytes()])
    path = tmp_path / "cut.pcap"
    path.write_bytes(data[:-5])
    with pytest.raises(TruncatedRecordError) as exc:
        read_pcap(path)
    assert exc.value.index == 1


@pytest.mark.parametrize("magic", [0xA1B23C4D, 0x0A0D0D0A, 0xDEADBEEF])
def test_unsupported_formats_rejected(tmp_path, magic):
    path = tmp_path / "bad.pcap"
    path.write_bytes(struct.pack("<IHHiIII", magic, 2, 4, 0, 0, 65535, 101))
    with pytest.raises(PcapFormatError):
        read_pcap(path)


def test_snaplen_truncated_capture_keeps_wire_length(tmp_path):
    p = make_udp(payload=b"x" * 100)
    frame = p.to_bytes()[:60]
    data = _pcap("<", [])
    data += struct.pack("<IIII", 1, 0, len(frame), len(p.to_bytes())) + frame
    path = tmp_path / "snap.pcap"
    path.write_bytes(data)
    (q,) = read_pcap(path).packets
    assert q.wire_length == len(p.to_bytes())
    assert q.payload_length_declared == p.payload_length_declared
    write_pcap([q], tmp_path / "out.pcap")
    assert (tmp_path / "out.pcap").read_bytes() == data


def test_empty_capture_roundtrip(tmp_path):
    write_pcap([], tmp_path / "e.pcap")
    assert read_pcap(tmp_path / "e.pcap").packets == []


def test_flow_key_is_direction_sensitive():
    a = make_udp()
    b = make_udp(src_addr=DST, dst_addr=SRC)
    assert flow_key(a) != flow_key(b)
    assert flow_key(a).src_port == 40000 and flow_key(a).dst_port == 53


def test_last_tcp_seq_follows_segments():
    def tcp(seq, flags, data=b""):
        seg = tcp_bytes(SRC, DST, 1000, 80, seq, 0, flags, data)
        return Ipv6Packet(0, 0, len(seg), PROTO_TCP, 64, SRC, DST, seg)
    pkts = [tcp(4999, TCP_SYN), tcp(5000, TCP_ACK, b"abcd"), tcp(5004, TCP_ACK)]
    table = build_flow_table(pkts)
    (rec,) = table.values()
    assert rec.last_tcp_seq == 5004
    assert tcp_segment(pkts[0]).seq_space == 1


def test_serial_arithmetic_wraps():
    assert seq_after(5, 0xFFFFFFF0)
    assert not seq_after(0xFFFFFFF0, 5)


def test_internet_checksum_known_value():
    # RFC 1071 worked example
    assert internet_checksum(bytes.fromhex("0001f203f4f5f6f7")) == (~0xDDF2) & 0xFFFF
