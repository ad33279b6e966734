import random

import numpy as np

from ipv6covert.packet import PROTO_TCP
from ipv6covert.profile import PROTOCOL_CLASSES, profile_capture, write_profile
from ipv6covert.traffic import generate_background_packets


def test_empty_capture():
    r = profile_capture([])
    assert r.packet_count == 0
    assert r.hop_limit_histogram.shape == (256,) and not r.hop_limit_histogram.any()
    assert r.dscp_histogram.shape == (64,) and not r.dscp_histogram.any()
    assert r.ecn_histogram.shape == (4,) and not r.ecn_histogram.any()


def test_histogram_totals(background):
    r = profile_capture(background)
    n = len(background)
    assert r.hop_limit_histogram.sum() == r.dscp_histogram.sum() == r.ecn_histogram.sum() == n
    assert sum(s.packets for s in r.flowlabel_stats.values()) == n
    assert set(r.flowlabel_stats) == set(PROTOCOL_CLASSES)


def test_permutation_invariance(background):
    shuffled = list(background)
    random.Random(1).shuffle(shuffled)
    a, b = profile_capture(background), profile_capture(shuffled)
    assert np.array_equal(a.hop_limit_histogram, b.hop_limit_histogram)
    assert np.array_equal(a.dscp_histogram, b.dscp_histogram)
    assert a.flowlabel_stats == b.flowlabel_stats


def test_tcp_flow_labels_constant(background):
    tcp = [p for p in background if p.next_header == PROTO_TCP]
    r = profile_capture(tcp)
    assert r.flowlabel_stats["tcp"].fraction_constant_per_flow == 1.0
    assert r.flowlabel_stats["tcp"].flows > 0


def test_udp_labels_more_random_than_tcp(background):
    s = profile_capture(background).flowlabel_stats
    assert s["udp"].entropy_bits > s["tcp"].entropy_bits
    assert s["udp"].fraction_zero < s["tcp"].fraction_zero


def test_hop_limit_clusters():
    r = profile_capture(generate_background_packets(10_000, seed=42))
    h = r.hop_limit_histogram
    assert 48 <= int(np.argmax(h[:100])) <= 60
    assert 109 <= int(np.argmax(h[100:200])) + 100 <= 114
    assert r.hop_limit_mass() >= 0.95


def test_written_tables(tmp_path, background):
    paths = write_profile(profile_capture(background), tmp_path / "out")
    names = sorted(p.split("/")[-1] for p in paths)
    assert names == ["dscp_histogram.csv", "ecn_histogram.csv", "flowlabel_stats.csv",
                     "hop_limit_histogram.csv", "summary.txt"]
    hop = (tmp_path / "out" / "hop_limit_histogram.csv").read_text().splitlines()
    assert hop[0] == "hop_limit,count" and len(hop) == 257
    assert sum(int(line.split(",")[1]) for line in hop[1:]) == len(background)
