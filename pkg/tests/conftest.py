import pytest
from hypothesis import settings

from ipv6covert.crypto import SharedSecret
from ipv6covert.packet import PROTO_UDP, Ipv6Packet
from ipv6covert.traffic import generate_background_packets, udp_bytes

# Timing varies on shared CI machines; correctness is what the properties check.
settings.register_profile("repo", deadline=None)
settings.load_profile("repo")

SRC = bytes.fromhex("20010db8000000010000000000000001")
DST = bytes.fromhex("20010db8000000020000000000000002")


def make_udp(i: int = 0, payload: bytes = b"data", **kw) -> Ipv6Packet:
    seg = udp_bytes(SRC, DST, 40000 + i, 53, payload)
    fields = dict(traffic_class=0, flow_label=0x12345, payload_length_declared=len(seg),
                  next_header=PROTO_UDP, hop_limit=57, src_addr=SRC, dst_addr=DST,
                  payload=seg, ts_sec=1_600_000_000 + i)
    fields.update(kw)
    return Ipv6Packet(**fields)


@pytest.fixture(scope="session")
def background():
    return generate_background_packets(2000, seed=11)


@pytest.fixture
def secret():
    return SharedSecret(b"test-key-0123")
