import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_udp
from ipv6covert.channels import (BINARY, TERNARY, ChannelKind, channel_capacity, decode_hop_limit,
                                 embed_address, embed_flowlabel, embed_hoplimit, embed_length,
                                 extract_address, extract_flowlabel, extract_hoplimit, extract_length,
                                 message_to_symbols, symbols_to_message)
from ipv6covert.crypto import SharedSecret
from ipv6covert.errors import CapacityError, IneligibleCarrierError
from ipv6covert.packet import PROTO_TCP, Ipv6Packet

messages = st.binary(min_size=1, max_size=48)
secrets = st.builds(SharedSecret, st.binary(min_size=1, max_size=32),
                    st.permutations(list(range(16))).map(tuple), st.integers(0, 255))


def carriers(n):
    return [make_udp(i) for i in range(n)]


def changed_fields(a: Ipv6Packet, b: Ipv6Packet) -> set:
    return {k for k in a.__dict__ if getattr(a, k) != getattr(b, k)}


@settings(max_examples=100)
@given(messages, secrets, st.randoms(use_true_random=False))
def test_flowlabel_roundtrip_with_block_shuffles(msg, secret, rnd):
    n = math.ceil(len(msg) / 2)
    pkts = embed_flowlabel(carriers(n), range(n), msg, secret)
    shuffled = []
    for start in range(0, n, 16):
        block = pkts[start:start + 16]
        rnd.shuffle(block)
        shuffled.extend(block)
    assert extract_flowlabel(shuffled, secret, len(msg)) == msg


@settings(max_examples=100)
@given(messages, secrets)
def test_length_roundtrip(msg, secret):
    n = math.ceil(len(msg) / 2)
    pkts = embed_length(carriers(n), range(n), msg, secret)
    assert extract_length(pkts, secret, len(msg)) == msg


@settings(max_examples=100)
@given(messages, secrets)
def test_address_roundtrip(msg, secret):
    n = math.ceil(len(msg) / 8)
    src = carriers(n)
    pkts = embed_address(src, range(n), msg, secret)
    assert extract_address(pkts, secret, len(msg)) == msg
    assert all(p.src_addr[:8] == q.src_addr[:8] for p, q in zip(src, pkts))


@settings(max_examples=100)
@given(messages, st.sampled_from([BINARY, TERNARY]), st.lists(st.integers(0, 31), min_size=600, max_size=600))
def test_hoplimit_roundtrip_under_decrements(msg, alphabet, hops):
    symbols = message_to_symbols(msg, alphabet)
    pkts = embed_hoplimit(carriers(len(symbols)), range(len(symbols)), symbols, alphabet)
    aged = [p.__class__(**{**p.__dict__, "hop_limit": p.hop_limit - h}) for p, h in zip(pkts, hops)]
    got = extract_hoplimit(aged, alphabet)
    assert symbols_to_message(got, len(msg), alphabet) == msg


def test_only_channel_field_changes(secret):
    src = carriers(8)
    assert changed_fields(src[0], embed_flowlabel(src, range(8), b"ab", secret)[0]) == {"flow_label"}
    assert changed_fields(src[0], embed_length(src, range(8), b"ab", secret)[0]) == {"payload_length_declared"}
    assert changed_fields(src[0], embed_address(src, range(8), b"ab", secret)[0]) == {"src_addr"}
    assert changed_fields(src[0], embed_hoplimit(src, range(8), [1], BINARY)[0]) == {"hop_limit"}
    assert src == carriers(8)


def test_flowlabel_layout(secret):
    (p,) = embed_flowlabel(carriers(1), [0], b"x", secret)
    assert p.flow_label >> 16 == 0xE
    assert (p.flow_label & 0xFFFF).to_bytes(2, "big") == bytes(a ^ b for a, b in zip(
        b"x\x00", secret.new_stream().keystream(2)))


def test_odd_message_pads_with_zero_byte(secret):
    pkts = embed_flowlabel(carriers(2), range(2), b"abc", secret)
    assert extract_flowlabel(pkts, secret) == b"abc\x00"


def test_flowlabel_refuses_tcp(secret):
    tcp = make_udp(next_header=PROTO_TCP)
    with pytest.raises(IneligibleCarrierError):
        embed_flowlabel([tcp], [0], b"hi", secret)


def test_capacity_errors(secret):
    with pytest.raises(CapacityError):
        embed_length(carriers(2), range(2), b"12345", secret)
    with pytest.raises(CapacityError):
        extract_address(carriers(1), secret, 9)
    with pytest.raises(CapacityError):
        symbols_to_message([0] * 7, 1, BINARY)


def test_wrong_key_gives_garbage(secret):
    msg = b"attack at dawn!!"
    n = len(msg) // 2
    other = SharedSecret(b"another-key")
    assert extract_length(embed_length(carriers(n), range(n), msg, secret), other, len(msg)) != msg
    assert extract_flowlabel(embed_flowlabel(carriers(n), range(n), msg, secret), other, len(msg)) != msg


def test_length_channel_is_order_dependent(secret):
    msg = b"0123456789abcdef"
    pkts = embed_length(carriers(8), range(8), msg, secret)
    assert extract_length(pkts[::-1], secret, len(msg)) != msg


@pytest.mark.parametrize("value,binary,ternary", [
    (64, 0, 0), (33, 0, 0), (32, None, None), (96, 0, 0), (97, 1, 1), (128, 1, 1),
    (191, 1, 1), (192, None, 2), (255, None, 2), (224, None, 2),
])
def test_hop_limit_bands(value, binary, ternary):
    assert decode_hop_limit(value, BINARY) == binary
    assert decode_hop_limit(value, TERNARY) == ternary


def test_ternary_uses_fewer_carriers():
    msg = bytes(range(20))
    assert len(message_to_symbols(msg, TERNARY)) < len(message_to_symbols(msg, BINARY))
    assert len(message_to_symbols(b"\xff", TERNARY)) == 6   # 3**6 = 729 >= 256


def test_channel_capacity():
    assert channel_capacity(ChannelKind.FLOWLABEL, 10) == 20
    assert channel_capacity(ChannelKind.LENGTH, 10) == 20
    assert channel_capacity(ChannelKind.ADDRESS, 10) == 80
    assert channel_capacity(ChannelKind.HOPLIMIT, 10) == 10
    assert channel_capacity(ChannelKind.HOPLIMIT, 10, TERNARY) == math.floor(10 * math.log2(3))
    with pytest.raises(ValueError):
        channel_capacity(ChannelKind.NORMAL, 1)


def test_distinct_indices_required(secret):
    with pytest.raises(ValueError):
        embed_length(carriers(3), [0, 0], b"abcd", secret)


def test_randomized_flowlabel_across_block_boundaries(secret):
    rnd = random.Random(5)
    msg = bytes(rnd.randrange(256) for _ in range(70))
    pkts = embed_flowlabel(carriers(35), range(35), msg, secret)
    blocks = [pkts[i:i + 16] for i in range(0, 35, 16)]
    for b in blocks:
        rnd.shuffle(b)
    assert extract_flowlabel([p for b in blocks for p in b], secret, 70) == msg
