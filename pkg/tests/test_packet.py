import random

import pytest

from matpipe import packet as pkt


def tree_layout(feature_count=2, value_bits=4, code_bits=34, tree_slots=1, kind="dt"):
    return pkt.PacketLayout(
        kind=kind,
        feature_count=feature_count,
        value_bits=value_bits,
        code_bits=code_bits,
        tree_slots=tree_slots,
    )


def svm_layout(feature_count=2, value_bits=4, acc_bits=32, hyperplanes=1):
    return pkt.PacketLayout(
        kind="svm",
        feature_count=feature_count,
        value_bits=value_bits,
        acc_bits=acc_bits,
        hyperplanes=hyperplanes,
    )


def test_header_fields_pack_msb_first():
    data = pkt.encode_header(pkt.BasicHeader(packet_id=1))
    assert data == bytes.fromhex("00100000")


def test_header_all_fields_round_trip():
    h = pkt.BasicHeader(packet_id=0xABC, ptype=1, mid=0x3, vid=0x7, rslt=0x9, rid=0xE)
    assert pkt.decode_header(pkt.encode_header(h)) == h
    assert pkt.encode_header(h) == bytes.fromhex("ABC1379E")


def test_response_is_exactly_four_bytes():
    req = pkt.BasicHeader(packet_id=5, mid=1, vid=2, rid=3)
    resp = pkt.make_response(req, rslt=2)
    data = pkt.encode(resp)
    assert len(data) == 4
    back = pkt.decode(data)
    assert back.header.ptype == pkt.TYPE_RESPONSE
    assert back.header.rslt == 2
    assert back.header.packet_id == 5
    assert back.header.rid == 3


def test_unknown_type_nibble_rejected():
    data = bytearray(pkt.encode_header(pkt.BasicHeader(packet_id=1)))
    data[1] = (data[1] & 0xF0) | 0x07  # type nibble 7
    with pytest.raises(pkt.PacketError, match="unknown packet type"):
        pkt.decode_header(bytes(data))


def test_truncated_buffers_rejected():
    layout = tree_layout()
    req = pkt.make_request(1, 0, 0, 0, (3, 9), layout)
    data = pkt.encode(req, layout)
    with pytest.raises(pkt.PacketError, match="truncated|must be"):
        pkt.decode(data[:-1], layout)
    with pytest.raises(pkt.PacketError, match="truncated"):
        pkt.decode_header(b"\x00\x10")
    with pytest.raises(pkt.PacketError, match="must be exactly 4"):
        pkt.decode(pkt.encode(pkt.make_response(req.header, 1)) + b"\x00")


def test_request_sections_are_byte_aligned():
    layout = tree_layout(feature_count=3, value_bits=5, code_bits=10, tree_slots=2)
    # features: 15 bits -> 2 bytes; intermediates: 20 + 10 + 8 = 38 bits -> 5 bytes.
    assert layout.feature_section_bytes() == 2
    assert layout.intermediate_section_bytes() == 5
    assert layout.request_bytes() == 4 + 2 + 5
    req = pkt.make_request(9, 1, 1, 0, (31, 0, 17), layout)
    data = pkt.encode(req, layout)
    assert len(data) == layout.request_bytes()
    assert pkt.decode(data, layout) == req


def test_field_overflow_rejected():
    layout = tree_layout(value_bits=4)
    req = pkt.make_request(1, 0, 0, 0, (16, 0), layout)
    with pytest.raises(pkt.PacketError, match="feature 0"):
        pkt.encode(req, layout)
    with pytest.raises(pkt.PacketError, match="packet_id"):
        pkt.encode_header(pkt.BasicHeader(packet_id=1 << 12))


def test_svm_accumulators_sign_extend():
    layout = svm_layout(acc_bits=16, hyperplanes=3)
    base = pkt.make_request(7, 2, 1, 4, (3, 9), layout)
    req = pkt.InferencePacket(
        header=base.header, features=base.features, accumulators=(-64, 32767, -32768)
    )
    back = pkt.decode(pkt.encode(req, layout), layout)
    assert back.accumulators == (-64, 32767, -32768)


def test_random_round_trips_tree_and_svm():
    rng = random.Random(0xACE)
    for _ in range(400):
        kind = rng.choice(["dt", "rf", "svm"])
        f = rng.randint(1, 12)
        wf = rng.randint(1, 16)
        if kind == "svm":
            layout = svm_layout(f, wf, rng.choice([8, 16, 24, 32]), rng.randint(1, 4))
        else:
            layout = tree_layout(f, wf, rng.randint(3, 34), rng.randint(1, 4), kind)
        header = pkt.BasicHeader(
            packet_id=rng.randrange(1 << 12),
            ptype=pkt.TYPE_REQUEST,
            mid=rng.randrange(16),
            vid=rng.randrange(16),
            rslt=0,
            rid=rng.randrange(16),
        )
        features = tuple(rng.randrange(1 << wf) for _ in range(f))
        if kind == "svm":
            half = 1 << (layout.acc_bits - 1)
            p = pkt.InferencePacket(
                header=header,
                features=features,
                accumulators=tuple(
                    rng.randrange(-half, half) for _ in range(layout.hyperplanes)
                ),
            )
        else:
            p = pkt.InferencePacket(
                header=header,
                features=features,
                code_0=rng.randrange(1 << layout.code_bits),
                code_1=rng.randrange(1 << layout.code_bits),
                f0=rng.randrange(1 << wf),
                f1=rng.randrange(1 << wf),
                slots=tuple(rng.randrange(16) for _ in range(layout.tree_slots)),
            )
        data = pkt.encode(p, layout)
        assert len(data) == layout.request_bytes()
        assert pkt.decode(data, layout) == p
