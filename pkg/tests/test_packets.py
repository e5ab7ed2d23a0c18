import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qlinksim import packets as pk

KINDS = sorted(pk.FORMATS)


def random_fields(kind, rnd):
    out = {}
    for name, width in pk.field_widths(kind).items():
        out[name] = pk.HEADER if name == "header" else rnd.getrandbits(width)
    return out


def test_gen_round_trip():
    pkt = pk.make("GEN", qid=3, qseq=17)
    back = pk.decode("GEN", pk.encode(pkt))
    assert back == pkt
    assert back["header"] == pk.HEADER


def test_reply_ot_001_is_queue_mismatch():
    pkt = pk.make("REPLY", ot=pk.reply_ot(error=0b001), seq=9)
    back = pk.decode("REPLY", pk.encode(pkt))
    assert pk.split_reply_ot(back["ot"]) == (0, pk.ERR_QUEUE_MISMATCH)


@pytest.mark.parametrize("outcome", [0, 1, 2])
def test_reply_ot_outcomes(outcome):
    assert pk.split_reply_ot(pk.reply_ot(outcome=outcome)) == (outcome, 0)


@pytest.mark.parametrize("err", [pk.ERR_QUEUE_MISMATCH, pk.ERR_TIME_MISMATCH, pk.ERR_NO_MESSAGE_OTHER])
def test_reply_ot_errors_fit_four_bits(err):
    ot = pk.reply_ot(error=err)
    assert ot < 16
    assert pk.split_reply_ot(ot) == (0, err)


def test_qseq_overflow_rejected():
    with pytest.raises(pk.CodecError):
        pk.encode(pk.make("GEN", qid=1, qseq=256))


def test_negative_field_rejected():
    with pytest.raises(pk.CodecError):
        pk.encode(pk.make("GEN", qid=-1))


def test_unknown_field_and_kind_rejected():
    with pytest.raises(pk.CodecError):
        pk.make("GEN", colour=1)
    with pytest.raises(pk.CodecError):
        pk.encode(pk.Packet("GEN", {"qid": 1, "colour": 2}))
    with pytest.raises(pk.CodecError):
        pk.make("PING")


@pytest.mark.parametrize("kind,bits", [
    ("GEN", 32), ("REPLY", 64), ("EXPIRE", 96), ("MEM", 32),
    ("DQP", 10 + 2 + 8 + 4 + 8 + 64 + 64 + 32 + 16 + 16 + 16 + 4 + 12 + 32 + 32 + 4 + 28),
])
def test_layout_widths(kind, bits):
    assert pk.bit_length(kind) == bits


def test_declared_field_widths():
    w = pk.field_widths("REPLY")
    assert w == {"header": 12, "ot": 4, "seq": 16, "qid": 4, "qseq": 8, "qidp": 4, "qseqp": 8}
    d = pk.field_widths("DQP")
    assert (d["opt"], d["ft"], d["cseq"], d["schedule_cycle"], d["min_fidelity"]) == (10, 2, 8, 64, 32)


def test_big_endian_bit_order():
    # header 0x5A1, qid 0x3, qseq 0x11, reserved 0
    assert pk.encode(pk.make("GEN", qid=3, qseq=0x11)) == bytes([0x5A, 0x13, 0x11, 0x00])


def test_reserved_bits_zero_on_encode_ignored_on_decode():
    raw = bytearray(pk.encode(pk.make("GEN", qid=2, qseq=5)))
    assert raw[3] == 0
    raw[3] = 0xFF
    assert pk.decode("GEN", bytes(raw)) == pk.make("GEN", qid=2, qseq=5)


def test_bad_header_rejected():
    raw = bytearray(pk.encode(pk.make("GEN")))
    raw[0] ^= 0x80
    with pytest.raises(pk.CodecError):
        pk.decode("GEN", bytes(raw))


def test_crc_detects_corruption():
    raw = bytearray(pk.encode(pk.make("POLL", gen=1, qid=4, qseq=9, pseq=100, params=7)))
    raw[2] ^= 0x01
    with pytest.raises(pk.CodecError):
        pk.decode("POLL", bytes(raw))


@pytest.mark.parametrize("kind", KINDS)
def test_wrong_length_buffers_raise_structured_error(kind):
    good = pk.encode(pk.make(kind))
    for bad in (b"", good[:-1], good + b"\x00", good[: len(good) // 2]):
        with pytest.raises(pk.CodecError):
            pk.decode(kind, bad)
    with pytest.raises(pk.CodecError):
        pk.decode(kind, "not bytes")


@pytest.mark.property
@pytest.mark.parametrize("kind", KINDS)
def test_round_trip_fuzz_1e5_per_variant(kind):
    rnd = random.Random(f"fuzz/{kind}")
    widths = pk.field_widths(kind)
    for _ in range(100_000):
        fields = {n: pk.HEADER if n == "header" else rnd.getrandbits(w) for n, w in widths.items()}
        pkt = pk.Packet(kind, fields)
        data = pk.encode(pkt)
        assert len(data) == pk.byte_length(kind)
        assert pk.decode(kind, data).fields == fields


@pytest.mark.property
@given(st.sampled_from(KINDS), st.binary(min_size=0, max_size=64))
def test_arbitrary_bytes_never_crash_decoder(kind, data):
    try:
        pk.decode(kind, data)
    except pk.CodecError:
        pass


@given(st.floats(0.0, 1.0))
def test_fixed_point_round_trip_within_resolution(x):
    for bits in (16, 32):
        v = pk.fixed_point(x, bits)
        assert 0 <= v < 1 << bits
        assert abs(pk.from_fixed_point(v, bits) - x) <= 1.0 / (1 << bits)


def test_fixed_point_rejects_out_of_range():
    with pytest.raises(pk.CodecError):
        pk.fixed_point(1.5, 16)
