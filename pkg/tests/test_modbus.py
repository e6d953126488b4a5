import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ics5gsim import modbus as mb

u16 = st.integers(0, 0xFFFF)
u8 = st.integers(0, 0xFF)

pdus = st.one_of(
    st.builds(mb.ReadHoldingRegistersReq, u16, st.integers(1, 125)),
    st.builds(mb.ReadHoldingRegistersResp, st.lists(u16, min_size=1, max_size=125).map(tuple)),
    st.builds(mb.WriteSingleRegister, u16, u16, st.booleans()),
    st.builds(mb.WriteSingleCoil, u16, st.booleans(), st.booleans()),
    st.builds(mb.ExceptionResp, st.sampled_from(mb.SUPPORTED_FC), u8),
)
frames = st.builds(mb.MbapFrame, u16, u8, pdus)


def random_frame(rng: random.Random) -> mb.MbapFrame:
    kind = rng.randrange(5)
    if kind == 0:
        pdu = mb.ReadHoldingRegistersReq(rng.randrange(1 << 16), rng.randint(1, 125))
    elif kind == 1:
        pdu = mb.ReadHoldingRegistersResp(tuple(rng.randrange(1 << 16) for _ in range(rng.randint(1, 125))))
    elif kind == 2:
        pdu = mb.WriteSingleRegister(rng.randrange(1 << 16), rng.randrange(1 << 16), rng.random() < 0.5)
    elif kind == 3:
        pdu = mb.WriteSingleCoil(rng.randrange(1 << 16), rng.random() < 0.5, rng.random() < 0.5)
    else:
        pdu = mb.ExceptionResp(rng.choice(mb.SUPPORTED_FC), rng.randrange(256))
    return mb.MbapFrame(rng.randrange(1 << 16), rng.randrange(256), pdu)


def roundtrip_count(n: int, seed: int = 7) -> int:
    rng = random.Random(seed)
    ok = 0
    for _ in range(n):
        f = random_frame(rng)
        if mb.decode(mb.encode(f), response=f.is_response) == f:
            ok += 1
    return ok


def test_roundtrip_ten_thousand_frames():
    assert roundtrip_count(10_000) == 10_000


@settings(max_examples=400, deadline=None)
@given(frames)
def test_roundtrip_property(frame):
    assert mb.decode(mb.encode(frame), response=frame.is_response) == frame


@settings(max_examples=1500, deadline=None)
@given(st.binary(max_size=300), st.booleans())
def test_fuzz_decode_only_raises_modbus_errors(data, response):
    try:
        mb.decode(data, response=response)
    except mb.ModbusError:
        pass


@settings(max_examples=400, deadline=None)
@given(frames, st.integers(0, 40), u8)
def test_mutated_frames_never_crash(frame, pos, byte):
    raw = bytearray(mb.encode(frame))
    raw[pos % len(raw)] = byte
    try:
        mb.decode(bytes(raw), response=frame.is_response)
    except mb.ModbusError:
        pass


def test_canonical_read_request_layout():
    # tid=1, pid=0, len=6, unit=1, fc=3, addr=0, count=1
    raw = mb.encode(mb.MbapFrame(1, 1, mb.ReadHoldingRegistersReq(0, 1)))
    assert raw.hex(" ") == "00 01 00 00 00 06 01 03 00 00 00 01"


def test_coil_encoding():
    on = mb.encode(mb.MbapFrame(0x1234, 10, mb.WriteSingleCoil(0, True)))
    off = mb.encode(mb.MbapFrame(0x1234, 10, mb.WriteSingleCoil(0, False)))
    assert on == bytes.fromhex("123400000006 0a 05 0000 ff00".replace(" ", ""))
    assert off[-2:] == b"\x00\x00"


def test_read_response_layout():
    raw = mb.encode(mb.MbapFrame(2, 1, mb.ReadHoldingRegistersResp((0x000A, 0x0102))))
    assert raw == bytes([0, 2, 0, 0, 0, 7, 1, 3, 4, 0, 0x0A, 1, 2])


def test_incomplete_reports_needed_length():
    raw = mb.encode(mb.MbapFrame(1, 1, mb.WriteSingleRegister(3, 99)))
    with pytest.raises(mb.Incomplete) as e:
        mb.decode(raw[:5])
    assert e.value.needed == 8
    with pytest.raises(mb.Incomplete) as e:
        mb.decode(raw[:-1])
    assert e.value.needed == len(raw)


@pytest.mark.parametrize("raw, why", [
    ("0001 0001 0006 01 03 0000 0001", "pid"),
    ("0001 0000 0006 01 07 0000 0001", "fc"),
    ("0001 0000 0006 01 05 0000 1234", "coil"),
    ("0001 0000 0006 01 03 0000 0000", "count"),
    ("0001 0000 0006 01 03 0000 0001 ff", "trailing"),
])
def test_malformed(raw, why):
    with pytest.raises(mb.Malformed):
        mb.decode(bytes.fromhex(raw.replace(" ", "")))


def test_read_response_byte_count_mismatch():
    with pytest.raises(mb.Malformed):
        mb.decode(bytes.fromhex("0001000000070103040000000001"), response=True)


def test_encode_rejects_out_of_range():
    with pytest.raises(ValueError):
        mb.encode(mb.MbapFrame(1 << 16, 1, mb.ReadHoldingRegistersReq(0, 1)))
    with pytest.raises(ValueError):
        mb.encode(mb.MbapFrame(1, 1, mb.ReadHoldingRegistersReq(0, 126)))
    with pytest.raises(ValueError):
        mb.encode(mb.MbapFrame(1, 1, mb.WriteSingleRegister(0, -1)))


def test_request_log_matches_and_records_orphans():
    log = mb.RequestLog()
    req = mb.MbapFrame(5, 1, mb.ReadHoldingRegistersReq(0, 2))
    log.add(req, 100, "poll")
    resp = mb.MbapFrame(5, 1, mb.ReadHoldingRegistersResp((1, 2)))
    assert log.match_response(resp, 150) == (req, 100, "poll")
    assert log.match_response(resp, 160) is None
    assert log.orphans == [(160, 5, 1, 3)]


def test_transaction_counter_wraps():
    c = mb.TransactionCounter(0xFFFE)
    assert [c(), c(), c()] == [0xFFFE, 0xFFFF, 0]
