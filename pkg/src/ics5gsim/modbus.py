"""Modbus/TCP subset: MBAP framing with function codes 0x03, 0x05 and 0x06."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import NamedTuple, Union

READ_HOLDING_REGISTERS = 0x03
WRITE_SINGLE_COIL = 0x05
WRITE_SINGLE_REGISTER = 0x06
SUPPORTED_FC = (READ_HOLDING_REGISTERS, WRITE_SINGLE_COIL, WRITE_SINGLE_REGISTER)
COIL_ON = 0xFF00
COIL_OFF = 0x0000
MBAP_HEADER = 7  # tid(2) pid(2) len(2) unit(1)

_MBAP = struct.Struct(">HHHB")
_HH = struct.Struct(">HH")


class ModbusError(Exception):
    pass


class Incomplete(ModbusError):
    """Not enough bytes yet; ``needed`` is the minimum total length required."""

    def __init__(self, needed: int):
        super().__init__(f"incomplete frame, need {needed} bytes")
        self.needed = needed


class Malformed(ModbusError):
    pass


@dataclass(frozen=True, slots=True)
class ReadHoldingRegistersReq:
    addr: int
    count: int
    function_code = READ_HOLDING_REGISTERS


@dataclass(frozen=True, slots=True)
class ReadHoldingRegistersResp:
    values: tuple
    function_code = READ_HOLDING_REGISTERS


@dataclass(frozen=True, slots=True)
class WriteSingleRegister:
    """Request and echo response share this layout; ``response`` records the direction."""

    addr: int
    value: int
    response: bool = False
    function_code = WRITE_SINGLE_REGISTER


@dataclass(frozen=True, slots=True)
class WriteSingleCoil:
    addr: int
    on: bool
    response: bool = False
    function_code = WRITE_SINGLE_COIL


@dataclass(frozen=True, slots=True)
class ExceptionResp:
    function_code: int  # original fc, without the 0x80 bit
    code: int


Pdu = Union[ReadHoldingRegistersReq, ReadHoldingRegistersResp, WriteSingleRegister, WriteSingleCoil,
            ExceptionResp]


def is_response(pdu: Pdu) -> bool:
    if isinstance(pdu, (ReadHoldingRegistersResp, ExceptionResp)):
        return True
    return bool(getattr(pdu, "response", False))


@dataclass(frozen=True, slots=True)
class MbapFrame:
    transaction_id: int
    unit_id: int
    pdu: Pdu
    protocol_id: int = 0

    @property
    def function_code(self) -> int:
        return self.pdu.function_code

    @property
    def is_response(self) -> bool:
        return is_response(self.pdu)

    @property
    def length(self) -> int:
        return 1 + _pdu_size(self.pdu)


def _u16(v, what):
    if not (isinstance(v, int) and 0 <= v <= 0xFFFF):
        raise ValueError(f"{what} must be a u16, got {v!r}")


def _pdu_size(pdu: Pdu) -> int:
    if isinstance(pdu, ReadHoldingRegistersResp):
        return 2 + 2 * len(pdu.values)
    if isinstance(pdu, ExceptionResp):
        return 2
    return 5


def encode_pdu(pdu: Pdu) -> bytes:
    if isinstance(pdu, ReadHoldingRegistersReq):
        _u16(pdu.addr, "addr")
        if not 1 <= pdu.count <= 125:
            raise ValueError("count must be in 1..125")
        return bytes((READ_HOLDING_REGISTERS,)) + _HH.pack(pdu.addr, pdu.count)
    if isinstance(pdu, ReadHoldingRegistersResp):
        if not 1 <= len(pdu.values) <= 125:
            raise ValueError("register count must be in 1..125")
        for v in pdu.values:
            _u16(v, "register value")
        n = len(pdu.values)
        return bytes((READ_HOLDING_REGISTERS, 2 * n)) + struct.pack(f">{n}H", *pdu.values)
    if isinstance(pdu, WriteSingleRegister):
        _u16(pdu.addr, "addr")
        _u16(pdu.value, "value")
        return bytes((WRITE_SINGLE_REGISTER,)) + _HH.pack(pdu.addr, pdu.value)
    if isinstance(pdu, WriteSingleCoil):
        _u16(pdu.addr, "addr")
        return bytes((WRITE_SINGLE_COIL,)) + _HH.pack(pdu.addr, COIL_ON if pdu.on else COIL_OFF)
    if isinstance(pdu, ExceptionResp):
        if pdu.function_code not in SUPPORTED_FC or not 0 <= pdu.code <= 0xFF:
            raise ValueError("invalid exception response")
        return bytes((pdu.function_code | 0x80, pdu.code))
    raise TypeError(f"not a PDU: {pdu!r}")


def encode(frame: MbapFrame) -> bytes:
    """Serialize to the big-endian Modbus/TCP wire layout."""
    if frame.protocol_id != 0:
        raise ValueError("protocol_id must be 0")
    _u16(frame.transaction_id, "transaction_id")
    if not 0 <= frame.unit_id <= 0xFF:
        raise ValueError("unit_id must be a u8")
    body = encode_pdu(frame.pdu)
    out = _MBAP.pack(frame.transaction_id, 0, 1 + len(body), frame.unit_id) + body
    assert len(out) == 6 + 1 + len(body)
    return out


def decode(data: bytes, response: bool = False) -> MbapFrame:
    """Inverse of :func:`encode`.

    Write requests and their echo responses are byte-identical, and a 0x03 request can be
    confused with a short 0x03 response, so the caller states the direction.
    """
    if len(data) < MBAP_HEADER + 1:
        raise Incomplete(MBAP_HEADER + 1)
    tid, pid, length, unit = _MBAP.unpack_from(data, 0)
    if pid != 0:
        raise Malformed(f"protocol_id {pid:#06x} != 0")
    if length < 2:
        raise Malformed(f"length field {length} too small")
    total = 6 + length
    if len(data) < total:
        raise Incomplete(total)
    if len(data) > total:
        raise Malformed(f"{len(data) - total} trailing bytes after frame")
    pdu_bytes = data[MBAP_HEADER:total]
    fc = pdu_bytes[0]
    n = len(pdu_bytes)
    if fc & 0x80:
        base = fc & 0x7F
        if base not in SUPPORTED_FC or n != 2:
            raise Malformed(f"bad exception response fc={fc:#04x}")
        return MbapFrame(tid, unit, ExceptionResp(base, pdu_bytes[1]))
    if fc not in SUPPORTED_FC:
        raise Malformed(f"unsupported function code {fc:#04x}")
    if fc == READ_HOLDING_REGISTERS and response:
        if n < 2:
            raise Malformed("truncated read response")
        bc = pdu_bytes[1]
        if bc == 0 or bc % 2 or bc > 250 or n != 2 + bc:
            raise Malformed("byte count mismatch")
        return MbapFrame(tid, unit, ReadHoldingRegistersResp(struct.unpack_from(f">{bc // 2}H", pdu_bytes, 2)))
    if n != 5:
        raise Malformed(f"fc {fc:#04x} expects 4 data bytes, got {n - 1}")
    a, b = _HH.unpack_from(pdu_bytes, 1)
    if fc == READ_HOLDING_REGISTERS:
        if not 1 <= b <= 125:
            raise Malformed(f"register count {b} out of range")
        return MbapFrame(tid, unit, ReadHoldingRegistersReq(a, b))
    if fc == WRITE_SINGLE_REGISTER:
        return MbapFrame(tid, unit, WriteSingleRegister(a, b, response))
    if b not in (COIL_ON, COIL_OFF):
        raise Malformed(f"coil value {b:#06x} not in {{0xFF00, 0x0000}}")
    return MbapFrame(tid, unit, WriteSingleCoil(a, b == COIL_ON, response))


class FlowKey(NamedTuple):
    src: str
    dst: str
    function_code: int
    direction: str  # "req" | "resp"

    @property
    def msg_class(self) -> tuple:
        return (self.function_code, self.direction)

    def label(self) -> str:
        return f"{self.src}>{self.dst}:{self.function_code}:{self.direction}"


class RequestLog:
    """Outstanding requests of one client, matched on (transaction_id, unit_id, fc)."""

    def __init__(self):
        self.pending: dict[tuple, tuple] = {}
        self.orphans: list[tuple] = []
        self.matched = 0

    def add(self, frame: MbapFrame, t: int = 0, info=None) -> None:
        self.pending[(frame.transaction_id, frame.unit_id, frame.function_code)] = (frame, t, info)

    def match_response(self, resp: MbapFrame, t: int = 0):
        """Return ``(request, t_sent, info)`` or ``None`` for an orphan (which is logged)."""
        entry = self.pending.pop((resp.transaction_id, resp.unit_id, resp.function_code), None)
        if entry is None:
            self.orphans.append((t, resp.transaction_id, resp.unit_id, resp.function_code))
            return None
        self.matched += 1
        return entry


class TransactionCounter:
    """Per-source transaction ids, monotone modulo 2**16."""

    def __init__(self, start: int = 0):
        self._next = start & 0xFFFF

    def __call__(self) -> int:
        tid = self._next
        self._next = (self._next + 1) & 0xFFFF
        return tid


# default register map --------------------------------------------------------
# PLC holding registers (unit 1 on PLC_A, unit 2 on PLC_B)
REG_TANK_LEVEL = 0       # mm
REG_BOTTLE_LEVEL = 1     # 0.1 litre
REG_BOTTLE_PRESENT = 2   # 0/1
REG_LEAK = 3             # 0/1
REG_STATUS = 4           # PLC_A: bit0 filling complete, bit1 safety halt
REG_HMI_MODE = 5         # 0 run, 1 halt, 2 half speed
PLC_REGISTER_COUNT = 6
# actuators
COIL_VALVE = 0           # valves: coil 0 open/closed
REG_BELT_MODE = 0        # motion controller: 0 stop, 1 half, 2 normal
BELT_CODES = {0: "stopped", 1: "half", 2: "normal"}
BELT_VALUES = {v: k for k, v in BELT_CODES.items()}
HMI_MODES = {0: "run", 1: "halt", 2: "half"}
UNIT_PLC_A, UNIT_PLC_B, UNIT_FIELD = 1, 2, 10

SCALE_TANK = 1000.0      # m -> mm
SCALE_BOTTLE = 10000.0   # m^3 -> 0.1 L


def clamp_u16(x: float) -> int:
    v = int(round(x))
    return 0 if v < 0 else (0xFFFF if v > 0xFFFF else v)
