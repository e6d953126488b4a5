"""Reliable in-order message transport over a :class:`~ics5gsim.channel.Channel`.

Link-layer failures (HARQ exhaustion, queue overflow, suppression) are retried after an
exponentially backed-off timeout. Receivers release messages per (link, src, dst) pair in send
order. Every link-layer attempt is recorded for ``packets.jsonl``.
"""

from __future__ import annotations

from typing import Callable

from .channel import Channel
from .engine import NS_PER_MS, SimEngine
from .modbus import READ_HOLDING_REGISTERS


class Message:
    __slots__ = ("src", "dst", "adu", "response", "fc", "tid", "origin", "t_orig", "seq", "size",
                 "link_src", "pair")

    def __init__(self, src, dst, adu: bytes, response: bool, origin: str, t_orig: int, link_src: str):
        self.src = src
        self.dst = dst
        self.adu = adu
        self.response = response
        self.fc = adu[7] & 0x7F if len(adu) > 7 else 0
        self.tid = (adu[0] << 8 | adu[1]) if len(adu) > 1 else 0
        self.origin = origin
        self.t_orig = t_orig
        self.link_src = link_src
        self.seq = -1
        self.size = 0
        self.pair = None

    def copy_with(self, adu: bytes, origin: str) -> "Message":
        m = Message(self.src, self.dst, adu, self.response, origin, self.t_orig, self.link_src)
        m.seq, m.size, m.pair = self.seq, self.size, self.pair
        return m


class _Pair:
    __slots__ = ("next_seq", "expected", "buffer", "abandoned")

    def __init__(self):
        self.next_seq = 0
        self.expected = 0
        self.buffer: dict[int, Message] = {}
        self.abandoned: set[int] = set()


# packet record tuple layout
R_T_SEND, R_T_RECV, R_SRC, R_DST, R_SIZE, R_FC, R_DIR, R_TID, R_RETX, R_SINR, R_DROP, R_SEQ, R_ATTEMPT, \
    R_T_ORIG, R_ORIGIN, R_ADU = range(16)


class Network:
    def __init__(self, engine: SimEngine, channel: Channel):
        self.engine = engine
        self.channel = channel
        cp = channel.p
        self.header_bytes = cp.header_bytes
        self.rto0 = int(cp.rto_initial_ms * NS_PER_MS)
        self.rto_max = int(cp.rto_max_ms * NS_PER_MS)
        self.max_attempts = cp.max_transport_attempts
        self.endpoints: dict[str, Callable[[Message], None]] = {}
        self.filters: list[Callable] = []
        self.taps: list[Callable[[Message, int], None]] = []
        self.records: list[tuple] = []
        self._pairs: dict[tuple, _Pair] = {}
        self.abandoned = 0

    def attach(self, name: str, handler: Callable[[Message], None]) -> None:
        self.endpoints[name] = handler

    def send(self, src: str, dst: str, adu: bytes, response: bool, origin: str = "device",
             link_src: str | None = None) -> Message:
        link_src = link_src or src
        msg = Message(src, dst, adu, response, origin, self.engine.now, link_src)
        key = (link_src, src, dst)
        pair = self._pairs.get(key)
        if pair is None:
            pair = self._pairs[key] = _Pair()
        msg.pair = pair
        msg.seq = pair.next_seq
        pair.next_seq += 1
        msg.size = len(adu) + self.header_bytes
        self._attempt(msg, 1)
        return msg

    def _attempt(self, msg: Message, attempt: int) -> None:
        now = self.engine.now
        extra = 0
        for f in self.filters:
            action = f(msg, now)
            if action is None:
                continue
            if action[0] == "drop":
                self._record(msg, now, None, 0, None, action[1], attempt)
                self._failed(msg, attempt, now)
                return
            if action[0] == "modify":
                msg = msg.copy_with(action[1], action[3] if len(action) > 3 else "mitm")
                extra += action[2]
        out = self.channel.transmit(msg.link_src, msg.dst, msg.size, now)
        if out.delivered:
            t_recv = out.t_done + extra
            self._record(msg, now, t_recv, out.retx_count, out.sinr, "none", attempt)
            self.engine.schedule(t_recv, msg.dst, self._arrive, msg)
        else:
            self._record(msg, now, None, out.retx_count, out.sinr, out.drop_reason, attempt)
            self._failed(msg, attempt, out.t_done)
        for tap in self.taps:
            tap(msg, now)

    def _record(self, msg, t_send, t_recv, retx, sinr, drop, attempt):
        self.records.append((t_send, t_recv, msg.src, msg.dst, msg.size, msg.fc,
                             "resp" if msg.response else "req", msg.tid, retx, sinr, drop, msg.seq, attempt,
                             msg.t_orig, msg.origin, msg.adu))

    def _failed(self, msg: Message, attempt: int, t_fail: int) -> None:
        if attempt >= self.max_attempts:
            self.abandoned += 1
            msg.pair.abandoned.add(msg.seq)
            self.engine.schedule(max(t_fail, self.engine.now), msg.dst, self._drain, msg.pair, msg.dst)
            return
        rto = min(self.rto0 << (attempt - 1), self.rto_max)
        self.engine.schedule(max(t_fail, self.engine.now) + rto, msg.link_src, self._retransmit, msg, attempt + 1)

    def _retransmit(self, msg: Message, attempt: int) -> None:
        self._attempt(msg, attempt)

    def _arrive(self, msg: Message) -> None:
        pair = msg.pair
        if msg.seq < pair.expected:
            return
        pair.buffer[msg.seq] = msg
        self._drain(pair, msg.dst)

    def _drain(self, pair: _Pair, dst: str) -> None:
        handler = self.endpoints.get(dst)
        buf = pair.buffer
        while True:
            e = pair.expected
            if e in buf:
                m = buf.pop(e)
                pair.expected = e + 1
                if handler is not None:
                    handler(m)
            elif e in pair.abandoned:
                pair.abandoned.discard(e)
                pair.expected = e + 1
            else:
                break


def is_read(fc: int) -> bool:
    return fc == READ_HOLDING_REGISTERS
