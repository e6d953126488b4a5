"""Insider network attacks, jamming and passive spectrum reconnaissance."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels as K
from ._jit import JIT_ENABLED
from . import modbus as mb
from .channel import Channel, Jammer, NodeRadio, distance, path_loss
from .engine import NS_PER_MS, NS_PER_S, SimEngine
from .network import Message, Network

NO_CYCLE = "no cycle found"


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    start: float
    duration: float
    params: tuple = ()

    @property
    def end(self) -> float:
        return self.start + self.duration

    def active(self, t_ns: int) -> bool:
        return self.duration > 0 and self.start * NS_PER_S <= t_ns < self.end * NS_PER_S


def five_variant_schedule(kind: str, starts, durations, **params) -> list[AttackSpec]:
    if any(b <= a for a, b in zip(durations, durations[1:])):
        raise ValueError("variant durations must be strictly increasing")
    return [AttackSpec(kind, float(s), float(d), tuple(sorted(params.items())))
            for s, d in zip(starts, durations)]


def _any_active(specs, t_ns: int) -> bool:
    return any(s.active(t_ns) for s in specs)


def dos_flood(engine: SimEngine, net: Network, specs, rate: float, target: str = "plc_a",
              identity: str = "hmi", link: str = "insider") -> list[int]:
    """Inject valid read requests with a spoofed HMI identity at ``rate`` pkt/s inside each window."""
    counter = mb.TransactionCounter(0x8000)
    sent: list[int] = []
    unit = mb.UNIT_PLC_A if target == "plc_a" else mb.UNIT_PLC_B
    period = max(int(NS_PER_S / rate), 1)

    def fire(end_ns: int) -> None:
        frame = mb.MbapFrame(counter(), unit, mb.ReadHoldingRegistersReq(0, mb.PLC_REGISTER_COUNT))
        net.send(identity, target, mb.encode(frame), False, "attack_dos", link_src=link)
        sent.append(engine.now)
        nxt = engine.now + period
        if nxt < end_ns:
            engine.schedule(nxt, "adversary", fire, end_ns)

    for s in specs:
        if s.duration > 0 and rate > 0:
            engine.schedule(int(s.start * NS_PER_S), "adversary", fire, int(s.end * NS_PER_S))
    return sent


def mitm_rewrite(net: Network, specs, delay_ms: float = 2.0, src: str = "plc_b", dst: str = "motion") -> list:
    """Rewrite belt-stop writes on ``src -> dst`` to keep-moving; every intercepted frame is delayed."""
    delay = int(delay_ms * NS_PER_MS)
    keep_moving = mb.BELT_VALUES["normal"]
    rewritten: list[int] = []

    def intercept(msg: Message, now: int):
        if msg.src != src or msg.dst != dst or not _any_active(specs, now):
            return None
        adu = msg.adu
        if not msg.response and msg.fc == mb.WRITE_SINGLE_REGISTER:
            frame = mb.decode(adu)
            pdu = frame.pdu
            if pdu.addr == mb.REG_BELT_MODE and pdu.value == mb.BELT_VALUES["stopped"]:
                forged = mb.MbapFrame(frame.transaction_id, frame.unit_id,
                                      mb.WriteSingleRegister(pdu.addr, keep_moving))
                rewritten.append(now)
                return ("modify", mb.encode(forged), delay, "attack_mitm")
        return ("modify", adu, delay, msg.origin)

    net.filters.append(intercept)
    return rewritten


def inject_replay(engine: SimEngine, net: Network, fire_times, target: str = "output_valve",
                  identity: str = "plc_a", link: str = "insider") -> list[int]:
    """Re-send a captured open-valve frame byte for byte at each fire time."""
    captured: list[bytes] = []
    injected: list[int] = []

    def tap(msg: Message, now: int) -> None:
        if not captured and msg.src == identity and msg.dst == target and not msg.response \
                and msg.fc == mb.WRITE_SINGLE_COIL and msg.adu[-2:] == b"\xff\x00":
            captured.append(msg.adu)

    def fire() -> None:
        if captured:
            net.send(identity, target, captured[0], False, "attack_injection", link_src=link)
            injected.append(engine.now)

    net.taps.append(tap)
    for t in fire_times:
        engine.schedule(int(round(t * NS_PER_S)), "adversary", fire)
    return injected


def injection_fire_times(specs, period_s: float, offset_s: float = 0.0) -> list[float]:
    times = []
    for s in specs:
        n = int(math.floor((s.duration - offset_s) / period_s - 1e-9)) + 1 if s.duration > offset_s else 0
        times += [s.start + offset_s + k * period_s for k in range(n)]
    return times


def suppress(net: Network, specs, endpoint: str = "plc_a") -> None:
    def block(msg: Message, now: int):
        if msg.src == endpoint and _any_active(specs, now):
            return ("drop", "suppressed")
        return None

    net.filters.append(block)


# -- wireless -----------------------------------------------------------------

def jam_intervals(start_s: float, on_s: float, off_s: float, horizon_s: float) -> list[tuple[float, float]]:
    if on_s <= 0:
        return []
    out, t = [], start_s
    while t < horizon_s:
        out.append((t, min(t + on_s, horizon_s)))
        t += on_s + max(off_s, 0.0)
        if off_s <= 0:
            break
    return out


def jam(engine: SimEngine, channel: Channel, tx_power: float, position, directed: bool, elements: int,
        intervals) -> Jammer:
    radio = NodeRadio("jammer", tuple(position), tx_power, elements, "jammer")
    jammer = Jammer(radio, directed, "gnb", False, channel.p.undirected_penalty_db)
    channel.add_jammer(jammer)
    for a, b in intervals:
        engine.schedule(int(a * NS_PER_S), "jammer", channel.set_jammer_active, jammer, True)
        engine.schedule(int(b * NS_PER_S), "jammer", channel.set_jammer_active, jammer, False)
    return jammer


class SpectrumMonitor:
    """Passive power meter: sums received power of every transmission into 1 ms bins."""

    def __init__(self, channel: Channel, position, horizon_s: float, bin_ms: float = 1.0,
                 noise_dbm: float | None = None):
        self.channel = channel
        self.position = tuple(position)
        self.bin_us = int(bin_ms * 1000)
        self.n_bins = int(horizon_s * 1e6 / self.bin_us) + 1
        self.noise_dbm = channel.p.noise_dbm if noise_dbm is None else noise_dbm
        self._t0: list[int] = []
        self._t1: list[int] = []
        self._p: list[float] = []
        self._rx_mw: dict[str, float] = {}

    def _power_mw(self, name: str) -> float:
        v = self._rx_mw.get(name)
        if v is None:
            node = self.channel.nodes[name] if name != "gnb" else self.channel.gnb
            probe = NodeRadio("monitor", self.position, 0.0, 1)
            d = max(distance(node, probe), 1.0)
            dbm = node.tx_power - path_loss(d, self.channel.p.carrier_ghz)
            v = self._rx_mw[name] = 10 ** (dbm / 10)
        return v

    def tap(self, records: list, start_index: int = 0) -> None:
        """Add the on-air intervals of packet records (uplink by source, downlink by the gNB)."""
        from .network import R_ATTEMPT, R_DROP, R_SRC, R_T_RECV, R_T_SEND, R_RETX
        slot = self.channel.slot_ns
        for r in records[start_index:]:
            if r[R_DROP] == "suppressed" or r[R_DROP] == "queue":
                continue
            end = r[R_T_RECV]
            if end is None:
                end = r[R_T_SEND] + (r[R_RETX] + 1) * slot
            air = (r[R_RETX] + 1) * slot
            t1 = max(end, r[R_T_SEND] + air)
            t0 = t1 - air
            self._t0.append(t0 // 1000)
            self._t1.append(t1 // 1000)
            self._p.append(self._power_mw(r[R_SRC]) + self._power_mw("gnb"))

    def add_jammer(self, jammer: Jammer, intervals) -> None:
        probe = NodeRadio("monitor", self.position, 0.0, 1)
        dbm = jammer.radio.tx_power + jammer.effective_gain("monitor") - path_loss(
            max(distance(jammer.radio, probe), 1.0), self.channel.p.carrier_ghz)
        for a, b in intervals:
            self._t0.append(int(a * 1e6))
            self._t1.append(int(b * 1e6))
            self._p.append(10 ** (dbm / 10))

    def samples(self, use_jit: bool | None = None) -> np.ndarray:
        """Aggregate received power per bin in dBm (noise floor included)."""
        out = np.zeros(self.n_bins)
        t0 = np.asarray(self._t0, dtype=np.int64)
        t1 = np.asarray(self._t1, dtype=np.int64)
        p = np.asarray(self._p, dtype=np.float64)
        jit = JIT_ENABLED if use_jit is None else use_jit
        if jit:
            K.accumulate_power(t0, t1, p, self.bin_us, out)
        else:
            K.accumulate_power_numpy(t0, t1, p, self.bin_us, out)
        return 10 * np.log10(out + 10 ** (self.noise_dbm / 10))


def spectrum_scan(monitor: SpectrumMonitor, records, window=None) -> np.ndarray:
    """1 ms aggregate power series (dBm) at the monitor, optionally cut to ``window`` seconds."""
    monitor.tap(records)
    s = monitor.samples()
    if window is not None:
        a, b = (int(w * 1e6 / monitor.bin_us) for w in window)
        s = s[a:b]
    return s


def infer_cycle(samples, dt: float = 1e-3, min_lag: float = 0.5, max_lag: float = 60.0,
                smooth_s: float = 0.2, threshold: float = 3.0):
    """Dominant process period (s) from the autocorrelation of a power series, or ``NO_CYCLE``."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1 or x.size < 4:
        return NO_CYCLE
    w = max(int(round(smooth_s / dt)), 1)
    if w > 1:
        c = np.cumsum(np.concatenate(([0.0], x)))
        x = (c[w:] - c[:-w]) / w
        x = x[::w]
        dt_eff = dt * w
    else:
        dt_eff = dt
    x = x - x.mean()
    n = x.size
    var = float(np.dot(x, x))
    lo = int(math.ceil(min_lag / dt_eff))
    hi = min(int(max_lag / dt_eff), n // 10)
    if var <= 0 or hi <= lo:
        return NO_CYCLE
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    ac = np.fft.irfft(f * np.conj(f), nfft)[:n] / var
    seg = ac[lo:hi + 1]
    k = int(np.argmax(seg))
    peak = float(seg[k])
    floor = math.sqrt(2 * math.log(max(hi - lo + 1, 2))) / math.sqrt(n)
    if peak < threshold * floor:
        return NO_CYCLE
    lag = lo + k
    # parabolic refinement around the peak
    if 0 < lag < n - 1:
        y0, y1, y2 = ac[lag - 1], ac[lag], ac[lag + 1]
        den = y0 - 2 * y1 + y2
        off = 0.5 * (y0 - y2) / den if den != 0 else 0.0
        return (lag + max(-0.5, min(0.5, off))) * dt_eff
    return lag * dt_eff


__all__ = ["AttackSpec", "NO_CYCLE", "SpectrumMonitor", "dos_flood", "five_variant_schedule", "infer_cycle",
           "inject_replay", "injection_fire_times", "jam", "jam_intervals", "mitm_rewrite", "spectrum_scan",
           "suppress"]
