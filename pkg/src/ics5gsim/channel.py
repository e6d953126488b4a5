"""Link models: 100 Mbit/s Ethernet and a 5G mmWave link abstraction driven by a link budget.

The 5G path UE -> gNB -> UE is scheduled as one slot-quantised transmission whose per-attempt
failure probability combines the uplink and downlink legs. Each source owns a FIFO egress
queue; outcomes are resolved analytically at enqueue time.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .engine import NS_PER_MS, NS_PER_S, NS_PER_US, RngStream, stream_seed

PROFILES = ("wired", "5g_gc", "5g_dc")


def path_loss(d: float, f_ghz: float = 28.0) -> float:
    """Indoor-factory line-of-sight path loss in dB (distance in metres)."""
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    return 31.84 + 21.5 * math.log10(d) + 19.0 * math.log10(f_ghz)


def dbm_sum(*levels_dbm: float) -> float:
    total = sum(10.0 ** (x / 10.0) for x in levels_dbm if x != -math.inf)
    return 10.0 * math.log10(total) if total > 0 else -math.inf


def per(sinr_db: float, alpha: float = 1.0, beta: float = 5.0) -> float:
    """Logistic packet error rate for one transmission attempt."""
    x = alpha * (sinr_db - beta)
    if x > 700:
        return 0.0
    if x < -700:
        return 1.0
    return 1.0 / (1.0 + math.exp(x))


def array_gain_db(elements: int) -> float:
    """Beamforming gain of an ``elements x elements`` array."""
    return 10.0 * math.log10(elements * elements)


@dataclass
class NodeRadio:
    name: str
    position: tuple
    tx_power: float = 23.0
    elements: int = 2
    role: str = "ue"  # ue | gnb | jammer | monitor
    gain_db: float | None = None  # overrides the array gain when set

    @property
    def gain(self) -> float:
        return array_gain_db(self.elements) if self.gain_db is None else self.gain_db


def distance(a: NodeRadio, b: NodeRadio) -> float:
    return math.dist(a.position, b.position)


@dataclass
class Jammer:
    radio: NodeRadio
    directed: bool = True
    target: str = "gnb"
    active: bool = False
    undirected_penalty_db: float = -13.0

    def effective_gain(self, rx_name: str) -> float:
        if self.directed and rx_name == self.target:
            return self.radio.gain
        return self.undirected_penalty_db

    def rx_power(self, rx: NodeRadio, f_ghz: float = 28.0) -> float:
        if self.radio.tx_power == -math.inf:
            return -math.inf
        return self.radio.tx_power + self.effective_gain(rx.name) - path_loss(distance(self.radio, rx), f_ghz)


def sinr(tx: NodeRadio, rx: NodeRadio, jammers=(), noise_dbm: float = -84.0, f_ghz: float = 28.0,
         extra_loss_db: float = 0.0, pl_db: float | None = None) -> float:
    """SINR (dB) of ``tx -> rx`` with noise floor and active jammer interference."""
    pl = path_loss(distance(tx, rx), f_ghz) if pl_db is None else pl_db
    signal = tx.tx_power + tx.gain + rx.gain - pl - extra_loss_db
    interference = [j.rx_power(rx, f_ghz) for j in jammers if j.active]
    return signal - dbm_sum(noise_dbm, *interference)


@dataclass
class ChannelParams:
    profile: str = "5g_gc"
    carrier_ghz: float = 28.0
    noise_dbm: float = -84.0
    dc_extra_noise_db: float = 32.0
    shadow_sigma_db: float = 4.3
    coherence_ms: float = 100.0
    per_alpha: float = 1.0
    per_beta: float = 5.0
    slot_us: float = 125.0
    max_harq_retx: int = 3
    ue_queue: int = 100
    wired_rate_bps: float = 100e6
    wired_prop_us: float = 2.0
    wired_queue: int = 100
    header_bytes: int = 54   # Ethernet + IPv4 + TCP headers around the Modbus ADU
    rto_initial_ms: float = 20.0
    rto_max_ms: float = 1000.0
    max_transport_attempts: int = 10
    undirected_penalty_db: float = -13.0
    jammer_elements: int = 4


class TransmissionOutcome(NamedTuple):
    delivered: bool
    total_delay: float   # s, enqueue -> arrival (or -> failure)
    retx_count: int
    drop_reason: str     # none | max_retx | queue | suppressed
    sinr: float | None
    t_done: int          # ns, arrival or failure instant


class _Egress:
    __slots__ = ("free_at", "departures")

    def __init__(self):
        self.free_at = 0
        self.departures: deque = deque()


class Channel:
    """Per-transmission delay/loss for the selected deployment profile."""

    def __init__(self, params: ChannelParams | None = None, root_seed: int = 0, horizon_s: float = 1200.0,
                 gnb: NodeRadio | None = None):
        self.p = params or ChannelParams()
        if self.p.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.p.profile!r}")
        self.root_seed = root_seed
        self.gnb = gnb or NodeRadio("gnb", (25.0, 10.0, 9.5), 34.0, 8, "gnb")
        self.nodes: dict[str, NodeRadio] = {}
        self.jammers: list[Jammer] = []
        self.extra_interference_dbm = -math.inf
        self._egress: dict[str, _Egress] = {}
        self._pair: dict[tuple, tuple] = {}
        self._shadow: dict[str, np.ndarray] = {}
        self._ni: dict[str, float] = {}
        self.n_intervals = int(horizon_s * 1000 / self.p.coherence_ms) + 2
        self.coherence_ns = int(self.p.coherence_ms * NS_PER_MS)
        self.slot_ns = int(round(self.p.slot_us * NS_PER_US))
        self.condition_log: list[tuple[int, str]] = []
        self.per_rng = RngStream(root_seed, "channel.per")
        self.sched_rng = RngStream(root_seed, "channel.sched")
        self.forced_per: float | None = None
        self._refresh_noise()

    # -- configuration ------------------------------------------------------
    def register(self, node: NodeRadio) -> None:
        self.nodes[node.name] = node
        self._egress.setdefault(node.name, _Egress())
        self._pair.clear()

    @property
    def noise_floor(self) -> float:
        extra = self.p.dc_extra_noise_db if self.p.profile == "5g_dc" else 0.0
        return self.p.noise_dbm + extra

    def set_condition(self, profile: str, t: int = 0) -> None:
        if profile not in PROFILES:
            raise ValueError(f"unknown profile {profile!r}")
        if profile != self.p.profile:
            self.condition_log.append((t, profile))
        self.p.profile = profile
        self._refresh_noise()

    def set_interference(self, level_dbm: float) -> None:
        """Add a fixed interference term (dBm) at every receiver."""
        self.extra_interference_dbm = level_dbm
        self._refresh_noise()

    def add_jammer(self, jammer: Jammer) -> None:
        self.jammers.append(jammer)
        self._refresh_noise()

    def set_jammer_active(self, jammer: Jammer, active: bool) -> None:
        jammer.active = active
        self._refresh_noise()

    def _refresh_noise(self) -> None:
        self._ni.clear()

    def noise_interference(self, rx: NodeRadio) -> float:
        v = self._ni.get(rx.name)
        if v is None:
            f = self.p.carrier_ghz
            levels = [self.noise_floor, self.extra_interference_dbm]
            levels += [j.rx_power(rx, f) for j in self.jammers if j.active]
            v = self._ni[rx.name] = dbm_sum(*levels)
        return v

    def shadow(self, a: str, b: str, t_ns: int) -> float:
        key = a + "|" + b if a < b else b + "|" + a
        arr = self._shadow.get(key)
        if arr is None:
            rng = np.random.default_rng(stream_seed(self.root_seed, "channel.shadow/" + key))
            arr = self._shadow[key] = rng.normal(0.0, self.p.shadow_sigma_db, self.n_intervals)
        k = t_ns // self.coherence_ns
        return float(arr[k if k < arr.shape[0] else -1])

    def _pair_budget(self, src: str, dst: str) -> tuple:
        b = self._pair.get((src, dst))
        if b is None:
            f = self.p.carrier_ghz
            s, d, g = self.nodes[src], self.nodes[dst], self.gnb
            ul = s.tx_power + s.gain + g.gain - path_loss(distance(s, g), f)
            dl = g.tx_power + g.gain + d.gain - path_loss(distance(g, d), f)
            b = self._pair[(src, dst)] = (ul, dl)
        return b

    def link_sinr(self, src: str, dst: str, t_ns: int) -> tuple[float, float]:
        """(uplink, downlink) SINR in dB at time ``t_ns`` including shadowing."""
        ul, dl = self._pair_budget(src, dst)
        ul -= self.shadow(src, "gnb", t_ns) + self.noise_interference(self.gnb)
        dl -= self.shadow("gnb", dst, t_ns) + self.noise_interference(self.nodes[dst])
        return ul, dl

    def attempt_failure(self, src: str, dst: str, t_ns: int) -> tuple[float, float]:
        if self.forced_per is not None:
            return self.forced_per, math.nan
        ul, dl = self.link_sinr(src, dst, t_ns)
        a, b = self.p.per_alpha, self.p.per_beta
        ok = (1.0 - per(ul, a, b)) * (1.0 - per(dl, a, b))
        return 1.0 - ok, min(ul, dl)

    # -- transmission -------------------------------------------------------
    def transmit(self, src: str, dst: str, size: int, t_ns: int) -> TransmissionOutcome:
        """Resolve one link-layer transmission enqueued at ``t_ns``."""
        if src not in self.nodes or dst not in self.nodes:
            raise KeyError(f"unregistered endpoint in {src}->{dst}")
        q = self._egress[src]
        deps = q.departures
        while deps and deps[0] <= t_ns:
            deps.popleft()
        p = self.p
        wired = p.profile == "wired"
        if len(deps) >= (p.wired_queue if wired else p.ue_queue):
            return TransmissionOutcome(False, 0.0, 0, "queue", None, t_ns)
        start = q.free_at if q.free_at > t_ns else t_ns
        if wired:
            ser = int(round(size * 8 * NS_PER_S / p.wired_rate_bps))
            depart = start + ser
            q.free_at = depart
            deps.append(depart)
            arrive = depart + int(round(p.wired_prop_us * NS_PER_US))
            return TransmissionOutcome(True, (arrive - t_ns) / NS_PER_S, 0, "none", None, arrive)
        p_fail, s = self.attempt_failure(src, dst, start)
        slot = self.slot_ns
        t = start + int(self.sched_rng.random() * slot)
        rnd = self.per_rng.random
        retx = 0
        while True:
            t += slot
            if p_fail <= 0.0 or rnd() >= p_fail:
                ok = True
                break
            if retx >= p.max_harq_retx:
                ok = False
                break
            retx += 1
        q.free_at = t
        deps.append(t)
        return TransmissionOutcome(ok, (t - t_ns) / NS_PER_S, retx, "none" if ok else "max_retx", s, t)

    def queue_length(self, src: str, t_ns: int) -> int:
        deps = self._egress[src].departures
        return sum(1 for d in deps if d > t_ns)


def default_topology() -> dict[str, tuple]:
    """UE positions (m) inside the 50 x 20 x 10 m hall; the gNB hangs at 9.5 m in the centre."""
    return {
        "tank_level": (6.0, 3.0, 1.0),
        "leak": (8.0, 2.0, 0.5),
        "bottle_level": (10.0, 6.0, 1.0),
        "bottle_position": (11.0, 7.0, 1.0),
        "input_valve": (4.0, 4.0, 1.5),
        "output_valve": (9.0, 5.0, 1.2),
        "motion": (14.0, 8.0, 1.0),
        "plc_a": (30.0, 16.0, 1.0),
        "plc_b": (34.0, 17.0, 1.0),
        "hmi": (46.0, 18.0, 1.2),
        "insider": (45.0, 17.0, 1.2),
    }
