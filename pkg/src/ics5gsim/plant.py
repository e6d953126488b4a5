"""Bottle-filling plant: Torricelli tank, conveyor with a bottle train, noisy sensors, spill ledger."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels as K
from .engine import NS_PER_MS, NS_PER_S, RngStream, SimEngine

log = logging.getLogger(__name__)

BELT_MODES = ("stopped", "half", "normal")
ANALOG_SENSORS = ("tank_level", "bottle_level", "belt_encoder")
BOOLEAN_SENSORS = ("bottle_present", "leak")
SENSORS = ANALOG_SENSORS + BOOLEAN_SENSORS


@dataclass
class PlantParams:
    tank_area: float = 1.0          # m^2
    tank_capacity: float = 10.0     # m
    initial_level: float = 5.0      # m
    inflow_rate: float = 0.2        # m^3/s while the input valve is open
    orifice_cda: float = 0.01       # C_d * A_out, m^2
    g: float = 9.81
    bottle_capacity: float = 0.3    # m^3
    bottle_spacing: float = 2.5     # m
    capture_window: float = 0.15    # +/- m around the valve
    first_bottle_gap: float = 1.0   # m of belt travel before bottle 0 reaches the valve
    v_norm: float = 1.0             # m/s
    tick_ms: int = 1
    sensor_noise: float = 0.005     # relative, uniform
    spill_merge_gap: float = 1.0    # s
    max_bottles: int = 4096


class SensorReading(NamedTuple):
    sensor_id: str
    value: float
    t: int


class SpillReport(NamedTuple):
    count: int
    total_volume: float
    events: list  # (start_s, end_s, volume_m3)


def merge_spill_events(events, gap: float = 1.0) -> list:
    """Merge (start, end, volume) intervals whose separation is below ``gap`` seconds."""
    merged: list = []
    for start, end, vol in sorted(events):
        if merged and start - merged[-1][1] < gap:
            s0, e0, v0 = merged[-1]
            merged[-1] = (s0, max(e0, end), v0 + vol)
        else:
            merged.append((start, end, vol))
    return merged


class Plant:
    def __init__(self, params: PlantParams | None = None, engine: SimEngine | None = None):
        self.p = params or PlantParams()
        p = self.p
        if p.orifice_cda <= 0 or p.tank_area <= 0:
            raise ValueError("orifice_cda and tank_area must be positive")
        self.engine = engine
        self.tick_ns = p.tick_ms * NS_PER_MS
        self.dt = p.tick_ms / 1000.0
        self.st = np.zeros(K.N_STATE)
        self.st[K.H] = min(max(p.initial_level, 0.0), p.tank_capacity)
        self.pr = np.zeros(K.N_PARAM)
        self.pr[K.P_DT] = self.dt
        self.pr[K.P_AREA] = p.tank_area
        self.pr[K.P_CAP] = p.tank_capacity
        self.pr[K.P_QIN] = p.inflow_rate
        self.pr[K.P_CDA] = p.orifice_cda
        self.pr[K.P_G] = p.g
        self.pr[K.P_BOTTLE_CAP] = p.bottle_capacity
        self.pr[K.P_SPACING] = p.bottle_spacing
        self.pr[K.P_WINDOW] = p.capture_window
        self.pr[K.P_GAP] = p.first_bottle_gap
        self.pr[K.P_MERGE_TICKS] = round(p.spill_merge_gap / self.dt)
        self.fills = np.zeros(p.max_bottles)
        self.fill_start = np.full(p.max_bottles, -1.0)
        self.spill_ev = np.zeros((65536, 3))
        self.ev_n = np.zeros(1, dtype=np.int64)
        self.mode = "stopped"
        self.mode_log: list[tuple[int, str]] = [(0, "stopped")]
        self.actuator_log: list[tuple[int, str, str]] = []
        self.rejected: list[tuple[int, str, object]] = []
        self._noise: dict[str, RngStream] = {}

    # -- time -------------------------------------------------------------
    @property
    def tick(self) -> int:
        return int(self.st[K.TICK])

    @property
    def t_ns(self) -> int:
        return self.tick * self.tick_ns

    def advance_to(self, t_ns: int) -> None:
        n = t_ns // self.tick_ns - self.tick
        if n > 0:
            K.advance_plant(self.st, self.pr, self.fills, self.fill_start, self.spill_ev, self.ev_n, n)

    def step(self, dt: float) -> None:
        if abs(dt - self.dt) > 1e-12:
            raise ValueError(f"step dt must equal the configured tick ({self.dt} s)")
        K.advance_plant(self.st, self.pr, self.fills, self.fill_start, self.spill_ev, self.ev_n, 1)

    def _sync(self) -> None:
        if self.engine is not None:
            self.advance_to(self.engine.now)

    # -- state accessors ----------------------------------------------------
    @property
    def level(self) -> float:
        return float(self.st[K.H])

    @property
    def spilled_total(self) -> float:
        return float(self.st[K.SPILLED])

    @property
    def speed(self) -> float:
        return float(self.st[K.SPEED])

    @property
    def input_open(self) -> bool:
        return self.st[K.IN_OPEN] > 0.5

    @property
    def output_open(self) -> bool:
        return self.st[K.OUT_OPEN] > 0.5

    @property
    def belt_position(self) -> float:
        return float(self.st[K.BELT_POS])

    @property
    def stationary_time(self) -> float:
        return self.st[K.STOPPED_TICKS] * self.dt

    @property
    def max_mass_residual(self) -> float:
        return float(self.st[K.MAX_RESIDUAL])

    def outflow_rate(self, h: float | None = None) -> float:
        h = self.level if h is None else h
        return self.p.orifice_cda * math.sqrt(2.0 * self.p.g * h) if h > 0 else 0.0

    def bottle_index(self) -> int:
        p = self.p
        return K.bottle_under_valve(self.st[K.BELT_POS], p.bottle_spacing, p.first_bottle_gap,
                                    p.capture_window, p.max_bottles)

    def volumes(self) -> tuple[float, float, float]:
        """(tank volume, total in bottles, spilled) in m^3."""
        return (self.level * self.p.tank_area, float(self.fills.sum()), self.spilled_total)

    # -- actuators ----------------------------------------------------------
    def set_actuator(self, actuator: str, cmd) -> bool:
        """Apply a command at the current tick boundary. Invalid commands are rejected."""
        self._sync()
        t = self.t_ns
        if actuator in ("input_valve", "output_valve"):
            if cmd not in ("open", "close"):
                return self._reject(t, actuator, cmd)
            idx = K.IN_OPEN if actuator == "input_valve" else K.OUT_OPEN
            self.st[idx] = 1.0 if cmd == "open" else 0.0
        elif actuator == "belt":
            if cmd == "stop":
                cmd = "stopped"
            if cmd not in BELT_MODES:
                return self._reject(t, actuator, cmd)
            speeds = {"stopped": 0.0, "half": self.p.v_norm / 2.0, "normal": self.p.v_norm}
            self.st[K.SPEED] = speeds[cmd]
            if cmd != self.mode:
                self.mode = cmd
                self.mode_log.append((t, cmd))
        else:
            return self._reject(t, actuator, cmd)
        self.actuator_log.append((t, actuator, str(cmd)))
        return True

    def _reject(self, t, actuator, cmd) -> bool:
        log.warning("rejected actuator command %r for %s", cmd, actuator)
        self.rejected.append((t, actuator, cmd))
        return False

    # -- sensors ------------------------------------------------------------
    def true_value(self, sensor_id: str) -> float:
        if sensor_id == "tank_level":
            return self.level
        if sensor_id == "bottle_level":
            k = self.bottle_index()
            return float(self.fills[k]) if k >= 0 else 0.0
        if sensor_id == "bottle_present":
            return 1.0 if self.bottle_index() >= 0 else 0.0
        if sensor_id == "leak":
            return float(self.st[K.LEAK])
        if sensor_id == "belt_encoder":
            return self.belt_position
        raise KeyError(f"unknown sensor {sensor_id!r}")

    def read_sensor(self, sensor_id: str) -> SensorReading:
        if sensor_id not in SENSORS:
            raise KeyError(f"unknown sensor {sensor_id!r}")
        self._sync()
        value = self.true_value(sensor_id)
        if sensor_id in ANALOG_SENSORS and self.p.sensor_noise > 0:
            stream = self._noise.get(sensor_id)
            if stream is None:
                seed = self.engine.root_seed if self.engine is not None else 0
                stream = self._noise[sensor_id] = RngStream(seed, f"sensor.{sensor_id}")
            a = self.p.sensor_noise
            value *= 1.0 + stream.uniform(-a, a)
        return SensorReading(sensor_id, value, self.t_ns)

    # -- reports ------------------------------------------------------------
    def raw_spill_events(self) -> list:
        n = int(self.ev_n[0])
        dt = self.dt
        return [(r[0] * dt, r[1] * dt, float(r[2])) for r in self.spill_ev[:n]]

    def spill_report(self) -> SpillReport:
        events = merge_spill_events(self.raw_spill_events(), self.p.spill_merge_gap)
        return SpillReport(len(events), self.spilled_total, events)

    def fill_start_times(self) -> np.ndarray:
        fs = self.fill_start[self.fill_start >= 0]
        return fs * self.dt

    def elapsed(self) -> float:
        return self.tick * self.dt


__all__ = ["Plant", "PlantParams", "SensorReading", "SpillReport", "merge_spill_events",
           "SENSORS", "BELT_MODES", "NS_PER_S"]
