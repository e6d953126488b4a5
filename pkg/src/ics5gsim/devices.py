"""Field devices, PLC_A (liquid), PLC_B (conveyor) and the HMI as Modbus endpoints."""

from __future__ import annotations

from dataclasses import dataclass, field

from . import modbus as mb
from .engine import NS_PER_MS, SimEngine
from .network import Message, Network
from .plant import Plant


@dataclass
class DeviceParams:
    control_period_ms: int = 40
    sensor_period_ms: int = 40
    hmi_poll_ms: int = 100
    actuator_poll_ms: int = 100
    status_period_ms: int = 100
    t_safe_ms: int = 500
    resume_hold_ms: int = 500       # sensors must stay fresh this long before a halted PLC resumes
    clock_drift_ppm: float = 50.0   # each device's oscillator error is drawn from +/- this
    tank_low: float = 3.0
    tank_high: float = 7.0
    target_fill_fraction: float = 0.9
    empty_fraction: float = 0.1


class Trace:
    """Semantic event log shared by all components (becomes events.jsonl)."""

    def __init__(self, engine: SimEngine):
        self.engine = engine
        self.events: list[tuple] = []

    def __call__(self, source: str, kind: str, **detail) -> None:
        self.events.append((self.engine.now, source, kind, detail))


class Device:
    unit_id = mb.UNIT_FIELD

    def __init__(self, name: str, engine: SimEngine, net: Network, trace: Trace, drift_ppm: float = 0.0):
        self.name = name
        self.engine = engine
        self.net = net
        self.trace = trace
        self.clock = 1.0
        if drift_ppm:
            self.clock += engine.stream(f"clock.{name}").uniform(-drift_ppm, drift_ppm) * 1e-6
        self.tid = mb.TransactionCounter()
        self.requests = mb.RequestLog()
        net.attach(name, self.receive)

    def request(self, dst: str, unit: int, pdu, origin: str, info=None) -> mb.MbapFrame:
        frame = mb.MbapFrame(self.tid(), unit, pdu)
        self.requests.add(frame, self.engine.now, info)
        self.net.send(self.name, dst, mb.encode(frame), False, origin)
        return frame

    def reply(self, msg: Message, frame: mb.MbapFrame, pdu) -> None:
        resp = mb.MbapFrame(frame.transaction_id, frame.unit_id, pdu)
        self.net.send(self.name, msg.src, mb.encode(resp), True, "response")

    def every(self, period_ns: int, phase_ns: int, fn) -> None:
        """Run ``fn`` periodically on this device's (drifting) local clock."""
        period_ns = int(round(period_ns * self.clock))

        def tick():
            fn()
            self.engine.schedule_in(period_ns, self.name, tick)
        tick.__name__ = fn.__name__
        self.engine.schedule(phase_ns, self.name, tick)

    def receive(self, msg: Message) -> None:
        try:
            frame = mb.decode(msg.adu, response=msg.response)
        except mb.ModbusError as exc:
            self.trace(self.name, "malformed", src=msg.src, error=str(exc))
            return
        if msg.response:
            entry = self.requests.match_response(frame, self.engine.now)
            if entry is None:
                self.on_orphan(msg, frame)
            else:
                self.on_response(msg, frame, entry)
        else:
            self.on_request(msg, frame)

    def on_request(self, msg: Message, frame: mb.MbapFrame) -> None:
        self.reply(msg, frame, mb.ExceptionResp(frame.function_code, 1))

    def on_response(self, msg: Message, frame: mb.MbapFrame, entry) -> None:
        pass

    def on_orphan(self, msg: Message, frame: mb.MbapFrame) -> None:
        pass


class Sensor(Device):
    """Pushes a scaled, noisy reading to each target PLC register every period."""

    def __init__(self, name, engine, net, trace, plant: Plant, sensor_id: str, targets, scale: float,
                 period_ns: int, phase_ns: int, drift_ppm: float = 0.0):
        super().__init__(name, engine, net, trace, drift_ppm)
        self.plant = plant
        self.sensor_id = sensor_id
        self.targets = targets  # [(plc_name, unit, register)]
        self.scale = scale
        self.every(period_ns, phase_ns, self.publish)

    def publish(self) -> None:
        value = mb.clamp_u16(self.plant.read_sensor(self.sensor_id).value * self.scale)
        for plc, unit, reg in self.targets:
            self.request(plc, unit, mb.WriteSingleRegister(reg, value), "sensor")


class Valve(Device):
    def __init__(self, name, engine, net, trace, plant: Plant, actuator: str):
        super().__init__(name, engine, net, trace)
        self.plant = plant
        self.actuator = actuator

    def on_request(self, msg, frame):
        pdu = frame.pdu
        if isinstance(pdu, mb.WriteSingleCoil) and pdu.addr == mb.COIL_VALVE:
            self.plant.set_actuator(self.actuator, "open" if pdu.on else "close")
            self.trace(self.name, "actuate", cmd="open" if pdu.on else "close", src=msg.src, origin=msg.origin)
            self.reply(msg, frame, mb.WriteSingleCoil(pdu.addr, pdu.on, True))
        elif isinstance(pdu, mb.ReadHoldingRegistersReq) and pdu.addr == 0 and pdu.count == 1:
            state = self.plant.output_open if self.actuator == "output_valve" else self.plant.input_open
            self.reply(msg, frame, mb.ReadHoldingRegistersResp((int(state),)))
        else:
            self.reply(msg, frame, mb.ExceptionResp(frame.function_code, 2))


class MotionController(Device):
    """Belt drive. Stops on its own if its PLC goes silent for longer than ``t_safe``."""

    def __init__(self, name, engine, net, trace, plant: Plant, params: DeviceParams, plc: str = "plc_b"):
        super().__init__(name, engine, net, trace, params.clock_drift_ppm)
        self.plant = plant
        self.plc = plc
        self.t_safe = params.t_safe_ms * NS_PER_MS
        self.last_plc_rx = 0
        self.failsafe_trips: list[int] = []
        self.every(params.control_period_ms * NS_PER_MS, 0, self.watchdog)

    def watchdog(self) -> None:
        if self.engine.now - self.last_plc_rx > self.t_safe and self.plant.mode != "stopped":
            self.plant.set_actuator("belt", "stopped")
            self.failsafe_trips.append(self.engine.now)
            self.trace(self.name, "failsafe_stop")

    def on_request(self, msg, frame):
        if msg.src == self.plc:
            self.last_plc_rx = self.engine.now
        pdu = frame.pdu
        if isinstance(pdu, mb.WriteSingleRegister) and pdu.addr == mb.REG_BELT_MODE:
            mode = mb.BELT_CODES.get(pdu.value)
            if mode is None:
                self.trace(self.name, "rejected", value=pdu.value)
                self.reply(msg, frame, mb.ExceptionResp(frame.function_code, 3))
                return
            self.plant.set_actuator("belt", mode)
            self.trace(self.name, "actuate", cmd=mode, src=msg.src, origin=msg.origin)
            self.reply(msg, frame, mb.WriteSingleRegister(pdu.addr, pdu.value, True))
        elif isinstance(pdu, mb.ReadHoldingRegistersReq) and pdu.addr == 0 and pdu.count == 1:
            self.reply(msg, frame, mb.ReadHoldingRegistersResp((mb.BELT_VALUES[self.plant.mode],)))
        else:
            self.reply(msg, frame, mb.ExceptionResp(frame.function_code, 2))


class Plc(Device):
    """Modbus server with a holding-register file and sensor freshness bookkeeping."""

    watched: tuple = ()

    def __init__(self, name, engine, net, trace, params: DeviceParams, unit_id: int):
        super().__init__(name, engine, net, trace, params.clock_drift_ppm)
        self.p = params
        self.unit_id = unit_id
        self.regs = [0] * mb.PLC_REGISTER_COUNT
        self.last_rx = {src: 0 for src in self.watched}
        self.t_safe = params.t_safe_ms * NS_PER_MS
        self.resume_hold = params.resume_hold_ms * NS_PER_MS
        self.halted = False
        self._fresh_since: int | None = None
        self.halt_log: list[tuple[int, int | None]] = []

    def on_request(self, msg, frame):
        pdu = frame.pdu
        if isinstance(pdu, mb.WriteSingleRegister) and 0 <= pdu.addr < len(self.regs):
            self.regs[pdu.addr] = pdu.value
            if msg.src in self.last_rx:
                self.last_rx[msg.src] = self.engine.now
            if pdu.addr == mb.REG_HMI_MODE:
                self.trace(self.name, "hmi_mode", mode=mb.HMI_MODES.get(pdu.value, pdu.value))
            self.reply(msg, frame, mb.WriteSingleRegister(pdu.addr, pdu.value, True))
        elif isinstance(pdu, mb.ReadHoldingRegistersReq) and pdu.addr + pdu.count <= len(self.regs):
            self.reply(msg, frame, mb.ReadHoldingRegistersResp(tuple(self.regs[pdu.addr:pdu.addr + pdu.count])))
        else:
            self.reply(msg, frame, mb.ExceptionResp(frame.function_code, 2))

    def safety_check(self) -> bool:
        """Enter or leave the safety halt based on sensor silence; returns the halted flag."""
        now = self.engine.now
        stale = [s for s, t in self.last_rx.items() if now - t > self.t_safe]
        if stale:
            self._fresh_since = None
            if not self.halted:
                self.halted = True
                self.halt_log.append((now, None))
                self.trace(self.name, "safety_halt", stale=stale)
        elif self.halted:
            if self._fresh_since is None:
                self._fresh_since = now
            if now - self._fresh_since < self.resume_hold:
                return True
            self.halted = False
            self.halt_log[-1] = (self.halt_log[-1][0], now)
            self.trace(self.name, "safety_resume")
        return self.halted

    @property
    def hmi_mode(self) -> str:
        return mb.HMI_MODES.get(self.regs[mb.REG_HMI_MODE], "run")


class _Commanded:
    """Last value written to an actuator and whether the write was acknowledged."""

    __slots__ = ("value", "acked", "t")

    def __init__(self):
        self.value = None
        self.acked = False
        self.t = -1


class PlcA(Plc):
    """Liquid controller. The valve output image is written to both valves every control cycle."""

    watched = ("tank_level", "bottle_level", "bottle_position", "leak")

    def __init__(self, name, engine, net, trace, params: DeviceParams, bottle_capacity: float):
        super().__init__(name, engine, net, trace, params, mb.UNIT_PLC_A)
        self.target_fill = params.target_fill_fraction * bottle_capacity * mb.SCALE_BOTTLE
        self.cmd = {"output_valve": _Commanded(), "input_valve": _Commanded()}
        self.want_in = False
        self.bottle_done = False  # latched once a bottle is full, cleared when it leaves
        self.valve_cmds = {"output_valve": 0, "input_valve": 0}
        ms = NS_PER_MS
        self.every(params.control_period_ms * ms, 20 * ms, self.plc_a_cycle)
        self.every(params.status_period_ms * ms, 45 * ms, self.publish_status)

    def desired(self) -> dict:
        r = self.regs
        level = r[mb.REG_TANK_LEVEL] / mb.SCALE_TANK
        if level < self.p.tank_low:
            self.want_in = True
        elif level >= self.p.tank_high:
            self.want_in = False
        present = bool(r[mb.REG_BOTTLE_PRESENT])
        if not present:
            self.bottle_done = False
        elif r[mb.REG_BOTTLE_LEVEL] >= self.target_fill:
            self.bottle_done = True
        if self.halted:
            return {"output_valve": False, "input_valve": False}
        fill_ok = present and not self.bottle_done and r[mb.REG_BOTTLE_LEVEL] < self.target_fill
        out = fill_ok and self.hmi_mode != "halt"
        return {"output_valve": out, "input_valve": self.want_in}

    def plc_a_cycle(self) -> list:
        halted = self.safety_check()
        origin = "safety" if halted else "plc_cycle"
        issued = []
        for valve, want in self.desired().items():
            c = self.cmd[valve]
            if c.value != want:
                self.valve_cmds[valve] += 1
                issued.append((valve, want))
                c.value, c.acked, c.t = want, False, self.engine.now
            self.request(valve, mb.UNIT_FIELD, mb.WriteSingleCoil(mb.COIL_VALVE, want), origin, info=valve)
        self.regs[mb.REG_STATUS] = (1 if self.filling_complete() else 0) | (2 if halted else 0)
        return issued

    def filling_complete(self) -> bool:
        r = self.regs
        c = self.cmd["output_valve"]
        return bool(r[mb.REG_BOTTLE_PRESENT]) and r[mb.REG_BOTTLE_LEVEL] >= self.target_fill \
            and c.value is False and c.acked

    def publish_status(self) -> None:
        self.request("plc_b", mb.UNIT_PLC_B, mb.WriteSingleRegister(mb.REG_STATUS, self.regs[mb.REG_STATUS]),
                     "plc_status")

    def on_response(self, msg, frame, entry):
        valve = entry[2]
        if isinstance(frame.pdu, mb.WriteSingleCoil) and valve in self.cmd:
            c = self.cmd[valve]
            if c.value == frame.pdu.on:
                c.acked = True


class PlcB(Plc):
    watched = ("bottle_level", "bottle_position", "plc_a")

    def __init__(self, name, engine, net, trace, params: DeviceParams, bottle_capacity: float):
        super().__init__(name, engine, net, trace, params, mb.UNIT_PLC_B)
        self.target_fill = params.target_fill_fraction * bottle_capacity * mb.SCALE_BOTTLE
        self.empty_level = params.empty_fraction * self.target_fill
        self.state = "idle"  # idle | filling
        self.absent_cycles = 0
        self.await_clear = False  # a filled bottle must be seen leaving before the next arrival
        self.cmd = _Commanded()
        self.actual_mode = None
        self.stops_issued = 0
        self.arrivals = 0
        ms = NS_PER_MS
        self.every(params.control_period_ms * ms, 25 * ms, self.plc_b_cycle)
        self.every(params.actuator_poll_ms * ms, 35 * ms, self.poll_actuators)

    @property
    def filling_complete_flag(self) -> bool:
        return bool(self.regs[mb.REG_STATUS] & 1)

    @property
    def peer_halted(self) -> bool:
        return bool(self.regs[mb.REG_STATUS] & 2)

    @property
    def run_speed(self) -> str:
        return "half" if self.hmi_mode == "half" else "normal"

    def plc_b_cycle(self) -> str | None:
        halted = self.safety_check()
        r = self.regs
        present = bool(r[mb.REG_BOTTLE_PRESENT])
        arrival = False
        if not present:
            self.await_clear = False
        if self.state == "idle":
            if present and not self.await_clear and r[mb.REG_BOTTLE_LEVEL] < self.empty_level and not halted and self.hmi_mode != "halt":
                self.state = "filling"
                self.absent_cycles = 0
                self.arrivals += 1
                arrival = True
        else:
            if self.filling_complete_flag:
                self.state = "idle"
                self.await_clear = True
            elif not present:
                self.absent_cycles += 1
                if self.absent_cycles >= 2:
                    self.state = "idle"
                    self.trace(self.name, "bottle_lost")
            else:
                self.absent_cycles = 0
        if halted or self.peer_halted or self.hmi_mode == "halt" or self.state == "filling":
            want = "stopped"
        else:
            want = self.run_speed
        safety = halted or self.peer_halted
        origin = "safety" if safety else "plc_cycle"
        if want != self.cmd.value:
            if want != "stopped" and self.cmd.value in ("half", "normal"):
                # speed overrides take effect at the next start, not mid-travel
                return None
            if want == "stopped" and self.state == "filling" and not arrival and not safety \
                    and self.hmi_mode != "halt":
                # a bottle arrival's stop is issued exactly once
                return None
            self._write_mode(want, origin)
            return want
        return None

    def _write_mode(self, mode: str, origin: str) -> None:
        self.cmd.value, self.cmd.acked, self.cmd.t = mode, False, self.engine.now
        if mode == "stopped":
            self.stops_issued += 1
        self.request("motion", mb.UNIT_FIELD, mb.WriteSingleRegister(mb.REG_BELT_MODE, mb.BELT_VALUES[mode]),
                     origin, info="mode")

    def poll_actuators(self) -> None:
        self.request("motion", mb.UNIT_FIELD, mb.ReadHoldingRegistersReq(0, 1), "plc_poll", info="poll")

    def on_response(self, msg, frame, entry):
        if entry[2] == "mode":
            self.cmd.acked = True
        elif entry[2] == "poll" and isinstance(frame.pdu, mb.ReadHoldingRegistersResp):
            actual = mb.BELT_CODES.get(frame.pdu.values[0])
            self.actual_mode = actual
            c = self.cmd
            stale_cmd = self.engine.now - c.t > 2 * self.p.actuator_poll_ms * NS_PER_MS
            if c.value not in (None, "stopped") and actual == "stopped" and stale_cmd:
                self.trace(self.name, "reconcile", want=c.value)
                self._write_mode(c.value, "reconcile")


@dataclass
class OperatorCommand:
    t: float
    command: str  # halt | half | run


def benign_operator_script() -> list[OperatorCommand]:
    return [OperatorCommand(600.0, "halt"), OperatorCommand(660.0, "half"), OperatorCommand(780.0, "run")]


class Hmi(Device):
    MODE_CODES = {"run": 0, "halt": 1, "half": 2}

    def __init__(self, name, engine, net, trace, params: DeviceParams, script=()):
        super().__init__(name, engine, net, trace, params.clock_drift_ppm)
        self.p = params
        self.poll_ns = params.hmi_poll_ms * NS_PER_MS
        self.timeout_ns = 2 * self.poll_ns
        self.timeout_log: list[tuple[int, str]] = []
        self.last_response: dict[str, int] = {"plc_a": 0, "plc_b": 0}
        self.orphans = 0
        self.every(self.poll_ns, 50 * NS_PER_MS, self.hmi_poll)
        self.script = self.hmi_operator_script(script)

    def hmi_operator_script(self, script) -> list[tuple[int, str]]:
        """Schedule operator commands; a later command at the same instant wins."""
        by_time: dict[int, str] = {}
        for cmd in script:
            if cmd.command not in self.MODE_CODES:
                raise ValueError(f"unknown operator command {cmd.command!r}")
            t = int(round(cmd.t * 1e9))
            if t in by_time and by_time[t] != cmd.command:
                self.trace(self.name, "script_conflict", t=cmd.t, dropped=by_time[t], kept=cmd.command)
            by_time[t] = cmd.command
        out = sorted(by_time.items())
        for t, command in out:
            self.engine.schedule(t, self.name, self.operator_command, command)
        return out

    def operator_command(self, command: str) -> None:
        self.trace(self.name, "operator", command=command)
        code = self.MODE_CODES[command]
        for plc, unit in (("plc_a", mb.UNIT_PLC_A), ("plc_b", mb.UNIT_PLC_B)):
            self.request(plc, unit, mb.WriteSingleRegister(mb.REG_HMI_MODE, code), "hmi_script", info=("cmd", plc))

    def hmi_poll(self) -> None:
        now = self.engine.now
        expired = [k for k, (f, t, info) in self.requests.pending.items() if now - t > self.timeout_ns]
        for k in expired:
            frame, t, info = self.requests.pending.pop(k)
            plc = info[1] if isinstance(info, tuple) else info
            self.timeout_log.append((now, plc))
            self.trace(self.name, "timeout", plc=plc, tid=frame.transaction_id)
        for plc, unit in (("plc_a", mb.UNIT_PLC_A), ("plc_b", mb.UNIT_PLC_B)):
            self.request(plc, unit, mb.ReadHoldingRegistersReq(0, mb.PLC_REGISTER_COUNT), "hmi_poll",
                         info=("poll", plc))

    def on_response(self, msg, frame, entry):
        now = self.engine.now
        if now - entry[1] > self.timeout_ns:
            # arrived after the deadline but before the next expiry sweep
            self.timeout_log.append((now, msg.src))
            self.trace(self.name, "timeout", plc=msg.src, tid=frame.transaction_id, late=True)
            return
        self.last_response[msg.src] = now

    def on_orphan(self, msg, frame):
        self.orphans += 1
