"""Assemble the testbed from a :class:`ScenarioConfig`, run it and emit the trace files."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import SCHEMA_VERSION, __version__
from . import adversary as adv
from . import devices as dev
from . import metrics as met
from . import modbus as mb
from .channel import Channel, NodeRadio, default_topology
from .engine import NS_PER_MS, NS_PER_S, SimEngine
from .network import Network
from .plant import Plant
from .scenario import ScenarioConfig

log = logging.getLogger(__name__)

PACKET_FIELDS = ("v", "t_send", "t_recv", "src", "dst", "size", "fc", "dir", "msg_class", "tid", "retx",
                 "sinr", "dropped", "drop_reason", "seq", "attempt", "t_orig", "origin", "adu")
UE_TX_POWER = 23.0
UE_ELEMENTS = 2


@dataclass
class World:
    cfg: ScenarioConfig
    engine: SimEngine
    plant: Plant
    channel: Channel
    net: Network
    trace: dev.Trace
    devices: dict
    plant_rows: list
    attack_log: dict
    monitor: adv.SpectrumMonitor | None = None
    jam_intervals: list | None = None


def build(cfg: ScenarioConfig) -> World:
    engine = SimEngine(cfg.seed)
    plant = Plant(cfg.plant, engine)
    channel = Channel(cfg.channel, cfg.seed, cfg.duration_s)
    topo = default_topology()
    topo.update({k: tuple(v) for k, v in cfg.positions.items()})
    for name, pos in topo.items():
        channel.register(NodeRadio(name, pos, UE_TX_POWER, UE_ELEMENTS))
    net = Network(engine, channel)
    trace = dev.Trace(engine)
    p = cfg.devices
    ms = NS_PER_MS
    period = p.sensor_period_ms * ms
    both = lambda reg: [("plc_a", mb.UNIT_PLC_A, reg), ("plc_b", mb.UNIT_PLC_B, reg)]  # noqa: E731
    sensors = [
        ("tank_level", "tank_level", [("plc_a", mb.UNIT_PLC_A, mb.REG_TANK_LEVEL)], mb.SCALE_TANK, 0),
        ("bottle_level", "bottle_level", both(mb.REG_BOTTLE_LEVEL), mb.SCALE_BOTTLE, 5),
        ("bottle_position", "bottle_present", both(mb.REG_BOTTLE_PRESENT), 1, 10),
        ("leak", "leak", [("plc_a", mb.UNIT_PLC_A, mb.REG_LEAK)], 1, 15),
    ]
    devices: dict = {}
    for name, sid, targets, scale, phase in sensors:
        devices[name] = dev.Sensor(name, engine, net, trace, plant, sid, targets, scale, period, phase * ms,
                                    p.clock_drift_ppm)
    devices["input_valve"] = dev.Valve("input_valve", engine, net, trace, plant, "input_valve")
    devices["output_valve"] = dev.Valve("output_valve", engine, net, trace, plant, "output_valve")
    devices["motion"] = dev.MotionController("motion", engine, net, trace, plant, p)
    cap = cfg.plant.bottle_capacity
    devices["plc_a"] = dev.PlcA("plc_a", engine, net, trace, p, cap)
    devices["plc_b"] = dev.PlcB("plc_b", engine, net, trace, p, cap)
    script = [dev.OperatorCommand(s.t, s.command) for s in cfg.operator_script if s.t <= cfg.duration_s]
    devices["hmi"] = dev.Hmi("hmi", engine, net, trace, p, script)

    rows: list = []

    def sample_plant():
        plant.advance_to(engine.now)
        rows.append((engine.now, plant.level, plant.speed, plant.spilled_total))
        engine.schedule_in(100 * ms, "plant", sample_plant)

    engine.schedule(0, "plant", sample_plant)

    world = World(cfg, engine, plant, channel, net, trace, devices, rows, {})
    _install_attacks(world)
    if cfg.jammer.enabled:
        j = cfg.jammer
        intervals = adv.jam_intervals(j.start_s, j.on_s, j.off_s, cfg.duration_s)
        world.jam_intervals = intervals
        jammer = adv.jam(engine, channel, j.tx_power, j.position, j.directed, j.elements, intervals)
        world.attack_log["jammer"] = jammer
    if cfg.monitor.enabled:
        world.monitor = adv.SpectrumMonitor(channel, cfg.monitor.position, cfg.duration_s, cfg.monitor.bin_ms)
    return world


def _install_attacks(world: World) -> None:
    cfg, a = world.cfg, world.cfg.attack
    if a.kind == "none":
        return
    specs = [adv.AttackSpec(a.kind, float(s), float(d)) for s, d in zip(a.starts, a.durations)]
    world.attack_log["specs"] = specs
    eng, net = world.engine, world.net
    if a.kind == "dos":
        world.attack_log["sent"] = adv.dos_flood(eng, net, specs, a.dos_rate)
    elif a.kind == "mitm":
        world.attack_log["rewritten"] = adv.mitm_rewrite(net, specs, a.mitm_delay_ms)
    elif a.kind == "injection":
        times = adv.injection_fire_times(specs, a.inject_period_s, a.inject_offset_s)
        world.attack_log["injected"] = adv.inject_replay(eng, net, times)
    elif a.kind == "suppression":
        adv.suppress(net, specs)


def simulate(cfg: ScenarioConfig) -> World:
    world = build(cfg)
    world.engine.run_until(int(round(cfg.duration_s * NS_PER_S)))
    world.plant.advance_to(world.engine.now)
    return world


# -- emission -------------------------------------------------------------------

def _t(ns) -> str:
    return "null" if ns is None else f"{ns / NS_PER_S:.9f}"


def _packet_lines(records):
    v = SCHEMA_VERSION
    for r in records:
        (t_send, t_recv, src, dst, size, fc, d, tid, retx, sinr, drop, seq, attempt, t_orig, origin, adu) = r
        s = "null" if sinr is None or sinr != sinr else f"{sinr:.3f}"
        yield (f'{{"v":{v},"t_send":{_t(t_send)},"t_recv":{_t(t_recv)},"src":"{src}","dst":"{dst}",'
               f'"size":{size},"fc":{fc},"dir":"{d}","msg_class":"{fc}:{d}","tid":{tid},"retx":{retx},'
               f'"sinr":{s},"dropped":{"false" if t_recv is not None else "true"},"drop_reason":"{drop}",'
               f'"seq":{seq},"attempt":{attempt},"t_orig":{_t(t_orig)},"origin":"{origin}","adu":"{adu.hex()}"}}\n')


def packet_columns(records) -> dict[str, np.ndarray]:
    """Same columns as :func:`metrics.packet_columns` straight from in-memory records."""
    n = len(records)
    if n == 0:
        return met.packet_columns([])
    cols = list(zip(*records))
    t_recv = np.array([np.nan if x is None else x / NS_PER_S for x in cols[1]], dtype=float)
    return {
        "t_send": np.array(cols[0], dtype=np.int64) / NS_PER_S,
        "t_recv": t_recv,
        "t_orig": np.array(cols[13], dtype=np.int64) / NS_PER_S,
        "retx": np.array(cols[8], dtype=np.int64),
        "attempt": np.array(cols[12], dtype=np.int64),
        "link": np.array([f"{s}>{d}" for s, d in zip(cols[2], cols[3])], dtype=object),
        "drop": np.array(cols[10], dtype=object),
        "attack": np.array([o.startswith("attack") for o in cols[14]], dtype=bool),
    }


def event_dicts(world: World) -> list[dict]:
    """Semantic events (device, plant, attack ground truth), time ordered."""
    out = []
    for t, source, kind, detail in world.trace.events:
        out.append({"t": t / NS_PER_S, "source": source, "kind": kind, **detail})
    for t, mode in world.plant.mode_log[1:]:
        out.append({"t": t / NS_PER_S, "source": "plant", "kind": "belt_mode", "mode": mode})
    for start, end, vol in world.plant.raw_spill_events():
        out.append({"t": start, "source": "plant", "kind": "spill", "start": start, "end": end, "volume": vol})
    for spec in world.attack_log.get("specs", []):
        out.append({"t": spec.start, "source": "adversary", "kind": "attack_window", "attack": spec.kind,
                    "start": spec.start, "end": spec.end})
    for a, b in world.jam_intervals or []:
        out.append({"t": a, "source": "jammer", "kind": "jam_window", "start": a, "end": b})
    out.sort(key=lambda e: e["t"])
    for e in out:
        e["t"] = round(e["t"], 9)
    return out


def plant_array(world: World) -> np.ndarray:
    rows = [(round(t / NS_PER_S, 9), round(h, 9), round(v, 9), round(s, 12)) for t, h, v, s in world.plant_rows]
    return np.array(rows, dtype=float).reshape(-1, 4)


def run_metrics(world: World, events: list[dict] | None = None) -> dict:
    events = event_dicts(world) if events is None else events
    cfg = world.cfg
    m = met.compute(packet_columns(world.net.records), plant_array(world), events, cfg.duration_s,
                    cfg.plant.spill_merge_gap)
    return m


def _sha(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_outputs(world: World, out_dir: str | Path, wall_s: float = 0.0) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = world.cfg
    events = event_dicts(world)
    with open(out / "events.jsonl", "w") as fh:
        for e in events:
            fh.write(json.dumps({"v": SCHEMA_VERSION, **e}, separators=(",", ":")) + "\n")
    files = ["events.jsonl", "plant.csv"]
    if cfg.write_packets:
        with open(out / "packets.jsonl", "w") as fh:
            fh.writelines(_packet_lines(world.net.records))
        files.append("packets.jsonl")
    plant = plant_array(world)
    with open(out / "plant.csv", "w") as fh:
        fh.write("t,tank_h,belt_speed,spill_cum\n")
        for t, h, v, s in plant:
            fh.write(f"{t:.3f},{h:.9f},{v:.6f},{s:.12f}\n")
    plant = met.load_plant(out / "plant.csv")
    m = met.compute(packet_columns(world.net.records), plant, events, cfg.duration_s, cfg.plant.spill_merge_gap)
    if world.monitor is not None:
        samples = adv.spectrum_scan(world.monitor, world.net.records)
        np.save(out / "spectrum.npy", samples.astype(np.float32))
        files.append("spectrum.npy")
    (out / "metrics.json").write_text(json.dumps(m, indent=2, sort_keys=True) + "\n")
    manifest = {
        "v": SCHEMA_VERSION,
        "version": __version__,
        "seed": cfg.seed,
        "deployment": cfg.deployment,
        "duration_s": cfg.duration_s,
        "spill_merge_gap": cfg.plant.spill_merge_gap,
        "config_digest": cfg.digest(),
        "config": cfg.to_dict(),
        "event_trace_digest": world.engine.trace_digest(),
        "file_digests": {f: _sha(out / f) for f in files},
        "wall_time_s": round(wall_s, 3),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return m


def run(cfg: ScenarioConfig, out_dir: str | Path | None = None) -> tuple[World, dict]:
    """Simulate ``cfg``; write the trace files when ``out_dir`` is given. Returns (world, metrics)."""
    t0 = time.perf_counter()
    world = simulate(cfg)
    wall = time.perf_counter() - t0
    log.info("simulated %s seed=%d in %.1fs", cfg.deployment, cfg.seed, wall)
    if out_dir is None:
        return world, run_metrics(world)
    return world, write_outputs(world, out_dir, wall)
