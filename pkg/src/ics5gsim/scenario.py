"""Scenario configuration: nested dataclasses loaded from YAML/JSON with strict key checking."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .channel import ChannelParams
from .devices import DeviceParams
from .plant import PlantParams

DEPLOYMENTS = ("wired", "5g_gc", "5g_dc")
ATTACK_KINDS = ("none", "dos", "mitm", "injection", "suppression")
DEFAULT_STARTS = [200.0, 400.0, 600.0, 800.0, 1000.0]
DEFAULT_DURATIONS = [5.0, 10.0, 20.0, 40.0, 80.0]


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every offending key."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass
class AttackConfig:
    kind: str = "none"
    starts: list = field(default_factory=lambda: list(DEFAULT_STARTS))
    durations: list = field(default_factory=lambda: list(DEFAULT_DURATIONS))
    dos_rate: float = 4000.0
    mitm_delay_ms: float = 2.0
    inject_period_s: float = 2.5
    inject_offset_s: float = 0.0


@dataclass
class JammerConfig:
    enabled: bool = False
    tx_power: float = 30.0
    directed: bool = True
    elements: int = 4
    position: list = field(default_factory=lambda: [25.0, -5.0, 9.5])
    # duty pattern: jam for on_s, then rest for off_s, repeating from start_s
    start_s: float = 0.0
    on_s: float = 4.5
    off_s: float = 4.0


@dataclass
class MonitorConfig:
    enabled: bool = False
    position: list = field(default_factory=lambda: [-20.0, 10.0, 1.5])
    bin_ms: float = 1.0


@dataclass
class OperatorStep:
    t: float
    command: str


@dataclass
class ScenarioConfig:
    deployment: str = "wired"
    duration_s: float = 1200.0
    seed: int = 1
    plant: PlantParams = field(default_factory=PlantParams)
    devices: DeviceParams = field(default_factory=DeviceParams)
    channel: ChannelParams = field(default_factory=ChannelParams)
    attack: AttackConfig = field(default_factory=AttackConfig)
    jammer: JammerConfig = field(default_factory=JammerConfig)
    monitor: MonitorConfig = field(default_factory=MonitorConfig)
    operator_script: list = field(default_factory=lambda: [
        OperatorStep(600.0, "halt"), OperatorStep(660.0, "half"), OperatorStep(780.0, "run")])
    positions: dict = field(default_factory=dict)
    write_packets: bool = True

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        """Hash of everything that affects the simulation (output options excluded)."""
        d = self.to_dict()
        d.pop("write_packets")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def windows(self) -> list[tuple[float, float]]:
        a = self.attack
        if a.kind == "none":
            return []
        return [(s, s + d) for s, d in zip(a.starts, a.durations)]


def _build(cls, data, path: str, problems: list[str]):
    if not isinstance(data, dict):
        problems.append(f"{path or '<root>'}: expected a mapping")
        return cls()
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        where = f"{path}.{key}" if path else key
        f = fields.get(key)
        if f is None:
            problems.append(f"{where}: unknown key")
            continue
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        if dataclasses.is_dataclass(default):
            kwargs[key] = _build(type(default), value, where, problems)
        elif key == "operator_script":
            steps = []
            for i, step in enumerate(value or []):
                steps.append(_build(OperatorStep, step, f"{where}[{i}]", problems))
            kwargs[key] = steps
        else:
            kwargs[key] = _coerce(default, value, where, problems)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        problems.append(f"{path or '<root>'}: {exc}")
        return cls()


def _coerce(default, value, where: str, problems: list[str]):
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            problems.append(f"{where}: expected bool, got {value!r}")
        return value
    if isinstance(default, (int, float)) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"{where}: expected number, got {value!r}")
            return value
        return type(default)(value) if isinstance(default, float) or float(value).is_integer() else value
    if isinstance(default, list) and not isinstance(value, list):
        problems.append(f"{where}: expected list, got {value!r}")
    if isinstance(default, dict) and not isinstance(value, dict):
        problems.append(f"{where}: expected mapping, got {value!r}")
    if isinstance(default, str) and not isinstance(value, str):
        problems.append(f"{where}: expected string, got {value!r}")
    return value


def validate(cfg: ScenarioConfig) -> list[str]:
    problems = []
    if cfg.deployment not in DEPLOYMENTS:
        problems.append(f"deployment: must be one of {DEPLOYMENTS}")
    if cfg.attack.kind not in ATTACK_KINDS:
        problems.append(f"attack.kind: must be one of {ATTACK_KINDS}")
    if len(cfg.attack.starts) != len(cfg.attack.durations):
        problems.append("attack.durations: length must match attack.starts")
    if cfg.duration_s <= 0:
        problems.append("duration_s: must be positive")
    if cfg.devices.t_safe_ms <= cfg.devices.sensor_period_ms:
        problems.append("devices.t_safe_ms: must exceed the sensor publish period")
    for step in cfg.operator_script:
        if step.command not in ("halt", "half", "run"):
            problems.append(f"operator_script: unknown command {step.command!r}")
    return problems


def from_dict(data: dict | None) -> ScenarioConfig:
    problems: list[str] = []
    cfg = _build(ScenarioConfig, data or {}, "", problems)
    problems += validate(cfg) if not problems else []
    if problems:
        raise ConfigError(problems)
    cfg.channel.profile = cfg.deployment
    return cfg


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``a.b.c=value`` strings; values are parsed as YAML scalars."""
    data = json.loads(json.dumps(data or {}))
    for item in overrides or ():
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError([f"override {item!r}: expected key=value"])
        node = data
        parts = key.strip().split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError([f"override {item!r}: {part} is not a mapping"])
        node[parts[-1]] = yaml.safe_load(raw)
    return data


def load(path: str | Path | None = None, overrides=(), **fields) -> ScenarioConfig:
    data: dict = {}
    if path is not None:
        text = Path(path).read_text()
        data = (json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)) or {}
    data.update(fields)
    return from_dict(apply_overrides(data, overrides))
