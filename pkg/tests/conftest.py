import sys

import pytest

from ics5gsim import modbus as mb
from ics5gsim.channel import Channel, ChannelParams, NodeRadio, default_topology
from ics5gsim.devices import Trace
from ics5gsim.engine import NS_PER_MS, SimEngine
from ics5gsim.network import Network


class Bench:
    """Engine + wired network + trace, with helpers to inject raw Modbus traffic."""

    def __init__(self, profile: str = "wired", seed: int = 1):
        self.engine = SimEngine(seed)
        self.channel = Channel(ChannelParams(profile=profile), seed, 120.0)
        for name, pos in default_topology().items():
            self.channel.register(NodeRadio(name, pos))
        self.net = Network(self.engine, self.channel)
        self.trace = Trace(self.engine)

    def write_reg(self, src: str, dst: str, unit: int, reg: int, value: int, at_ms: float, tid: int = 1) -> None:
        adu = mb.encode(mb.MbapFrame(tid, unit, mb.WriteSingleRegister(reg, value)))
        self.engine.schedule(int(at_ms * NS_PER_MS), src, lambda: self.net.send(src, dst, adu, False, "test"))

    def run_ms(self, t_ms: float) -> None:
        self.engine.run_until(int(t_ms * NS_PER_MS))

    def kinds(self, kind: str) -> list[tuple]:
        return [e for e in self.trace.events if e[2] == kind]


@pytest.fixture
def bench():
    return Bench()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
