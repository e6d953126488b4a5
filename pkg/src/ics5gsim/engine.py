"""Discrete-event core: integer-nanosecond clock, FIFO tie-broken queue, named RNG streams."""

from __future__ import annotations

import hashlib
import heapq
import random
import struct
from dataclasses import dataclass, field
from typing import Any, Callable

NS_PER_S = 1_000_000_000
NS_PER_MS = 1_000_000
NS_PER_US = 1_000


def seconds(t: float) -> int:
    """Convert seconds to integer nanoseconds (rounded to nearest)."""
    return int(round(t * NS_PER_S))


def to_seconds(t_ns: int) -> float:
    return t_ns / NS_PER_S


class SchedulingError(RuntimeError):
    """Raised when an event is scheduled before the current simulation time."""


@dataclass(order=True)
class SimEvent:
    fire_at: int
    seq: int
    target: str = field(compare=False)
    callback: Callable[..., Any] = field(compare=False, repr=False)
    args: tuple = field(compare=False, default=(), repr=False)


def stream_seed(root_seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{int(root_seed)}/{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


class RngStream:
    """Independent random substream keyed by ``(root_seed, label)``."""

    DISTRIBUTIONS = ("uniform", "normal", "bernoulli", "integers")

    def __init__(self, root_seed: int, label: str):
        self.root_seed = int(root_seed)
        self.label = label
        self._r = random.Random(stream_seed(root_seed, label))
        # bound methods are hot in the channel model
        self.random = self._r.random
        self.uniform = self._r.uniform
        self.gauss = self._r.gauss

    def sample(self, distribution: str, *params: float):
        if distribution == "uniform":
            lo, hi = params
            return lo + (hi - lo) * self._r.random()
        if distribution == "normal":
            mu, sigma = params
            return self._r.gauss(mu, sigma)
        if distribution == "bernoulli":
            (p,) = params
            return self._r.random() < p
        if distribution == "integers":
            lo, hi = params
            return self._r.randrange(int(lo), int(hi))
        raise ValueError(f"unknown distribution {distribution!r}")


class SimEngine:
    """Single-threaded event loop.

    Events fire in ``(fire_at, seq)`` order; ``seq`` is assigned at scheduling time so
    simultaneous events run FIFO. Every executed event is folded into a running SHA-256
    trace digest (time, seq, target, handler name).
    """

    def __init__(self, root_seed: int = 0, trace: bool = True):
        self.root_seed = int(root_seed)
        self.now = 0
        self._queue: list = []
        self._seq = 0
        self._streams: dict[str, RngStream] = {}
        self.executed = 0
        self._trace = hashlib.sha256() if trace else None
        self._pack = struct.Struct("<qq").pack
        self.hooks: list[Callable[[SimEvent], None]] = []

    # -- scheduling -------------------------------------------------------
    def schedule(self, fire_at: int, target: str, callback: Callable, *args) -> int:
        if fire_at < self.now:
            raise SchedulingError(f"event for {target} at {fire_at} ns is before now={self.now} ns")
        self._seq += 1
        heapq.heappush(self._queue, (fire_at, self._seq, target, callback, args))
        return self._seq

    def schedule_in(self, delay: int, target: str, callback: Callable, *args) -> int:
        return self.schedule(self.now + delay, target, callback, *args)

    def push(self, event: SimEvent) -> int:
        """Schedule a prebuilt :class:`SimEvent`; its ``seq`` is reassigned."""
        return self.schedule(event.fire_at, event.target, event.callback, *event.args)

    def pending(self) -> int:
        return len(self._queue)

    # -- execution --------------------------------------------------------
    def run_until(self, t_end: int) -> int:
        q = self._queue
        pop = heapq.heappop
        trace = self._trace
        pack = self._pack
        hooks = self.hooks
        count = 0
        last = (self.now, -1)
        while q and q[0][0] <= t_end:
            fire_at, seq, target, callback, args = pop(q)
            assert (fire_at, seq) > last, "event order violated"
            last = (fire_at, seq)
            self.now = fire_at
            if trace is not None:
                trace.update(pack(fire_at, seq))
                trace.update(target.encode())
                trace.update(callback.__name__.encode())
            if hooks:
                ev = SimEvent(fire_at, seq, target, callback, args)
                for h in hooks:
                    h(ev)
            callback(*args)
            count += 1
        if t_end > self.now:
            self.now = t_end
        self.executed += count
        return count

    # -- randomness -------------------------------------------------------
    def stream(self, label: str) -> RngStream:
        s = self._streams.get(label)
        if s is None:
            s = self._streams[label] = RngStream(self.root_seed, label)
        return s

    def rng(self, label: str, distribution: str, *params: float):
        return self.stream(label).sample(distribution, *params)

    def trace_digest(self) -> str:
        return self._trace.hexdigest() if self._trace is not None else ""
