"""Communication-based intrusion detection: per-flow inter-arrival bounds and a global DTMC."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .modbus import FlowKey

log = logging.getLogger(__name__)

IAT = "IAT"
DTMC = "DTMC"


class Alert(NamedTuple):
    t: float
    flow: FlowKey
    detector: str
    reason: str  # below_bound | above_bound | unseen_transition | rare_transition


@dataclass
class PacketTrace:
    """Delivered packets as seen by a network monitor, ordered by arrival time."""

    t: np.ndarray
    flow_id: np.ndarray
    flows: list[FlowKey]

    def __len__(self) -> int:
        return int(self.t.shape[0])

    @classmethod
    def from_rows(cls, rows) -> "PacketTrace":
        """``rows`` are packets.jsonl dicts (or anything with the same keys)."""
        index: dict[FlowKey, int] = {}
        t, ids = [], []
        for r in rows:
            if r["t_recv"] is None:
                continue
            key = FlowKey(r["src"], r["dst"], int(r["fc"]), r["dir"])
            fid = index.get(key)
            if fid is None:
                fid = index[key] = len(index)
            t.append(r["t_recv"])
            ids.append(fid)
        return cls._sorted(np.array(t, dtype=float), np.array(ids, dtype=np.int64), list(index))

    @classmethod
    def from_records(cls, records) -> "PacketTrace":
        """Build from in-memory network records (ns timestamps)."""
        rows = ({"t_recv": None if r[1] is None else r[1] / 1e9, "src": r[2], "dst": r[3], "fc": r[5], "dir": r[6]}
                for r in records)
        return cls.from_rows(rows)

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "PacketTrace":
        import json
        with open(path) as fh:
            return cls.from_rows(json.loads(line) for line in fh)

    @staticmethod
    def _sorted(t, ids, flows) -> "PacketTrace":
        order = np.argsort(t, kind="stable")
        return PacketTrace(t[order], ids[order], flows)

    @classmethod
    def synthetic(cls, events) -> "PacketTrace":
        """From ``(t, FlowKey)`` pairs; handy for micro-traces."""
        return cls.from_rows({"t_recv": t, "src": k.src, "dst": k.dst, "fc": k.function_code, "dir": k.direction}
                             for t, k in events)


def _cooldown(cands, cooldown: float) -> list[Alert]:
    """Keep an alert only if the same (flow, detector) has not alerted within ``cooldown`` seconds."""
    last: dict[tuple, float] = {}
    out = []
    for a in sorted(cands, key=lambda a: a.t):
        k = (a.flow, a.detector)
        prev = last.get(k)
        if prev is not None and a.t - prev < cooldown:
            continue
        last[k] = a.t
        out.append(a)
    return out


# -- inter-arrival time ----------------------------------------------------------

@dataclass
class IatModel:
    bounds: dict[FlowKey, tuple[float, float, int]] = field(default_factory=dict)
    tolerance: float = 0.1

    def width(self, flow: FlowKey) -> float:
        lo, hi, _ = self.bounds[flow]
        return hi - lo


def _flow_iats(trace: PacketTrace):
    """Yield (flow, arrival times[1:], iats) per flow."""
    if len(trace) == 0:
        return
    order = np.argsort(trace.flow_id, kind="stable")
    ids = trace.flow_id[order]
    ts = trace.t[order]
    cuts = np.flatnonzero(np.diff(ids)) + 1
    for seg_ids, seg_t in zip(np.split(ids, cuts), np.split(ts, cuts)):
        if seg_t.shape[0] >= 2:
            yield trace.flows[int(seg_ids[0])], seg_t[1:], np.diff(seg_t)


def train_iat(trace: PacketTrace, tolerance: float = 0.1, min_samples: int = 100) -> IatModel:
    model = IatModel(tolerance=tolerance)
    for flow, _, iat in _flow_iats(trace):
        if iat.shape[0] < min_samples:
            log.warning("flow %s has %d IAT samples (< %d); excluded", flow.label(), iat.shape[0], min_samples)
            continue
        model.bounds[flow] = ((1 - tolerance) * float(iat.min()), (1 + tolerance) * float(iat.max()),
                              int(iat.shape[0]))
    return model


def detect_iat(model: IatModel, trace: PacketTrace, cooldown: float = 1.0) -> list[Alert]:
    cands = []
    for flow, t, iat in _flow_iats(trace):
        b = model.bounds.get(flow)
        if b is None:
            continue
        lo, hi, _ = b
        for i in np.flatnonzero((iat < lo) | (iat > hi)):
            cands.append(Alert(float(t[i]), flow, IAT, "below_bound" if iat[i] < lo else "above_bound"))
    return _cooldown(cands, cooldown)


def pooled_iats(trace: PacketTrace) -> np.ndarray:
    parts = [iat for _, _, iat in _flow_iats(trace)]
    return np.concatenate(parts) if parts else np.zeros(0)


def iat_histogram(iats: np.ndarray, bin_s: float = 0.005, max_s: float = 0.25) -> tuple[np.ndarray, np.ndarray]:
    """Counts on bins centred at multiples of ``bin_s``; returns (centres, counts)."""
    n = int(round(max_s / bin_s)) + 1
    edges = (np.arange(n + 1) - 0.5) * bin_s
    counts, _ = np.histogram(iats, bins=edges)
    return np.arange(n) * bin_s, counts


def histogram_modes(centres: np.ndarray, counts: np.ndarray, min_share: float = 0.05) -> list[float]:
    """Centres of local maxima holding at least ``min_share`` of all samples."""
    total = counts.sum()
    if total == 0:
        return []
    padded = np.concatenate([[-1], counts, [-1]])
    peak = (counts >= padded[:-2]) & (counts >= padded[2:]) & (counts >= min_share * total)
    return [float(c) for c in centres[peak]]


# -- DTMC -------------------------------------------------------------------------

@dataclass
class DtmcModel:
    states: list[tuple]
    probs: dict[tuple, dict[tuple, float]]
    p_min: float = 1e-4

    def prob(self, a: tuple, b: tuple) -> float:
        return self.probs.get(a, {}).get(b, 0.0)

    @property
    def threshold(self) -> float:
        """p_min, lowered if needed so that no transition seen in training is flagged."""
        seen = [p for row in self.probs.values() for p in row.values()]
        return min([self.p_min, *seen])


def _classes(trace: PacketTrace) -> list[tuple]:
    return [trace.flows[int(i)].msg_class for i in trace.flow_id]


def train_dtmc(trace: PacketTrace, p_min: float = 1e-4) -> DtmcModel:
    if len(trace) < 2:
        raise ValueError("DTMC training needs a non-empty trace with at least two messages")
    seq = _classes(trace)
    counts: dict[tuple, dict[tuple, int]] = {}
    for a, b in zip(seq, seq[1:]):
        row = counts.setdefault(a, {})
        row[b] = row.get(b, 0) + 1
    probs = {}
    for a, row in counts.items():
        total = sum(row.values())
        probs[a] = {b: c / total for b, c in row.items()}
    return DtmcModel(sorted(set(seq)), probs, p_min)


def detect_dtmc(model: DtmcModel, trace: PacketTrace, cooldown: float = 1.0) -> list[Alert]:
    seq = _classes(trace)
    cands = []
    threshold = model.threshold
    for i in range(1, len(seq)):
        p = model.prob(seq[i - 1], seq[i])
        if p < threshold:
            flow = trace.flows[int(trace.flow_id[i])]
            cands.append(Alert(float(trace.t[i]), flow, DTMC, "unseen_transition" if p == 0 else "rare_transition"))
    return _cooldown(cands, cooldown)


# -- evaluation -------------------------------------------------------------------

@dataclass
class EvalReport:
    attacks_total: int
    attacks_detected: int
    false_alert_count: int
    latencies: list[float | None]
    alerts_in_windows: int = 0

    @property
    def undetected(self) -> int:
        return self.attacks_total - self.attacks_detected

    def merge(self, other: "EvalReport") -> "EvalReport":
        return EvalReport(self.attacks_total + other.attacks_total, self.attacks_detected + other.attacks_detected,
                          self.false_alert_count + other.false_alert_count, self.latencies + other.latencies,
                          self.alerts_in_windows + other.alerts_in_windows)


def evaluate(alerts, windows, grace: float = 5.0) -> EvalReport:
    """Window i is detected iff an alert lands in [start, end + grace]; other alerts are false."""
    ws = sorted((float(a), float(b)) for a, b in windows)
    for (a0, b0), (a1, _) in zip(ws, ws[1:]):
        if a1 < b0 + grace:
            raise ValueError(f"overlapping ground-truth windows at {a0} and {a1}")
    first: list[float | None] = [None] * len(ws)
    false_alerts = 0
    inside = 0
    for al in sorted(alerts, key=lambda a: a.t):
        hit = None
        for i, (a, b) in enumerate(ws):
            if a <= al.t <= b + grace:
                hit = i
                break
        if hit is None:
            false_alerts += 1
        else:
            inside += 1
            if first[hit] is None:
                first[hit] = al.t - ws[hit][0]
    detected = sum(1 for x in first if x is not None)
    return EvalReport(len(ws), detected, false_alerts, first, inside)


def alert_active_fraction(alerts, duration: float, bin_s: float = 1.0) -> float:
    n = int(np.ceil(duration / bin_s))
    if n == 0:
        return 0.0
    hit = np.zeros(n, dtype=bool)
    for a in alerts:
        k = int(a.t // bin_s)
        if 0 <= k < n:
            hit[k] = True
    return float(hit.mean())


def write_alerts_csv(alerts, path: str | Path, extra: dict | None = None) -> None:
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*extra.keys(), "t", "flow", "detector", "reason"])
        for a in alerts:
            w.writerow([*extra.values(), f"{a.t:.9f}", a.flow.label(), a.detector, a.reason])
