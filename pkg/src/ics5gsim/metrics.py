"""Run metrics computed purely from trace data (in memory or reloaded from the emitted files)."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .plant import merge_spill_events


def packet_columns(rows) -> dict[str, np.ndarray]:
    """Columnar view of packet rows given as dicts with the packets.jsonl field names."""
    n = len(rows)
    t_recv = np.array([r["t_recv"] if r["t_recv"] is not None else np.nan for r in rows], dtype=float)
    return {
        "t_send": np.array([r["t_send"] for r in rows], dtype=float).reshape(n),
        "t_recv": t_recv,
        "t_orig": np.array([r["t_orig"] for r in rows], dtype=float).reshape(n),
        "retx": np.array([r["retx"] for r in rows], dtype=np.int64).reshape(n),
        "attempt": np.array([r["attempt"] for r in rows], dtype=np.int64).reshape(n),
        "link": np.array([f'{r["src"]}>{r["dst"]}' for r in rows], dtype=object).reshape(n),
        "drop": np.array([r["drop_reason"] for r in rows], dtype=object).reshape(n),
        "attack": np.array([r["origin"].startswith("attack") for r in rows], dtype=bool).reshape(n),
    }


def compute(packets: dict[str, np.ndarray], plant_rows: np.ndarray, events: list[dict], duration_s: float,
            spill_merge_gap: float = 1.0) -> dict:
    """All reported metrics. ``plant_rows`` columns: t, h, speed, spill_cum."""
    out: dict = {"duration_s": duration_s}
    spills = [(e["start"], e["end"], e["volume"]) for e in events if e["kind"] == "spill"]
    spills = merge_spill_events(spills, spill_merge_gap)
    out["spill_count"] = len(spills)
    out["spill_volume"] = float(sum(v for _, _, v in spills))
    out["long_spills"] = sum(1 for a, b, _ in spills if b - a >= 5.0)
    speed = plant_rows[:, 2] if plant_rows.size else np.zeros(0)
    out["stationary_fraction"] = float(np.mean(speed == 0.0)) if speed.size else 0.0
    out["belt_speed_mean"] = float(speed.mean()) if speed.size else 0.0
    out["hmi_timeouts"] = sum(1 for e in events if e["kind"] == "timeout")
    halts = [e for e in events if e["kind"] == "safety_halt"]
    out["safety_halts"] = len(halts)
    out["failsafe_stops"] = sum(1 for e in events if e["kind"] == "failsafe_stop")
    stops = np.array([e["t"] for e in events if e["kind"] == "belt_mode" and e["mode"] == "stopped"])
    out["bottle_cycle_s"] = float(np.median(np.diff(stops))) if stops.size > 2 else None

    p = packets
    n = p["t_send"].shape[0]
    delivered = ~np.isnan(p["t_recv"]) if n else np.zeros(0, bool)
    legit = delivered & ~p["attack"] if n else delivered
    delay = p["t_recv"] - p["t_orig"] if n else np.zeros(0)
    out["packets"] = int(n)
    out["delivered"] = int(delivered.sum())
    drops: dict[str, int] = {}
    for reason in p["drop"][~delivered] if n else []:
        drops[reason] = drops.get(reason, 0) + 1
    out["drops"] = dict(sorted(drops.items()))
    out["transport_retransmissions"] = int((p["attempt"] > 1).sum()) if n else 0
    harq = int(p["retx"][legit].sum()) if n else 0
    out["harq_retx_delivered"] = harq
    out["retx_per_s"] = harq / duration_s
    out["harq_retx_total"] = int(p["retx"][~p["attack"]].sum()) if n else 0
    d = delay[legit]
    out["delay_mean_s"] = float(d.mean()) if d.size else 0.0
    out["jitter_s"] = float(d.std()) if d.size else 0.0
    per_link = {}
    if n:
        links = p["link"][legit]
        order = np.argsort(links, kind="stable")
        links_sorted, d_sorted = links[order], d[order]
        uniq, starts = np.unique(links_sorted, return_index=True)
        bounds = list(starts) + [links_sorted.shape[0]]
        for i, name in enumerate(uniq):
            seg = d_sorted[bounds[i]:bounds[i + 1]]
            per_link[str(name)] = float(seg.std())
    out["jitter_per_link_s"] = per_link
    out["jitter_link_mean_s"] = float(np.mean(list(per_link.values()))) if per_link else 0.0
    return out


def load_packets(path: str | Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh]


def load_events(path: str | Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh]


def load_plant(path: str | Path) -> np.ndarray:
    with open(path) as fh:
        reader = csv.reader(fh)
        next(reader)
        return np.array([[float(x) for x in row] for row in reader]).reshape(-1, 4)


def recompute(run_dir: str | Path) -> dict:
    """Metrics from a run directory's files alone."""
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text())
    packets = packet_columns(load_packets(run_dir / "packets.jsonl"))
    return compute(packets, load_plant(run_dir / "plant.csv"), load_events(run_dir / "events.jsonl"),
                   manifest["duration_s"], manifest.get("spill_merge_gap", 1.0))
