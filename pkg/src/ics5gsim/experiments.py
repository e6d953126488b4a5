"""Batch experiments: attack matrix, IDS pipeline, jamming sweep and the summary report."""

from __future__ import annotations

import csv
import json
import logging
import os
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from . import ids, metrics as met, runner, scenario

log = logging.getLogger(__name__)

DEPLOYMENTS = ("wired", "5g_gc", "5g_dc")
SCENARIOS = ("benign", "dos", "injection", "mitm", "suppression")
ATTACKS = SCENARIOS[1:]
IDS_COMBOS = (("wired", "wired"), ("5g_gc", "5g_gc"), ("5g_dc", "5g_dc"), ("5g_gc", "5g_dc"), ("5g_dc", "5g_gc"))
GRACE_S = 5.0

JAM_GRID = tuple(np.round(np.arange(0.0, 60.0 + 1e-9, 2.5), 2))
JAM_DURATION_S = 300.0
JITTER_THRESHOLD_S = 0.010
HALT_THRESHOLD = 0.80


class ReportError(Exception):
    """Raised when a report cannot be produced; ``missing`` lists the absent inputs."""

    def __init__(self, missing: list[str]):
        self.missing = missing
        super().__init__("missing experiment outputs: " + ", ".join(missing))

    def as_dict(self) -> dict:
        return {"error": "missing_inputs", "missing": self.missing}


def _workers(requested: int | None, jobs: int) -> int:
    n = requested if requested else (os.cpu_count() or 1)
    return max(1, min(n, jobs))


def _map(fn, jobs: list, workers: int | None) -> list:
    w = _workers(workers, len(jobs))
    if w == 1:
        return [fn(j) for j in jobs]
    with get_context("spawn").Pool(w) as pool:
        return pool.map(fn, jobs, chunksize=1)


def _disruption(events: list[dict], window: tuple[float, float]) -> int:
    """Safety halts and long spills touching ``window`` (plus grace)."""
    a, b = window[0], window[1] + GRACE_S
    halts = sum(1 for e in events if e["kind"] == "safety_halt" and a <= e["t"] <= b)
    spills = met.merge_spill_events([(e["start"], e["end"], e["volume"]) for e in events if e["kind"] == "spill"])
    long_ = sum(1 for s, t, _ in spills if t - s >= 5.0 and s <= b and t >= a)
    return halts + long_


def _matrix_job(job: tuple) -> dict:
    cfg_dict, out_dir, scen = job
    cfg = scenario.from_dict(cfg_dict)
    _, m = runner.run(cfg, out_dir)
    events = met.load_events(Path(out_dir) / "events.jsonl")
    windows = cfg.windows()
    largest = max(windows, key=lambda w: w[1] - w[0]) if windows else None
    return {
        "scenario": scen,
        "deployment": cfg.deployment,
        "spill_count": m["spill_count"],
        "long_spills": m["long_spills"],
        "safety_halts": m["safety_halts"],
        "hmi_timeouts": m["hmi_timeouts"],
        "disruption_largest": _disruption(events, largest) if largest else 0,
        "stationary_fraction": round(m["stationary_fraction"], 4),
        "run_dir": str(out_dir),
    }


def matrix_configs(seed: int = 1, overrides=(), config_path=None) -> list[tuple[str, scenario.ScenarioConfig]]:
    out = []
    for scen in SCENARIOS:
        for dep in DEPLOYMENTS:
            kind = "none" if scen == "benign" else scen
            cfg = scenario.load(config_path, [*overrides, f"deployment={dep}", f"seed={seed}",
                                              f"attack.kind={kind}"])
            out.append((scen, cfg))
    return out


def run_matrix(out_root: str | Path, seed: int = 1, overrides=(), workers: int | None = None,
               config_path=None) -> list[dict]:
    """Every scenario on every deployment; writes ``matrix/table.csv`` (spill counts) and ``matrix/runs.csv``."""
    root = Path(out_root) / "matrix"
    root.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg.to_dict(), str(root / f"{scen}_{cfg.deployment}"), scen)
            for scen, cfg in matrix_configs(seed, overrides, config_path)]
    rows = _map(_matrix_job, jobs, workers)
    with open(root / "runs.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    by = {(r["scenario"], r["deployment"]): r for r in rows}
    with open(root / "table.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", *DEPLOYMENTS])
        for scen in SCENARIOS:
            w.writerow([scen, *(by[(scen, d)]["spill_count"] for d in DEPLOYMENTS)])
    return rows


def _traces(matrix_dir: Path) -> dict:
    out = {}
    for scen in SCENARIOS:
        for dep in DEPLOYMENTS:
            path = matrix_dir / f"{scen}_{dep}" / "packets.jsonl"
            out[(scen, dep)] = ids.PacketTrace.from_jsonl(path)
    return out


def _attack_windows(matrix_dir: Path, scen: str, dep: str) -> list[tuple[float, float]]:
    manifest = json.loads((matrix_dir / f"{scen}_{dep}" / "manifest.json").read_text())
    return scenario.from_dict(manifest["config"]).windows()


def ids_pipeline(out_root: str | Path) -> dict:
    """Train both detectors on each benign run and replay the attack runs (five train/eval pairings)."""
    root = Path(out_root)
    mdir = root / "matrix"
    missing = [str(mdir / f"{s}_{d}" / "packets.jsonl") for s in SCENARIOS for d in DEPLOYMENTS
               if not (mdir / f"{s}_{d}" / "packets.jsonl").exists()]
    if missing:
        raise ReportError(missing)
    odir = root / "ids"
    odir.mkdir(parents=True, exist_ok=True)
    traces = _traces(mdir)
    benign = {d: traces[("benign", d)] for d in DEPLOYMENTS}
    iat = {d: ids.train_iat(benign[d]) for d in DEPLOYMENTS}
    dtmc = {d: ids.train_dtmc(benign[d]) for d in DEPLOYMENTS}
    duration = json.loads((mdir / "benign_wired" / "manifest.json").read_text())["duration_s"]

    summary = []
    for train, ev in IDS_COMBOS:
        for det_name, detect, model in (("IAT", ids.detect_iat, iat[train]), ("DTMC", ids.detect_dtmc, dtmc[train])):
            total = None
            all_alerts = []
            for scen in ATTACKS:
                alerts = detect(model, traces[(scen, ev)])
                rep = ids.evaluate(alerts, _attack_windows(mdir, scen, ev), GRACE_S)
                total = rep if total is None else total.merge(rep)
                all_alerts += [(scen, a) for a in alerts]
            benign_alerts = detect(model, benign[ev])
            with open(odir / f"alerts_{det_name.lower()}_{train}_on_{ev}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["run", "t", "flow", "detector", "reason"])
                for scen, a in all_alerts + [("benign", a) for a in benign_alerts]:
                    w.writerow([scen, f"{a.t:.9f}", a.flow.label(), a.detector, a.reason])
            lat = [x for x in total.latencies if x is not None]
            summary.append({
                "train": train, "eval": ev, "detector": det_name,
                "attacks_total": total.attacks_total, "attacks_detected": total.attacks_detected,
                "false_alerts": total.false_alert_count,
                "benign_alerts": len(benign_alerts),
                "benign_active_fraction": round(ids.alert_active_fraction(benign_alerts, duration), 4),
                "mean_latency_s": round(float(np.mean(lat)), 3) if lat else None,
            })

    with open(odir / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(summary[0]))
        w.writeheader()
        w.writerows(summary)

    bounds = []
    flows = sorted({f for d in DEPLOYMENTS for f in iat[d].bounds}, key=lambda f: f.label())
    for f in flows:
        row = {"flow": f.label()}
        for d in DEPLOYMENTS:
            b = iat[d].bounds.get(f)
            row[f"{d}_lo"], row[f"{d}_hi"], row[f"{d}_n"] = b if b else ("", "", 0)
        bounds.append(row)
    with open(odir / "iat_bounds.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(bounds[0]))
        w.writeheader()
        w.writerows(bounds)

    modes = {}
    hist_cols = {}
    for d in DEPLOYMENTS:
        centres, counts = ids.iat_histogram(ids.pooled_iats(benign[d]))
        hist_cols[d] = counts
        modes[d] = ids.histogram_modes(centres, counts)
    with open(odir / "iat_hist.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iat_s", *DEPLOYMENTS])
        for i, c in enumerate(centres):
            w.writerow([f"{c:.3f}", *(int(hist_cols[d][i]) for d in DEPLOYMENTS)])

    gc, dc = iat["5g_gc"], iat["5g_dc"]
    shared = [f for f in gc.bounds if f in dc.bounds]
    not_wider = sorted(f.label() for f in shared if not dc.width(f) > gc.width(f))
    result = {"summary": summary, "modes": modes, "flows_compared": len(shared),
              "flows_not_wider_in_dc": not_wider,
              "flows_only_in_one": sorted(f.label() for f in set(gc.bounds) ^ set(dc.bounds))}
    (odir / "summary.json").write_text(json.dumps(result, indent=2) + "\n")
    return result


def jam_configs(seed: int = 1, overrides=(), grid=JAM_GRID, duration_s: float = JAM_DURATION_S,
                config_path=None) -> list[tuple[str, float | None, scenario.ScenarioConfig]]:
    base = [*overrides, "deployment=5g_gc", f"seed={seed}", f"duration_s={duration_s}", "write_packets=false"]
    out = [("baseline", None, scenario.load(config_path, base))]
    for mode in ("directed", "undirected"):
        for p in grid:
            ov = [*base, "jammer.enabled=true", f"jammer.tx_power={p}",
                  f"jammer.directed={'true' if mode == 'directed' else 'false'}"]
            out.append((mode, float(p), scenario.load(config_path, ov)))
    return out


def _jam_job(job: tuple) -> dict:
    cfg_dict, out_dir, mode, power = job
    cfg = scenario.from_dict(cfg_dict)
    _, m = runner.run(cfg, out_dir)
    return {"mode": mode, "power_dbm": "" if power is None else power, "jitter_s": m["jitter_s"],
            "retx_per_s": m["retx_per_s"], "halting_fraction": m["stationary_fraction"],
            "delivered": m["delivered"], "run_dir": str(out_dir)}


def run_jam_sweep(out_root: str | Path, seed: int = 1, overrides=(), workers: int | None = None,
                  grid=JAM_GRID, duration_s: float = JAM_DURATION_S, config_path=None) -> list[dict]:
    root = Path(out_root) / "jam"
    root.mkdir(parents=True, exist_ok=True)
    jobs = []
    for mode, p, cfg in jam_configs(seed, overrides, grid, duration_s, config_path):
        name = "baseline" if p is None else f"{mode}_{p:05.1f}"
        jobs.append((cfg.to_dict(), str(root / name), mode, p))
    rows = _map(_jam_job, jobs, workers)
    with open(root / "curves.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    return rows


def crossing(powers, values, threshold: float) -> float | None:
    """First power at which ``values`` reaches ``threshold``, linearly interpolated."""
    for i, (p, v) in enumerate(zip(powers, values)):
        if v >= threshold:
            if i == 0:
                return float(p)
            p0, v0 = powers[i - 1], values[i - 1]
            return float(p0 + (threshold - v0) * (p - p0) / (v - v0))
    return None


def has_interior_max(values) -> bool:
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        return False
    k = int(np.argmax(v))
    return bool(0 < k < v.size - 1 and v[k] > v[0] and v[k] > v[-1])


def jam_analysis(rows: list[dict]) -> dict:
    out: dict = {}
    for r in rows:
        if r["mode"] == "baseline":
            out["baseline_halting_fraction"] = float(r["halting_fraction"])
    for mode in ("directed", "undirected"):
        pts = sorted((float(r["power_dbm"]), r) for r in rows if r["mode"] == mode)
        powers = [p for p, _ in pts]
        out[mode] = {
            "jitter_crossing_dbm": crossing(powers, [float(r["jitter_s"]) for _, r in pts], JITTER_THRESHOLD_S),
            "halting_crossing_dbm": crossing(powers, [float(r["halting_fraction"]) for _, r in pts],
                                             HALT_THRESHOLD),
            "retx_interior_max": has_interior_max([float(r["retx_per_s"]) for _, r in pts]),
        }
    for key in ("jitter_crossing_dbm", "halting_crossing_dbm"):
        d, u = out.get("directed", {}).get(key), out.get("undirected", {}).get(key)
        out[key.replace("crossing_dbm", "gap_db")] = None if d is None or u is None else u - d
    return out


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def matrix_checks(rows: list[dict]) -> list[tuple[str, bool, str]]:
    by = {(r["scenario"], r["deployment"]): r for r in rows}
    sp = {k: int(v["spill_count"]) for k, v in by.items()}
    b = [sp[("benign", d)] for d in DEPLOYMENTS]
    s = [sp[("suppression", d)] for d in DEPLOYMENTS]
    m = [sp[("mitm", d)] for d in DEPLOYMENTS]
    dos = [sp[("dos", d)] for d in DEPLOYMENTS]
    disr = int(by[("dos", "5g_dc")]["disruption_largest"])
    return [
        ("benign spills 0/0/0", b == [0, 0, 0], f"{b}"),
        ("suppression spills equal and >= 1", len(set(s)) == 1 and s[0] >= 1, f"{s}"),
        ("mitm spills DC >= GC == Wired >= 1", m[2] >= m[1] == m[0] >= 1, f"wired/gc/dc {m}"),
        ("dos spills 0 on Wired and GC", dos[0] == 0 and dos[1] == 0, f"{dos}"),
        ("dos disruption in DC largest variant", disr >= 1, f"{disr} halts/long spills"),
    ]


def ids_checks(result: dict) -> list[tuple[str, bool, str]]:
    summ = {(r["train"], r["eval"], r["detector"]): r for r in result["summary"]}
    fa = [int(summ[(d, d, "IAT")]["false_alerts"]) for d in DEPLOYMENTS]
    iat_w = int(summ[("wired", "wired", "IAT")]["attacks_detected"])
    dtmc_w = int(summ[("wired", "wired", "DTMC")]["attacks_detected"])
    gc_on_dc = float(summ[("5g_gc", "5g_dc", "IAT")]["benign_active_fraction"])
    dc_on_gc = int(summ[("5g_dc", "5g_gc", "IAT")]["false_alerts"])
    modes = result["modes"]
    mode_ok = all(any(abs(x - target) <= 0.005 + 1e-9 for x in modes[d]) for d in DEPLOYMENTS
                  for target in (0.04, 0.10))
    widths_ok = result["flows_compared"] > 0 and not result["flows_not_wider_in_dc"] \
        and not result["flows_only_in_one"]
    return [
        ("IAT histogram modes at 0.04 s and 0.10 s", mode_ok, json.dumps(modes)),
        ("IAT width DC > GC for every flow", widths_ok,
         f"{result['flows_compared']} flows, not wider: {result['flows_not_wider_in_dc']}"),
        ("IAT false alerts Wired <= GC <= DC, Wired == 0", fa[0] == 0 and fa[0] <= fa[1] <= fa[2], f"{fa}"),
        ("IAT detects >= 16/20 on Wired", iat_w >= 16, f"{iat_w}/20"),
        ("DTMC detects fewer than IAT on Wired", dtmc_w < iat_w, f"DTMC {dtmc_w} vs IAT {iat_w}"),
        ("GC-trained IAT on DC benign active > 50%", gc_on_dc > 0.5, f"{gc_on_dc:.3f}"),
        ("DC-trained IAT on GC: fewer false alerts than DC on DC", dc_on_gc < fa[2], f"{dc_on_gc} vs {fa[2]}"),
    ]


def jam_checks(a: dict) -> list[tuple[str, bool, str]]:
    base = a.get("baseline_halting_fraction")
    out = [("baseline halting fraction 0.55 +- 0.10", base is not None and abs(base - 0.55) <= 0.10, f"{base}")]
    for key, label in (("jitter", "jitter 10 ms"), ("halting", "halting 0.80")):
        d = a["directed"][f"{key}_crossing_dbm"]
        u = a["undirected"][f"{key}_crossing_dbm"]
        gap = a[f"{key}_gap_db"]
        ok = d is not None and u is not None and d < u and abs(gap - 25.0) <= 3.0
        out.append((f"{label} crossing directed < undirected, gap 25 +- 3 dB", ok, f"directed {d} undirected {u}"))
    out.append(("directed retx/s curve has an interior maximum", a["directed"]["retx_interior_max"],
                f"undirected: {a['undirected']['retx_interior_max']}"))
    return out


def report(out_root: str | Path) -> tuple[str, bool]:
    """Structured text summary of the matrix, IDS and jamming outputs under ``out_root``."""
    root = Path(out_root)
    need = [root / "matrix" / "runs.csv", root / "ids" / "summary.json", root / "jam" / "curves.csv"]
    missing = [str(p) for p in need if not p.exists()]
    if not root.is_dir() or missing:
        raise ReportError(missing or [str(root)])
    lines = []
    ok_all = True

    rows = _read_csv(need[0])
    lines.append("[matrix] spills (wired / 5g_gc / 5g_dc)")
    by = {(r["scenario"], r["deployment"]): r for r in rows}
    for scen in SCENARIOS:
        lines.append(f"  {scen:<12}" + " ".join(f"{by[(scen, d)]['spill_count']:>5}" for d in DEPLOYMENTS))
    sections = [("matrix", matrix_checks(rows)),
                ("ids", ids_checks(json.loads(need[1].read_text())))]
    jam = jam_analysis(_read_csv(need[2]))
    sections.append(("jam", jam_checks(jam)))
    for name, checks in sections:
        for label, ok, detail in checks:
            ok_all &= ok
            lines.append(f"[{name}] {'PASS' if ok else 'FAIL'} {label}: {detail}")
    lines.append(f"[jam] thresholds: {json.dumps({k: jam[k] for k in ('directed', 'undirected')})}")
    lines.append(f"overall: {'PASS' if ok_all else 'FAIL'}")
    text = "\n".join(lines) + "\n"
    (root / "report.txt").write_text(text)
    return text, ok_all


def spectrum_recon(run_dir: str | Path) -> dict:
    """Cycle inferred from a run's spectrum trace next to the ground-truth bottle cycle."""
    from .adversary import NO_CYCLE, infer_cycle
    run_dir = Path(run_dir)
    samples = 10.0 ** (np.load(run_dir / "spectrum.npy").astype(float) / 10.0)  # dBm -> mW
    manifest = json.loads((run_dir / "manifest.json").read_text())
    bin_s = manifest["config"]["monitor"]["bin_ms"] / 1000.0
    found = infer_cycle(samples, dt=bin_s)
    found = found if found == NO_CYCLE else float(found)
    truth = json.loads((run_dir / "metrics.json").read_text()).get("bottle_cycle_s")
    err = None if found == NO_CYCLE or not truth else float(abs(found - truth) / truth)
    return {"inferred_s": found, "ground_truth_s": truth, "rel_error": err,
            "within_5pct": bool(err is not None and err <= 0.05)}
