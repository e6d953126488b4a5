"""Time the numeric kernels with and without numba.

Each path runs in its own interpreter because ICS5GSIM_NO_JIT is read at import:

    python3 benchmarks/bench_kernels.py
"""

from __future__ import annotations

import json
import os
import subprocess
import sys
import time

CHILD = r"""
import json, time
import numpy as np
from ics5gsim import kernels as K
from ics5gsim._jit import JIT_ENABLED
from ics5gsim.plant import Plant, PlantParams

def plant_run(seconds):
    p = Plant(PlantParams())
    p.set_actuator("output_valve", "open")
    p.set_actuator("input_valve", "open")
    p.set_actuator("belt", "normal")
    t = time.perf_counter()
    p.advance_to(int(seconds * 1e9))
    return time.perf_counter() - t

def power_run(n):
    rng = np.random.default_rng(0)
    t0 = np.sort(rng.uniform(0, 300e6, n))
    t1 = t0 + rng.uniform(5, 3000, n)
    p = rng.uniform(1e-9, 1e-6, n)
    out = np.zeros(300_000)
    t = time.perf_counter()
    K.accumulate_power(t0, t1, p, 1000.0, out)
    return time.perf_counter() - t

plant_run(1.0); power_run(100)   # compile / warm up
res = {"jit": JIT_ENABLED,
       "plant_300s": min(plant_run(300.0) for _ in range(3)),
       "power_200k": min(power_run(200_000) for _ in range(3))}
if not JIT_ENABLED:
    rng = np.random.default_rng(0)
    t0 = np.sort(rng.uniform(0, 300e6, 200_000)); t1 = t0 + rng.uniform(5, 3000, 200_000)
    p = rng.uniform(1e-9, 1e-6, 200_000); out = np.zeros(300_000)
    t = time.perf_counter(); K.accumulate_power_numpy(t0, t1, p, 1000.0, out)
    res["power_200k_vectorised"] = time.perf_counter() - t
print(json.dumps(res))
"""


def run(no_jit: bool) -> dict:
    env = dict(os.environ)
    env.pop("ICS5GSIM_NO_JIT", None)
    if no_jit:
        env["ICS5GSIM_NO_JIT"] = "1"
    out = subprocess.run([sys.executable, "-c", CHILD], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main() -> None:
    t = time.perf_counter()
    jit, py = run(False), run(True)
    print(f"{'kernel':<24}{'numba (s)':>12}{'python (s)':>12}{'speedup':>10}")
    for key in ("plant_300s", "power_200k"):
        print(f"{key:<24}{jit[key]:>12.4f}{py[key]:>12.4f}{py[key] / jit[key]:>10.1f}")
    if "power_200k_vectorised" in py:
        print(f"{'power_200k (numpy)':<24}{'':>12}{py['power_200k_vectorised']:>12.4f}")
    print(f"total wall {time.perf_counter() - t:.1f}s")


if __name__ == "__main__":
    main()
