"""Hot numeric loops. Compiled with numba unless ICS5GSIM_NO_JIT is set."""

import math

import numpy as np

from ._jit import njit

# float state vector layout
H, BELT_POS, SPILLED, SPEED, IN_OPEN, OUT_OPEN, LEAK, TICK, STOPPED_TICKS, MAX_RESIDUAL, BOTTLED = range(11)
N_STATE = 11

# parameter vector layout
P_DT, P_AREA, P_CAP, P_QIN, P_CDA, P_G, P_BOTTLE_CAP, P_SPACING, P_WINDOW, P_GAP, P_MERGE_TICKS = range(11)
N_PARAM = 11


@njit(cache=True)
def bottle_under_valve(belt_pos, spacing, gap, window, n_bottles):
    """Index of the bottle inside the capture window, or -1."""
    k = int(math.floor((belt_pos - gap) / spacing + 0.5))
    if k < 0 or k >= n_bottles:
        return -1
    if abs(belt_pos - gap - k * spacing) <= window:
        return k
    return -1


@njit(cache=True)
def advance_plant(st, pr, fills, fill_start, spill_ev, ev_n, n_ticks):
    """Explicit-Euler integration of the tank/belt/bottle plant for ``n_ticks`` ticks.

    Spill intervals are written to ``spill_ev`` rows ``(start_tick, end_tick, volume)``;
    an interval starting within ``P_MERGE_TICKS`` of the previous one extends it.
    """
    dt = pr[P_DT]
    area = pr[P_AREA]
    cap_vol = pr[P_CAP] * area
    nb = fills.shape[0]
    for _ in range(n_ticks):
        h = st[H]
        tick = st[TICK]
        k = bottle_under_valve(st[BELT_POS], pr[P_SPACING], pr[P_GAP], pr[P_WINDOW], nb)

        v_in = pr[P_QIN] * dt if st[IN_OPEN] > 0.5 else 0.0
        v_out = 0.0
        if st[OUT_OPEN] > 0.5 and h > 0.0:
            v_out = pr[P_CDA] * math.sqrt(2.0 * pr[P_G] * h) * dt
        tank_vol = h * area
        if v_out > tank_vol + v_in:
            v_out = tank_vol + v_in
        vol = tank_vol + v_in - v_out
        overflow = 0.0
        if vol > cap_vol:
            overflow = vol - cap_vol
            vol = cap_vol

        captured = 0.0
        if k >= 0:
            room = pr[P_BOTTLE_CAP] - fills[k]
            if room < 0.0:
                room = 0.0
            captured = v_out if v_out < room else room
            fills[k] += captured
            if captured > 0.0 and fill_start[k] < 0:
                fill_start[k] = tick
        spill = v_out - captured + overflow

        h_new = vol / area
        residual = abs(v_in - (h_new * area - tank_vol) - captured - spill)
        if residual > st[MAX_RESIDUAL]:
            st[MAX_RESIDUAL] = residual

        st[H] = h_new
        st[BOTTLED] += captured
        if spill > 0.0:
            st[SPILLED] += spill
            st[LEAK] = 1.0
            n = ev_n[0]
            if n > 0 and tick - spill_ev[n - 1, 1] < pr[P_MERGE_TICKS]:
                spill_ev[n - 1, 1] = tick + 1.0
                spill_ev[n - 1, 2] += spill
            elif n < spill_ev.shape[0]:
                spill_ev[n, 0] = tick
                spill_ev[n, 1] = tick + 1.0
                spill_ev[n, 2] = spill
                ev_n[0] = n + 1
        else:
            st[LEAK] = 0.0

        st[BELT_POS] += st[SPEED] * dt
        if st[SPEED] == 0.0:
            st[STOPPED_TICKS] += 1.0
        st[TICK] = tick + 1.0


@njit(cache=True)
def accumulate_power(t0_us, t1_us, p_mw, bin_us, out):
    """Add each emission's energy share to fixed-width power bins (mW, time-averaged)."""
    nbins = out.shape[0]
    for i in range(t0_us.shape[0]):
        a = t0_us[i]
        b = t1_us[i]
        if b <= a:
            continue
        j0 = int(a // bin_us)
        j1 = int((b - 1) // bin_us)
        for j in range(j0, j1 + 1):
            if j < 0 or j >= nbins:
                continue
            lo = a if a > j * bin_us else j * bin_us
            hi = b if b < (j + 1) * bin_us else (j + 1) * bin_us
            out[j] += p_mw[i] * (hi - lo) / bin_us


def accumulate_power_numpy(t0_us, t1_us, p_mw, bin_us, out):
    """Vectorised equivalent of :func:`accumulate_power` (emissions must start at t >= 0)."""
    ok = t1_us > t0_us
    t0, t1, p = t0_us[ok], t1_us[ok], p_mw[ok]
    j0 = (t0 // bin_us).astype(np.int64)
    j1 = ((t1 - 1) // bin_us).astype(np.int64)
    nb = out.shape[0]
    size = int(max(nb, j1.max() + 2 if j1.size else 0))
    acc = np.zeros(size)
    edge = (j0 + 1) * bin_us
    np.add.at(acc, j0, p * (np.minimum(t1, edge) - t0) / bin_us)
    split = j1 > j0
    np.add.at(acc, j1[split], (p * (t1 - j1 * bin_us) / bin_us)[split])
    full = j1 > j0 + 1
    diff = np.zeros(size + 1)
    np.add.at(diff, j0[full] + 1, p[full])
    np.add.at(diff, j1[full], -p[full])
    acc += np.cumsum(diff)[:size]
    out += acc[:nb]
    return out
