import math

import numpy as np
import pytest

from ics5gsim import kernels as K
from ics5gsim.plant import Plant, PlantParams, merge_spill_events


def torricelli_drain_time(area, cda, h0, g):
    # dh/dt = -(CdA/A) sqrt(2 g h)  =>  t = (A/CdA) sqrt(2 h0 / g)
    return area / cda * math.sqrt(2 * h0 / g)


def torricelli_level(area, cda, h0, g, t):
    r = math.sqrt(h0) - cda / area * math.sqrt(g / 2) * t
    return max(r, 0.0) ** 2


def draining_plant(**kw):
    p = PlantParams(sensor_noise=0.0, **kw)
    plant = Plant(p)
    plant.set_actuator("output_valve", "open")
    return plant


def test_drain_time_matches_closed_form():
    plant = draining_plant()
    p = plant.p
    expected = torricelli_drain_time(p.tank_area, p.orifice_cda, p.initial_level, p.g)
    while plant.level > 0 and plant.elapsed() < 2 * expected:
        plant.step(0.001)
    assert plant.level == 0.0
    assert abs(plant.elapsed() - expected) / expected < 0.005


@pytest.mark.parametrize("t", [10.0, 50.0, 90.0])
def test_level_trajectory_matches_closed_form(t):
    plant = draining_plant()
    p = plant.p
    plant.advance_to(int(t * 1e9))
    want = torricelli_level(p.tank_area, p.orifice_cda, p.initial_level, p.g, t)
    assert plant.level == pytest.approx(want, rel=5e-3)


def test_mass_conserved_every_tick_during_overflow_and_spill():
    plant = draining_plant(initial_level=9.9)
    plant.set_actuator("input_valve", "open")
    plant.advance_to(120_000_000_000)
    assert plant.max_mass_residual < 1e-9
    tank, bottled, spilled = plant.volumes()
    assert tank == pytest.approx(plant.p.tank_capacity, abs=1e-6)
    assert spilled > 0


def test_bottle_window_and_capture():
    p = PlantParams()
    assert K.bottle_under_valve(p.first_bottle_gap, p.bottle_spacing, p.first_bottle_gap, p.capture_window, 10) == 0
    edge = p.first_bottle_gap + p.bottle_spacing + p.capture_window
    assert K.bottle_under_valve(edge, p.bottle_spacing, p.first_bottle_gap, p.capture_window, 10) == 1
    assert K.bottle_under_valve(edge + 0.01, p.bottle_spacing, p.first_bottle_gap, p.capture_window, 10) == -1
    assert K.bottle_under_valve(0.0, p.bottle_spacing, p.first_bottle_gap, p.capture_window, 10) == -1


def test_bottle_fill_is_captured_then_overflows():
    plant = Plant(PlantParams(sensor_noise=0.0, first_bottle_gap=0.0))
    assert plant.true_value("bottle_present") == 1.0
    plant.set_actuator("output_valve", "open")
    plant.advance_to(2_000_000_000)
    assert plant.spilled_total == 0.0
    assert plant.true_value("bottle_level") > 0.15
    plant.advance_to(10_000_000_000)
    assert plant.true_value("bottle_level") == pytest.approx(plant.p.bottle_capacity)
    assert plant.spill_report().count == 1


def test_spill_merge_rule():
    ev = [(0.0, 1.0, 0.1), (1.9, 2.0, 0.1), (3.0, 3.5, 0.2), (5.0, 5.1, 0.1)]
    merged = merge_spill_events(ev, 1.0)
    assert [(a, b) for a, b, _ in merged] == [(0.0, 2.0), (3.0, 3.5), (5.0, 5.1)]
    assert sum(v for *_, v in merged) == pytest.approx(0.5)


def test_kernel_merges_spills_closer_than_gap():
    plant = Plant(PlantParams(sensor_noise=0.0, first_bottle_gap=50.0))
    for on, off in [(0.0, 0.2), (0.9, 1.0), (3.0, 3.1)]:
        plant.advance_to(int(on * 1e9))
        plant.set_actuator("output_valve", "open")
        plant.advance_to(int(off * 1e9))
        plant.set_actuator("output_valve", "close")
    plant.advance_to(5_000_000_000)
    rep = plant.spill_report()
    assert rep.count == 2
    assert rep.events[0][0] == 0.0 and rep.events[0][1] == pytest.approx(1.0)


def test_belt_modes_and_stationary_time():
    plant = Plant(PlantParams(sensor_noise=0.0))
    plant.set_actuator("belt", "half")
    plant.advance_to(2_000_000_000)
    assert plant.belt_position == pytest.approx(1.0)
    plant.set_actuator("belt", "stop")
    plant.advance_to(3_000_000_000)
    assert plant.stationary_time == pytest.approx(1.0)
    assert [m for _, m in plant.mode_log] == ["stopped", "half", "stopped"]


def test_invalid_commands_are_rejected_without_state_change():
    plant = Plant()
    assert plant.set_actuator("belt", "reverse") is False
    assert plant.set_actuator("output_valve", 1) is False
    assert plant.set_actuator("pump", "open") is False
    assert len(plant.rejected) == 3
    assert plant.speed == 0.0 and not plant.output_open


def test_step_requires_configured_tick():
    with pytest.raises(ValueError):
        Plant().step(0.002)


def test_sensor_noise_bounded_and_booleans_exact():
    plant = Plant(PlantParams(sensor_noise=0.01))
    vals = [plant.read_sensor("tank_level").value for _ in range(500)]
    assert max(vals) <= 5.0 * 1.01 and min(vals) >= 5.0 * 0.99
    assert len(set(vals)) > 100
    assert plant.read_sensor("leak").value == 0.0
    with pytest.raises(KeyError):
        plant.read_sensor("humidity")


def test_negative_level_and_area_rejected():
    with pytest.raises(ValueError):
        Plant(PlantParams(orifice_cda=0.0))


def test_jit_and_python_paths_agree():
    kernel = getattr(K.advance_plant, "py_func", K.advance_plant)
    out = []
    for fn in (K.advance_plant, kernel):
        plant = Plant(PlantParams(sensor_noise=0.0, first_bottle_gap=0.2))
        st, pr = plant.st.copy(), plant.pr.copy()
        st[K.OUT_OPEN] = 1.0
        st[K.IN_OPEN] = 1.0
        st[K.SPEED] = 0.5
        fills, fs = plant.fills.copy(), plant.fill_start.copy()
        ev, n = plant.spill_ev.copy(), plant.ev_n.copy()
        fn(st, pr, fills, fs, ev, n, 20_000)
        out.append((st, fills, ev[: n[0]]))
    for a, b in zip(*out):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)
