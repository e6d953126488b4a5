import numpy as np
import pytest

from ics5gsim import adversary as adv
from ics5gsim import modbus as mb
from ics5gsim import runner, scenario
from ics5gsim.engine import NS_PER_S
from ics5gsim.network import R_ADU, R_ATTEMPT, R_DST, R_ORIGIN, R_SRC, R_T_RECV, R_T_SEND


def test_attack_spec_window_is_half_open():
    s = adv.AttackSpec("dos", 10.0, 5.0)
    assert not s.active(int(9.999 * NS_PER_S))
    assert s.active(10 * NS_PER_S) and s.active(int(14.999 * NS_PER_S))
    assert not s.active(15 * NS_PER_S)
    assert not adv.AttackSpec("dos", 10.0, 0.0).active(10 * NS_PER_S)


def test_five_variant_schedule_needs_increasing_durations():
    specs = adv.five_variant_schedule("mitm", [1, 2, 3, 4, 5], [1, 2, 3, 4, 5])
    assert [s.end for s in specs] == [2, 4, 6, 8, 10]
    with pytest.raises(ValueError):
        adv.five_variant_schedule("mitm", [1, 2, 3], [3, 2, 1])


def test_injection_fire_times():
    specs = [adv.AttackSpec("injection", 100.0, 5.0), adv.AttackSpec("injection", 200.0, 0.0)]
    assert adv.injection_fire_times(specs, 2.5) == [100.0, 102.5]
    assert adv.injection_fire_times(specs, 2.0, 1.0) == [101.0, 103.0]


def test_jam_intervals():
    assert adv.jam_intervals(0, 4, 4, 20) == [(0, 4), (8, 12), (16, 20)]
    assert adv.jam_intervals(5, 10, 0, 20) == [(5, 15)]
    assert adv.jam_intervals(0, 0, 5, 20) == []


def test_infer_cycle_square_wave():
    dt = 1e-3
    t = np.arange(0, 600, dt)
    rng = np.random.default_rng(0)
    x = np.where((t % 5.2) < 1.8, -60.0, -75.0) + rng.normal(0, 3.0, t.size)
    got = adv.infer_cycle(x, dt)
    assert got == pytest.approx(5.2, rel=0.01)


def test_infer_cycle_white_noise():
    rng = np.random.default_rng(1)
    for seed in range(5):
        x = np.random.default_rng(seed).normal(-80, 2, 300_000)
        assert adv.infer_cycle(x) == adv.NO_CYCLE
    assert adv.infer_cycle(np.full(10_000, -84.0)) == adv.NO_CYCLE
    assert adv.infer_cycle(rng.normal(size=3)) == adv.NO_CYCLE


def _world(kind, starts, durations, duration_s=60.0, dep="wired"):
    cfg = scenario.load(deployment=dep, duration_s=duration_s,
                        attack={"kind": kind, "starts": starts, "durations": durations}, operator_script=[])
    return runner.simulate(cfg)


def test_suppression_drops_everything_from_plc_a_inside_windows_only():
    windows = [(10.0, 13.0), (30.0, 38.0)]
    w = _world("suppression", [a for a, _ in windows], [b - a for a, b in windows])
    base = _world("none", [], [])

    def inside(t):
        return any(a * NS_PER_S <= t < b * NS_PER_S for a, b in windows)

    rec = w.net.records
    delivered_in = [r for r in rec if r[R_SRC] == "plc_a" and r[R_T_RECV] is not None and inside(r[R_T_SEND])]
    assert delivered_in == []
    # PLC_A keeps producing the same first attempts outside the windows as in the benign run
    def firsts(records):
        return sum(1 for r in records if r[R_SRC] == "plc_a" and r[R_ATTEMPT] == 1 and not inside(r[R_T_SEND]))
    assert firsts(rec) == pytest.approx(firsts(base.net.records), rel=0.01)
    assert any(e[2] == "timeout" for e in w.trace.events)


def test_mitm_rewrites_stops_into_valid_frames():
    w = _world("mitm", [5.0], [30.0])
    forged = [r for r in w.net.records if r[R_ORIGIN] == "attack_mitm"]
    assert forged
    for r in forged:
        frame = mb.decode(r[R_ADU])
        assert isinstance(frame.pdu, mb.WriteSingleRegister)
        assert frame.pdu.value == mb.BELT_VALUES["normal"]
    outside = [r for r in w.net.records if r[R_SRC] == "plc_b" and r[R_DST] == "motion"
               and not 5 * NS_PER_S <= r[R_T_SEND] < 35 * NS_PER_S]
    assert all(r[R_ORIGIN] != "attack_mitm" for r in outside)
    stops = [e for e in w.trace.events if e[2] == "actuate" and e[1] == "motion" and e[3]["cmd"] == "stopped"
             and 5 * NS_PER_S <= e[0] < 35 * NS_PER_S]
    assert stops == []


def test_dos_rate_and_identity():
    w = _world("dos", [5.0], [2.0], duration_s=10.0)
    flood = [r for r in w.net.records if r[R_ORIGIN] == "attack_dos" and r[R_ATTEMPT] == 1]
    assert len(flood) == pytest.approx(2.0 * w.cfg.attack.dos_rate, abs=1)
    assert {r[R_SRC] for r in flood} == {"hmi"}
    assert all(mb.decode(r[R_ADU]).transaction_id >= 0x8000 for r in flood)


def test_injection_replays_captured_frame_bytes():
    w = _world("injection", [20.0], [5.0], duration_s=30.0)
    inj = [r for r in w.net.records if r[R_ORIGIN] == "attack_injection"]
    assert inj
    legit = {r[R_ADU] for r in w.net.records if r[R_SRC] == "plc_a" and r[R_DST] == "output_valve"
             and r[R_ORIGIN] != "attack_injection"}
    assert all(r[R_ADU] in legit for r in inj)
    assert mb.decode(inj[0][R_ADU]).pdu.on is True
